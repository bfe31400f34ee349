#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dattr/capacity.hpp"
#include "dattr/core.hpp"

namespace dattr::registry {

inline constexpr int kSchemaVersion = 1;

struct Entry {
  Key key;
  std::optional<double> gamma;
  std::optional<double> noise_sigma;            // sigma(phi) of the model's noise
  std::optional<double> noise_mean_projection;  // phi' mu
  bool revoked = false;
};

struct CapacitySummary {
  int count = 0;
  double min_pairwise_margin = 0.0;
  std::optional<capacity::FailureReason> failure_reason;
};

// Append-only key collection. Mutators return a new snapshot; readers of an
// existing snapshot are unaffected.
class KeyRegistry {
 public:
  KeyRegistry() = default;
  KeyRegistry(std::size_t dim, std::uint64_t dataset_fingerprint, double delta);

  int version() const { return version_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t dataset_fingerprint() const { return fingerprint_; }
  double delta() const { return delta_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const std::optional<CapacitySummary>& capacity() const { return capacity_; }

  // The appended key receives id size() + 1.
  KeyRegistry append(Key key, std::optional<double> gamma = std::nullopt,
                     std::optional<double> noise_sigma = std::nullopt,
                     std::optional<double> noise_mean_projection = std::nullopt) const;
  KeyRegistry with_model(int id, double gamma, std::optional<double> noise_sigma,
                         std::optional<double> noise_mean_projection) const;
  KeyRegistry revoke(int id) const;
  KeyRegistry with_capacity(const CapacitySummary& summary) const;

  const Entry& entry(int id) const;
  std::vector<Key> keys() const;         // all keys, id order
  std::vector<Key> active_keys() const;  // non-revoked keys

  friend bool operator==(const KeyRegistry& a, const KeyRegistry& b);

 private:
  int version_ = kSchemaVersion;
  std::size_t dim_ = 0;
  std::uint64_t fingerprint_ = 0;
  double delta_ = 0.01;
  std::vector<Entry> entries_;
  std::optional<CapacitySummary> capacity_;
};

bool operator==(const Entry& a, const Entry& b);

struct AttributionVerdict {
  enum class Kind { Model, Authentic, Ambiguous };

  Kind verdict = Kind::Authentic;
  std::optional<int> model_id;  // set iff verdict == Model
  std::vector<double> scores;   // phi_i' x, id order (revoked keys included)
};

const char* verdict_name(AttributionVerdict::Kind kind);

// One positive score -> Model(id); none -> Authentic; several -> Ambiguous.
// Zero projections and revoked keys never count as positive.
AttributionVerdict attribute(const KeyRegistry& registry, ConstVecView x);

enum class VectorEncoding { Decimal, Base64 };

std::string to_json(const KeyRegistry& registry, VectorEncoding encoding = VectorEncoding::Decimal);
KeyRegistry from_json(const std::string& text);

void save(const KeyRegistry& registry, const std::string& path, VectorEncoding encoding = VectorEncoding::Decimal);
KeyRegistry load(const std::string& path);

std::string sha256_hex(const std::string& data);
std::string fingerprint_hex(std::uint64_t fp);
std::uint64_t parse_fingerprint_hex(const std::string& hex);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace dattr::registry
