#pragma once

// Domain types shared by every module: keys, datasets, the additive noise
// model of a watermarked generator, and the seeded random streams used by
// all stochastic routines.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dattr/error.hpp"

namespace dattr {

using Vec = std::vector<double>;
using ConstVecView = std::span<const double>;
using VecView = std::span<double>;

// ---------------------------------------------------------------------------
// vector math

double dot(ConstVecView a, ConstVecView b);
double norm2(ConstVecView a);
void require_same_dim(std::size_t a, std::size_t b, const char* what);

// ---------------------------------------------------------------------------
// random streams

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Child seed for an independent stream; identical (seed, stream) pairs always
// produce the same child.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_a, std::uint64_t stream_b) noexcept;

// mt19937_64 with hand-written transforms so the same seed gives the same
// draws regardless of the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                 // [0, 1)
  double uniform(double lo, double hi);
  std::size_t index(std::size_t n);  // uniform in [0, n)
  double normal();                  // standard normal, Marsaglia polar method
  bool coin() { return (engine_() >> 63) != 0; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// image layout (flat vector <-> H x W x C image, channel-interleaved)

struct ImageLayout {
  int height = 0;
  int width = 0;
  int channels = 1;
  double lo = -1.0;
  double hi = 1.0;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  void validate() const;
};

// ---------------------------------------------------------------------------
// dataset

class DatasetHandle {
 public:
  // samples is row-major n x d
  DatasetHandle(std::string name, std::size_t n, std::size_t d, Vec samples,
                std::optional<double> clamp_lo = std::nullopt,
                std::optional<double> clamp_hi = std::nullopt);

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  ConstVecView row(std::size_t i) const { return {samples_.data() + i * d_, d_}; }
  const Vec& samples() const { return samples_; }
  const std::string& name() const { return name_; }
  std::uint64_t fingerprint() const { return fingerprint_; }

  std::optional<double> clamp_lo() const { return clamp_lo_; }
  std::optional<double> clamp_hi() const { return clamp_hi_; }
  bool has_clamp() const { return clamp_lo_.has_value(); }

  const std::optional<ImageLayout>& layout() const { return layout_; }
  void set_layout(const ImageLayout& layout);

  const std::vector<int>& labels() const { return labels_; }
  void set_labels(std::vector<int> labels);

  Vec mean() const;

 private:
  std::string name_;
  std::size_t n_;
  std::size_t d_;
  Vec samples_;
  std::optional<double> clamp_lo_;
  std::optional<double> clamp_hi_;
  std::uint64_t fingerprint_ = 0;
  std::optional<ImageLayout> layout_;
  std::vector<int> labels_;
};

using DatasetPtr = std::shared_ptr<const DatasetHandle>;

// FNV-1a over a canonical little-endian serialization of (n, d, samples).
std::uint64_t dataset_fingerprint(std::size_t n, std::size_t d, ConstVecView samples);

// ---------------------------------------------------------------------------
// key

struct Key {
  int id = 0;
  Vec vector;  // unit l2 norm
  double d_max = 0.0;
  double d_min = 0.0;
  double compliance_fraction = 0.0;
  std::int64_t created_at = 0;

  std::size_t dim() const { return vector.size(); }

  // Normalizes v; throws InvalidArgument on a zero or non-finite vector.
  static Key unit(Vec v, int id = 0);
};

// +1 iff key . x > 0; ties count as authentic (-1).
int classify(const Key& key, ConstVecView x);

// ---------------------------------------------------------------------------
// noise model  eps ~ N(mu, Sigma), or resampled empirical residuals

class NoiseModel {
 public:
  enum class Kind { Diagonal, Full, Empirical };

  static NoiseModel zero(std::size_t d);
  static NoiseModel isotropic(std::size_t d, double sigma);
  static NoiseModel diagonal(Vec mean, Vec variance);
  // d <= 4096; covariance row-major d x d, symmetric PSD
  static NoiseModel full(Vec mean, Vec covariance);
  // residuals row-major m x d, resampled with replacement by sample()
  static NoiseModel empirical(std::size_t m, std::size_t d, Vec residuals);

  Kind kind() const { return kind_; }
  std::size_t dim() const { return d_; }
  const Vec& mean() const { return mean_; }
  const Vec& variance() const { return diag_; }  // diagonal of Sigma (all kinds)
  const Vec& covariance() const { return full_; }
  std::size_t residual_count() const { return m_; }
  const Vec& residuals() const { return residuals_; }

  bool is_gaussian() const { return kind_ != Kind::Empirical; }
  bool is_zero() const;

  double projected_variance(ConstVecView phi) const;
  double mean_projection(ConstVecView phi) const { return dot(mean_, phi); }

  // Adds one draw of eps into out.
  void add_sample(Rng& rng, VecView out) const;

 private:
  NoiseModel() = default;

  Kind kind_ = Kind::Diagonal;
  std::size_t d_ = 0;
  std::size_t m_ = 0;
  Vec mean_;
  Vec diag_;
  Vec full_;
  Vec chol_;  // lower-triangular factor of full_
  Vec residuals_;
};

using NoisePtr = std::shared_ptr<const NoiseModel>;

inline constexpr std::size_t kMaxFullCovarianceDim = 4096;

// sigma(phi) = sqrt(phi' Sigma phi); for empirical residuals the sample std of
// phi'(eps_i - mean).
double projected_std(const NoiseModel& noise, const Key& key);

// ---------------------------------------------------------------------------
// watermarked user-end model:  x = x0 + gamma * phi + eps  (optionally clipped)

struct WatermarkModel {
  WatermarkModel(DatasetPtr base, Key key, double gamma, NoisePtr noise, bool clamp);

  DatasetPtr base;
  Key key;
  double gamma;
  NoisePtr noise;
  bool clamp;
};

struct MetricsReport {
  double distinguishability = 0.0;
  std::optional<double> attributability;
  double perturbation_norm = 0.0;
  std::size_t samples_used = 0;
  std::uint64_t seed = 0;
};

}  // namespace dattr
