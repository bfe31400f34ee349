#include "dattr/registry.hpp"

#include <openssl/sha.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <cmath>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

namespace dattr::registry {

using nlohmann::json;

KeyRegistry::KeyRegistry(std::size_t dim, std::uint64_t dataset_fingerprint, double delta)
    : dim_(dim), fingerprint_(dataset_fingerprint), delta_(delta) {
  if (dim_ == 0) throw Error(Errc::InvalidArgument, "registry dim must be >= 1");
  if (!(delta_ > 0.0 && delta_ <= 1.0)) throw Error(Errc::InvalidDelta, "delta must be in (0, 1]");
}

KeyRegistry KeyRegistry::append(Key key, std::optional<double> gamma, std::optional<double> noise_sigma,
                                std::optional<double> noise_mean_projection) const {
  require_same_dim(key.dim(), dim_, "registry append");
  KeyRegistry next = *this;
  key.id = static_cast<int>(entries_.size()) + 1;
  next.entries_.push_back(Entry{std::move(key), gamma, noise_sigma, noise_mean_projection, false});
  return next;
}

const Entry& KeyRegistry::entry(int id) const {
  if (id < 1 || static_cast<std::size_t>(id) > entries_.size())
    throw Error(Errc::InvalidArgument, "no key with id " + std::to_string(id));
  return entries_[static_cast<std::size_t>(id - 1)];
}

KeyRegistry KeyRegistry::with_model(int id, double gamma, std::optional<double> noise_sigma,
                                    std::optional<double> noise_mean_projection) const {
  entry(id);
  KeyRegistry next = *this;
  auto& e = next.entries_[static_cast<std::size_t>(id - 1)];
  e.gamma = gamma;
  e.noise_sigma = noise_sigma;
  e.noise_mean_projection = noise_mean_projection;
  return next;
}

KeyRegistry KeyRegistry::revoke(int id) const {
  entry(id);
  KeyRegistry next = *this;
  next.entries_[static_cast<std::size_t>(id - 1)].revoked = true;
  return next;
}

KeyRegistry KeyRegistry::with_capacity(const CapacitySummary& summary) const {
  KeyRegistry next = *this;
  next.capacity_ = summary;
  return next;
}

std::vector<Key> KeyRegistry::keys() const {
  std::vector<Key> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.key);
  return out;
}

std::vector<Key> KeyRegistry::active_keys() const {
  std::vector<Key> out;
  for (const auto& e : entries_)
    if (!e.revoked) out.push_back(e.key);
  return out;
}

bool operator==(const Entry& a, const Entry& b) {
  return a.key.id == b.key.id && a.key.vector == b.key.vector && a.key.d_max == b.key.d_max &&
         a.key.d_min == b.key.d_min && a.key.compliance_fraction == b.key.compliance_fraction &&
         a.key.created_at == b.key.created_at && a.gamma == b.gamma && a.noise_sigma == b.noise_sigma &&
         a.noise_mean_projection == b.noise_mean_projection && a.revoked == b.revoked;
}

bool operator==(const KeyRegistry& a, const KeyRegistry& b) {
  const bool cap_eq = a.capacity_.has_value() == b.capacity_.has_value() &&
                      (!a.capacity_ || (a.capacity_->count == b.capacity_->count &&
                                        a.capacity_->min_pairwise_margin == b.capacity_->min_pairwise_margin &&
                                        a.capacity_->failure_reason == b.capacity_->failure_reason));
  return a.version_ == b.version_ && a.dim_ == b.dim_ && a.fingerprint_ == b.fingerprint_ && a.delta_ == b.delta_ &&
         a.entries_ == b.entries_ && cap_eq;
}

const char* verdict_name(AttributionVerdict::Kind kind) {
  switch (kind) {
    case AttributionVerdict::Kind::Model: return "model";
    case AttributionVerdict::Kind::Authentic: return "authentic";
    case AttributionVerdict::Kind::Ambiguous: return "ambiguous";
  }
  return "unknown";
}

AttributionVerdict attribute(const KeyRegistry& registry, ConstVecView x) {
  require_same_dim(x.size(), registry.dim(), "attribute");
  AttributionVerdict v;
  v.scores.reserve(registry.size());
  int positives = 0;
  int owner = 0;
  for (const auto& e : registry.entries()) {
    const double s = dot(e.key.vector, x);
    v.scores.push_back(s);
    if (!e.revoked && s > 0.0) {
      ++positives;
      owner = e.key.id;
    }
  }
  if (positives == 0) {
    v.verdict = AttributionVerdict::Kind::Authentic;
  } else if (positives == 1) {
    v.verdict = AttributionVerdict::Kind::Model;
    v.model_id = owner;
  } else {
    v.verdict = AttributionVerdict::Kind::Ambiguous;
  }
  return v;
}

// ---------------------------------------------------------------------------
// encoding helpers

std::string sha256_hex(const std::string& data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  std::ostringstream os;
  for (unsigned char c : digest) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(c);
  return os.str();
}

std::string fingerprint_hex(std::uint64_t fp) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fp;
  return os.str();
}

std::uint64_t parse_fingerprint_hex(const std::string& hex) {
  if (hex.empty() || hex.size() > 16) throw Error(Errc::CorruptFile, "bad dataset fingerprint '" + hex + "'");
  std::uint64_t v = 0;
  for (char c : hex) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw Error(Errc::CorruptFile, "bad dataset fingerprint '" + hex + "'");
    v = (v << 4) | static_cast<std::uint64_t>(d);
  }
  return v;
}

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string encode_vector_b64(const Vec& v) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(v.size() * 8);
  for (double x : v) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
  return base64_encode(bytes);
}

Vec decode_vector_b64(const std::string& s) {
  const auto bytes = base64_decode(s);
  if (bytes.size() % 8 != 0) throw Error(Errc::CorruptFile, "base64 vector length is not a multiple of 8");
  Vec v(bytes.size() / 8);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[i * 8 + static_cast<std::size_t>(b)]} << (8 * b);
    v[i] = std::bit_cast<double>(bits);
  }
  return v;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* field) {
  if (!j.contains(field) || j.at(field).is_null()) return std::nullopt;
  return j.at(field).get<double>();
}

json content_json(const KeyRegistry& r, VectorEncoding encoding) {
  json j;
  j["version"] = r.version();
  j["dim"] = r.dim();
  j["dataset_fingerprint"] = fingerprint_hex(r.dataset_fingerprint());
  j["delta"] = r.delta();
  j["vector_encoding"] = encoding == VectorEncoding::Base64 ? "base64" : "decimal";
  json entries = json::array();
  for (const auto& e : r.entries()) {
    json je;
    je["id"] = e.key.id;
    if (encoding == VectorEncoding::Base64) {
      je["vector"] = encode_vector_b64(e.key.vector);
    } else {
      je["vector"] = e.key.vector;
    }
    je["d_max"] = e.key.d_max;
    je["d_min"] = e.key.d_min;
    je["compliance_fraction"] = e.key.compliance_fraction;
    je["created_at"] = e.key.created_at;
    je["gamma"] = optional_number(e.gamma);
    je["noise_sigma"] = optional_number(e.noise_sigma);
    je["noise_mean_projection"] = optional_number(e.noise_mean_projection);
    je["revoked"] = e.revoked;
    entries.push_back(std::move(je));
  }
  j["entries"] = std::move(entries);
  if (r.capacity()) {
    const auto& c = *r.capacity();
    json jc;
    jc["count"] = c.count;
    // +inf (fewer than two keys) is not representable in JSON
    jc["min_pairwise_margin"] = std::isfinite(c.min_pairwise_margin) ? json(c.min_pairwise_margin) : json(nullptr);
    jc["failure_reason"] = c.failure_reason ? json(std::string(capacity::failure_name(*c.failure_reason))) : json(nullptr);
    j["capacity"] = std::move(jc);
  }
  return j;
}

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = std::uint32_t{bytes[i]} << 16;
    if (i + 1 < bytes.size()) v |= std::uint32_t{bytes[i + 1]} << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += (i + 1 < bytes.size()) ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw Error(Errc::CorruptFile, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int q[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + static_cast<std::size_t>(k)];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        q[k] = 0;
        ++pad;
      } else {
        q[k] = val(c);
        if (q[k] < 0 || pad > 0) throw Error(Errc::CorruptFile, "invalid base64 character");
      }
    }
    const std::uint32_t v = (static_cast<std::uint32_t>(q[0]) << 18) | (static_cast<std::uint32_t>(q[1]) << 12) |
                            (static_cast<std::uint32_t>(q[2]) << 6) | static_cast<std::uint32_t>(q[3]);
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

std::string to_json(const KeyRegistry& registry, VectorEncoding encoding) {
  json j = content_json(registry, encoding);
  j["sha256"] = sha256_hex(j.dump());
  return j.dump(2) + "\n";
}

KeyRegistry from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("registry is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::CorruptFile, "registry root must be an object");
  if (!j.contains("version") || !j.at("version").is_number_integer())
    throw Error(Errc::CorruptFile, "registry has no integer version");
  const int version = j.at("version").get<int>();
  if (version != kSchemaVersion)
    throw Error(Errc::SchemaVersionMismatch,
                "registry schema version " + std::to_string(version) + ", expected " + std::to_string(kSchemaVersion));
  if (!j.contains("sha256") || !j.at("sha256").is_string()) throw Error(Errc::CorruptFile, "registry has no checksum");
  const std::string stored = j.at("sha256").get<std::string>();
  j.erase("sha256");
  if (sha256_hex(j.dump()) != stored) throw Error(Errc::CorruptFile, "registry checksum mismatch");

  try {
    const auto dim = j.at("dim").get<std::size_t>();
    KeyRegistry r(dim, parse_fingerprint_hex(j.at("dataset_fingerprint").get<std::string>()),
                  j.at("delta").get<double>());
    const bool b64 = j.value("vector_encoding", std::string("decimal")) == "base64";
    int expected_id = 1;
    for (const auto& je : j.at("entries")) {
      Key k;
      k.id = je.at("id").get<int>();
      if (k.id != expected_id) throw Error(Errc::CorruptFile, "registry ids must be dense from 1");
      k.vector = b64 ? decode_vector_b64(je.at("vector").get<std::string>()) : je.at("vector").get<Vec>();
      require_same_dim(k.vector.size(), dim, "registry entry");
      k.d_max = je.at("d_max").get<double>();
      k.d_min = je.at("d_min").get<double>();
      k.compliance_fraction = je.at("compliance_fraction").get<double>();
      k.created_at = je.at("created_at").get<std::int64_t>();
      r = r.append(std::move(k), read_optional(je, "gamma"), read_optional(je, "noise_sigma"),
                   read_optional(je, "noise_mean_projection"));
      if (je.value("revoked", false)) r = r.revoke(expected_id);
      ++expected_id;
    }
    if (j.contains("capacity")) {
      const auto& jc = j.at("capacity");
      CapacitySummary c;
      c.count = jc.at("count").get<int>();
      const auto m = read_optional(jc, "min_pairwise_margin");
      c.min_pairwise_margin = m ? *m : std::numeric_limits<double>::infinity();
      if (jc.contains("failure_reason") && !jc.at("failure_reason").is_null())
        c.failure_reason = capacity::parse_failure(jc.at("failure_reason").get<std::string>());
      r = r.with_capacity(c);
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("registry schema: ") + e.what());
  }
}

void save(const KeyRegistry& registry, const std::string& path, VectorEncoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write registry '" + path + "'");
  out << to_json(registry, encoding);
  if (!out) throw Error(Errc::Io, "write to '" + path + "' failed");
}

KeyRegistry load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open registry '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace dattr::registry
