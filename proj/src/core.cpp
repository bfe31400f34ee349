#include "dattr/core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace dattr {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonCompliant: return "NonCompliant";
    case Errc::DegenerateSpan: return "DegenerateSpan";
    case Errc::InvalidDelta: return "InvalidDelta";
    case Errc::ZeroDenominator: return "ZeroDenominator";
    case Errc::Diverged: return "Diverged";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::ClampUnsupported: return "ClampUnsupported";
    case Errc::KeyModelMismatch: return "KeyModelMismatch";
    case Errc::BadQuality: return "BadQuality";
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case Errc::CorruptFile: return "CorruptFile";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

double dot(ConstVecView a, ConstVecView b) {
  require_same_dim(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(ConstVecView a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(Errc::DimensionMismatch,
                std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream ^ 0x5851f42d4c957f2dULL));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_a,
                          std::uint64_t stream_b) noexcept {
  return derive_seed(derive_seed(seed, stream_a), stream_b);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw Error(Errc::InvalidArgument, "Rng::index on empty range");
  // rejection sampling removes modulo bias
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

// ---------------------------------------------------------------------------

void ImageLayout::validate() const {
  if (height <= 0 || width <= 0) throw Error(Errc::InvalidArgument, "image layout needs positive size");
  if (channels != 1 && channels != 3) throw Error(Errc::InvalidArgument, "image layout channels must be 1 or 3");
  if (!(lo < hi)) throw Error(Errc::InvalidArgument, "image value range must satisfy lo < hi");
}

std::uint64_t dataset_fingerprint(std::size_t n, std::size_t d, ConstVecView samples) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  };
  feed(n);
  feed(d);
  for (double v : samples) {
    if (v == 0.0) v = 0.0;  // fold -0.0
    feed(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

DatasetHandle::DatasetHandle(std::string name, std::size_t n, std::size_t d, Vec samples,
                             std::optional<double> clamp_lo, std::optional<double> clamp_hi)
    : name_(std::move(name)),
      n_(n),
      d_(d),
      samples_(std::move(samples)),
      clamp_lo_(clamp_lo),
      clamp_hi_(clamp_hi) {
  if (n_ == 0 || d_ == 0) throw Error(Errc::InvalidArgument, "dataset needs n >= 1 and d >= 1");
  if (samples_.size() != n_ * d_) throw Error(Errc::DimensionMismatch, "dataset sample buffer is not n x d");
  if (clamp_lo_.has_value() != clamp_hi_.has_value())
    throw Error(Errc::InvalidArgument, "clamp bounds must be given together");
  for (double v : samples_) {
    if (!std::isfinite(v)) throw Error(Errc::InvalidArgument, "dataset contains non-finite values");
  }
  if (clamp_lo_) {
    if (!(*clamp_lo_ < *clamp_hi_)) throw Error(Errc::InvalidArgument, "clamp_lo must be < clamp_hi");
    for (double v : samples_) {
      if (v < *clamp_lo_ || v > *clamp_hi_)
        throw Error(Errc::InvalidArgument, "dataset sample outside clamp bounds");
    }
  }
  fingerprint_ = dataset_fingerprint(n_, d_, samples_);
}

void DatasetHandle::set_layout(const ImageLayout& layout) {
  layout.validate();
  if (layout.size() != d_) throw Error(Errc::DimensionMismatch, "image layout does not match dataset dim");
  layout_ = layout;
}

void DatasetHandle::set_labels(std::vector<int> labels) {
  if (!labels.empty() && labels.size() != n_) throw Error(Errc::DimensionMismatch, "label count != sample count");
  labels_ = std::move(labels);
}

Vec DatasetHandle::mean() const {
  Vec m(d_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    auto r = row(i);
    for (std::size_t k = 0; k < d_; ++k) m[k] += r[k];
  }
  for (double& v : m) v /= static_cast<double>(n_);
  return m;
}

// ---------------------------------------------------------------------------

Key Key::unit(Vec v, int id) {
  const double n = norm2(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(Errc::InvalidArgument, "key vector must be nonzero and finite");
  for (double& x : v) x /= n;
  Key k;
  k.id = id;
  k.vector = std::move(v);
  return k;
}

int classify(const Key& key, ConstVecView x) {
  require_same_dim(key.dim(), x.size(), "classify");
  return dot(key.vector, x) > 0.0 ? 1 : -1;
}

// ---------------------------------------------------------------------------

NoiseModel NoiseModel::zero(std::size_t d) { return diagonal(Vec(d, 0.0), Vec(d, 0.0)); }

NoiseModel NoiseModel::isotropic(std::size_t d, double sigma) {
  if (!(sigma >= 0.0)) throw Error(Errc::InvalidArgument, "noise sigma must be >= 0");
  return diagonal(Vec(d, 0.0), Vec(d, sigma * sigma));
}

NoiseModel NoiseModel::diagonal(Vec mean, Vec variance) {
  require_same_dim(mean.size(), variance.size(), "NoiseModel::diagonal");
  if (mean.empty()) throw Error(Errc::InvalidArgument, "noise model needs d >= 1");
  for (double v : variance) {
    if (!(v >= 0.0)) throw Error(Errc::InvalidArgument, "diagonal covariance entries must be >= 0");
  }
  NoiseModel nm;
  nm.kind_ = Kind::Diagonal;
  nm.d_ = mean.size();
  nm.mean_ = std::move(mean);
  nm.diag_ = std::move(variance);
  return nm;
}

NoiseModel NoiseModel::full(Vec mean, Vec covariance) {
  const std::size_t d = mean.size();
  if (d == 0) throw Error(Errc::InvalidArgument, "noise model needs d >= 1");
  if (d > kMaxFullCovarianceDim) throw Error(Errc::InvalidArgument, "full covariance limited to d <= 4096");
  require_same_dim(covariance.size(), d * d, "NoiseModel::full");
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double a = covariance[i * d + j], b = covariance[j * d + i];
      if (std::abs(a - b) > 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}))
        throw Error(Errc::InvalidArgument, "covariance must be symmetric");
    }
  }
  // Cholesky with semidefinite tolerance: columns with non-positive pivots are
  // dropped; a clearly negative pivot means the matrix is not PSD.
  Vec L(d * d, 0.0);
  double scale = 0.0;
  for (std::size_t i = 0; i < d; ++i) scale = std::max(scale, std::abs(covariance[i * d + i]));
  const double tol = 1e-10 * std::max(scale, 1e-300) * static_cast<double>(d);
  for (std::size_t j = 0; j < d; ++j) {
    double s = covariance[j * d + j];
    for (std::size_t k = 0; k < j; ++k) s -= L[j * d + k] * L[j * d + k];
    if (s < -tol) throw Error(Errc::InvalidArgument, "covariance is not positive semidefinite");
    if (s <= tol) continue;
    const double ljj = std::sqrt(s);
    L[j * d + j] = ljj;
    for (std::size_t i = j + 1; i < d; ++i) {
      double t = covariance[i * d + j];
      for (std::size_t k = 0; k < j; ++k) t -= L[i * d + k] * L[j * d + k];
      L[i * d + j] = t / ljj;
    }
  }
  NoiseModel nm;
  nm.kind_ = Kind::Full;
  nm.d_ = d;
  nm.diag_.resize(d);
  for (std::size_t i = 0; i < d; ++i) nm.diag_[i] = covariance[i * d + i];
  nm.mean_ = std::move(mean);
  nm.full_ = std::move(covariance);
  nm.chol_ = std::move(L);
  return nm;
}

NoiseModel NoiseModel::empirical(std::size_t m, std::size_t d, Vec residuals) {
  if (m < 2) throw Error(Errc::TooFewSamples, "empirical noise needs at least 2 residuals");
  if (d == 0) throw Error(Errc::InvalidArgument, "noise model needs d >= 1");
  require_same_dim(residuals.size(), m * d, "NoiseModel::empirical");
  NoiseModel nm;
  nm.kind_ = Kind::Empirical;
  nm.d_ = d;
  nm.m_ = m;
  nm.mean_.assign(d, 0.0);
  nm.diag_.assign(d, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < d; ++k) nm.mean_[k] += residuals[i * d + k];
  for (double& v : nm.mean_) v /= static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const double c = residuals[i * d + k] - nm.mean_[k];
      nm.diag_[k] += c * c;
    }
  }
  for (double& v : nm.diag_) v /= static_cast<double>(m - 1);
  nm.residuals_ = std::move(residuals);
  return nm;
}

bool NoiseModel::is_zero() const {
  if (kind_ == Kind::Empirical) {
    return std::all_of(residuals_.begin(), residuals_.end(), [](double v) { return v == 0.0; });
  }
  const bool zero_mean = std::all_of(mean_.begin(), mean_.end(), [](double v) { return v == 0.0; });
  const bool zero_var = std::all_of(diag_.begin(), diag_.end(), [](double v) { return v == 0.0; });
  return zero_mean && zero_var;
}

double NoiseModel::projected_variance(ConstVecView phi) const {
  require_same_dim(phi.size(), d_, "projected_variance");
  switch (kind_) {
    case Kind::Diagonal: {
      double s = 0.0;
      for (std::size_t k = 0; k < d_; ++k) s += phi[k] * phi[k] * diag_[k];
      return s;
    }
    case Kind::Full: {
      double s = 0.0;
      for (std::size_t i = 0; i < d_; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < d_; ++j) row += full_[i * d_ + j] * phi[j];
        s += phi[i] * row;
      }
      return std::max(s, 0.0);
    }
    case Kind::Empirical: {
      const double mu = dot(mean_, phi);
      double s = 0.0;
      for (std::size_t i = 0; i < m_; ++i) {
        const double p = dot(ConstVecView(residuals_.data() + i * d_, d_), phi) - mu;
        s += p * p;
      }
      return s / static_cast<double>(m_ - 1);
    }
  }
  return 0.0;
}

void NoiseModel::add_sample(Rng& rng, VecView out) const {
  require_same_dim(out.size(), d_, "NoiseModel::add_sample");
  switch (kind_) {
    case Kind::Diagonal:
      for (std::size_t k = 0; k < d_; ++k) {
        if (diag_[k] > 0.0) {
          out[k] += mean_[k] + std::sqrt(diag_[k]) * rng.normal();
        } else {
          out[k] += mean_[k];
        }
      }
      break;
    case Kind::Full: {
      Vec z(d_);
      for (double& v : z) v = rng.normal();
      for (std::size_t i = 0; i < d_; ++i) {
        double s = mean_[i];
        for (std::size_t j = 0; j <= i; ++j) s += chol_[i * d_ + j] * z[j];
        out[i] += s;
      }
      break;
    }
    case Kind::Empirical: {
      const std::size_t r = rng.index(m_);
      for (std::size_t k = 0; k < d_; ++k) out[k] += residuals_[r * d_ + k];
      break;
    }
  }
}

double projected_std(const NoiseModel& noise, const Key& key) {
  return std::sqrt(std::max(noise.projected_variance(key.vector), 0.0));
}

// ---------------------------------------------------------------------------

WatermarkModel::WatermarkModel(DatasetPtr base_, Key key_, double gamma_, NoisePtr noise_, bool clamp_)
    : base(std::move(base_)), key(std::move(key_)), gamma(gamma_), noise(std::move(noise_)), clamp(clamp_) {
  if (!base) throw Error(Errc::InvalidArgument, "watermark model needs a base dataset");
  if (!noise) throw Error(Errc::InvalidArgument, "watermark model needs a noise model");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw Error(Errc::InvalidArgument, "gamma must be finite and >= 0");
  require_same_dim(key.dim(), base->dim(), "watermark key vs base");
  require_same_dim(noise->dim(), base->dim(), "watermark noise vs base");
  if (clamp && !base->has_clamp()) throw Error(Errc::InvalidArgument, "clamping requested but dataset has no clamp bounds");
}

}  // namespace dattr
