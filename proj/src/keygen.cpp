#include "dattr/keygen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace dattr::keygen {

void KeygenConfig::validate() const {
  if (max_iters < 1) throw Error(Errc::InvalidArgument, "max_iters must be >= 1");
  if (batch_size < 1) throw Error(Errc::InvalidArgument, "batch_size must be >= 1");
  if (!(step_size > 0.0)) throw Error(Errc::InvalidArgument, "step_size must be > 0");
  if (!(step_decay > 0.0 && step_decay <= 1.0)) throw Error(Errc::InvalidArgument, "step_decay must be in (0, 1]");
  if (!(tol > 0.0)) throw Error(Errc::InvalidArgument, "tol must be > 0");
  if (!(compliance_threshold > 0.0 && compliance_threshold <= 1.0))
    throw Error(Errc::InvalidArgument, "compliance_threshold must be in (0, 1]");
  if (!(orthogonality_weight >= 0.0)) throw Error(Errc::InvalidArgument, "orthogonality_weight must be >= 0");
  if (eval_every < 1) throw Error(Errc::InvalidArgument, "eval_every must be >= 1");
}

ComplianceStats compliance_stats(ConstVecView phi, const DatasetHandle& dataset) {
  require_same_dim(phi.size(), dataset.dim(), "compliance_stats");
  ComplianceStats s;
  s.d_min = std::numeric_limits<double>::infinity();
  std::size_t negative = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const double p = dot(phi, dataset.row(i));
    if (p < 0.0) ++negative;
    s.d_max = std::max(s.d_max, std::abs(p));
    s.d_min = std::min(s.d_min, std::abs(p));
  }
  s.compliance_fraction = static_cast<double>(negative) / static_cast<double>(dataset.size());
  return s;
}

ComplianceStats compliance_stats(const Key& key, const DatasetHandle& dataset) {
  return compliance_stats(ConstVecView(key.vector), dataset);
}

Key with_stats(Key key, const DatasetHandle& dataset) {
  const auto s = compliance_stats(key, dataset);
  key.d_max = s.d_max;
  key.d_min = s.d_min;
  key.compliance_fraction = s.compliance_fraction;
  return key;
}

double hinge_objective(ConstVecView phi, const DatasetHandle& dataset) {
  require_same_dim(phi.size(), dataset.dim(), "hinge_objective");
  double s = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) s += std::max(1.0 + dot(phi, dataset.row(i)), 0.0);
  return s / static_cast<double>(dataset.size());
}

double key_objective(ConstVecView phi, const DatasetHandle& dataset, std::span<const Key> existing,
                     double orthogonality_weight) {
  double penalty = 0.0;
  for (const Key& k : existing) penalty += std::max(dot(k.vector, phi), 0.0);
  return hinge_objective(phi, dataset) + orthogonality_weight * penalty;
}

bool hinge_free(ConstVecView phi, const DatasetHandle& dataset) {
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (1.0 + dot(phi, dataset.row(i)) > 0.0) return false;
  }
  return true;
}

namespace {

Vec random_unit(std::size_t d, Rng& rng) {
  Vec v(d);
  double n = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    n = norm2(v);
  } while (n == 0.0);
  for (double& x : v) x /= n;
  return v;
}

Vec initial_point(const DatasetHandle& dataset, const KeygenConfig& cfg, Rng& rng) {
  if (cfg.init == InitPolicy::NegativeMean) {
    Vec m = dataset.mean();
    const double n = norm2(m);
    if (n > 0.0) {
      for (double& x : m) x = -x / n;
      return m;
    }
  }
  return random_unit(dataset.dim(), rng);
}

bool normalize_in_place(Vec& v) {
  const double n = norm2(v);
  if (!(n > 0.0) || !std::isfinite(n)) return false;
  for (double& x : v) x /= n;
  return true;
}

}  // namespace

Key generate_key(const DatasetHandle& dataset, std::span<const Key> existing, const KeygenConfig& cfg,
                 KeygenTrace* trace) {
  cfg.validate();
  const std::size_t d = dataset.dim();
  for (const Key& k : existing) require_same_dim(k.dim(), d, "generate_key existing key");

  Rng rng(cfg.seed);
  Vec phi = initial_point(dataset, cfg, rng);

  auto objective = [&](const Vec& v) { return key_objective(v, dataset, existing, cfg.orthogonality_weight); };

  // Best iterate: iterates meeting the compliance threshold rank ahead of
  // those that do not, then by full objective.
  auto meets = [&](const Vec& v) { return compliance_stats(v, dataset).compliance_fraction >= cfg.compliance_threshold; };
  Vec best = phi;
  double best_obj = objective(phi);
  bool best_meets = meets(phi);
  double last_obj = best_obj;
  if (trace) {
    trace->objective.clear();
    trace->objective.push_back(best_obj);
    trace->iterations = 0;
  }

  Vec grad(d);
  double step = cfg.step_size;
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  int iter = 0;
  while (iter < cfg.max_iters && best_obj > 0.0) {
    ++iter;
    std::fill(grad.begin(), grad.end(), 0.0);
    std::size_t active = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const auto x = dataset.row(rng.index(dataset.size()));
      if (1.0 + dot(phi, x) > 0.0) {
        for (std::size_t k = 0; k < d; ++k) grad[k] += x[k];
        ++active;
      }
    }
    if (active > 0) {
      for (double& g : grad) g /= static_cast<double>(batch);
    }
    for (const Key& k : existing) {
      if (dot(k.vector, phi) > 0.0) {
        for (std::size_t j = 0; j < d; ++j) grad[j] += cfg.orthogonality_weight * k.vector[j];
      }
    }
    // project onto the tangent space of the sphere at phi
    const double radial = dot(grad, phi);
    for (std::size_t j = 0; j < d; ++j) grad[j] -= radial * phi[j];
    double gnorm = norm2(grad);
    if (!(gnorm > 1e-12) && radial > 0.0) {
      // stationary on the sphere but not optimal (e.g. phi equals an existing key)
      grad = random_unit(d, rng);
      const double r = dot(grad, phi);
      for (std::size_t j = 0; j < d; ++j) grad[j] -= r * phi[j];
      gnorm = norm2(grad);
    }
    if (gnorm > 0.0) {
      // normalized step: step_size is an angular length on the sphere
      Vec next = phi;
      for (std::size_t j = 0; j < d; ++j) next[j] -= step * grad[j] / gnorm;
      if (normalize_in_place(next)) phi = std::move(next);
    }
    step *= cfg.step_decay;

    if (iter % cfg.eval_every == 0 || iter == cfg.max_iters) {
      const double obj = objective(phi);
      if (trace) trace->objective.push_back(obj);
      const bool ok = meets(phi);
      if ((ok && !best_meets) || (ok == best_meets && obj < best_obj)) {
        best_obj = obj;
        best_meets = ok;
        best = phi;
      }
      const double change = std::abs(last_obj - obj);
      last_obj = obj;
      if (obj == 0.0 || change <= cfg.tol * std::max(1.0, std::abs(obj))) break;
    }
  }
  if (trace) trace->iterations = iter;

  Key key = with_stats(Key::unit(std::move(best)), dataset);
  key.id = static_cast<int>(existing.size()) + 1;
  if (key.compliance_fraction < cfg.compliance_threshold) {
    throw Error(Errc::NonCompliant, "generated key compliance " + std::to_string(key.compliance_fraction) +
                                        " below threshold " + std::to_string(cfg.compliance_threshold));
  }
  return key;
}

std::vector<Key> generate_keys(const DatasetHandle& dataset, int count, const KeygenConfig& cfg) {
  std::vector<Key> keys;
  keys.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    KeygenConfig c = cfg;
    c.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    keys.push_back(generate_key(dataset, keys, c));
  }
  return keys;
}

std::vector<double> gram_matrix(std::span<const Key> keys) {
  const std::size_t n = keys.size();
  if (n == 0) throw Error(Errc::InvalidArgument, "gram_matrix needs at least one key");
  std::vector<double> g(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    require_same_dim(keys[i].dim(), keys[0].dim(), "gram_matrix");
    for (std::size_t j = i; j < n; ++j) {
      const double v = (i == j) ? dot(keys[i].vector, keys[i].vector) : dot(keys[i].vector, keys[j].vector);
      g[i * n + j] = v;
      g[j * n + i] = v;
    }
  }
  return g;
}

double max_off_diagonal(std::span<const Key> keys) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < keys.size(); ++i)
    for (std::size_t j = i + 1; j < keys.size(); ++j) m = std::max(m, dot(keys[i].vector, keys[j].vector));
  return m;
}

Key make_rotated_key(const Key& base, const Key& reference, double angle_deg) {
  require_same_dim(base.dim(), reference.dim(), "make_rotated_key");
  if (!(angle_deg > 0.0 && angle_deg < 180.0))
    throw Error(Errc::InvalidArgument, "angle_deg must be in (0, 180)");
  const Key ref = Key::unit(reference.vector);
  Vec ortho = base.vector;
  const double proj = dot(ortho, ref.vector);
  for (std::size_t k = 0; k < ortho.size(); ++k) ortho[k] -= proj * ref.vector[k];
  const double on = norm2(ortho);
  if (on <= 1e-12 * std::max(1.0, norm2(base.vector)))
    throw Error(Errc::DegenerateSpan, "base is parallel to reference");
  for (double& x : ortho) x /= on;
  // second Gram-Schmidt pass keeps the inner product with reference at rounding level
  const double residual = dot(ortho, ref.vector);
  for (std::size_t k = 0; k < ortho.size(); ++k) ortho[k] -= residual * ref.vector[k];
  const double on2 = norm2(ortho);
  for (double& x : ortho) x /= on2;

  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  Vec v(ortho.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = c * ref.vector[k] + s * ortho[k];
  Key out = Key::unit(std::move(v), base.id);
  out.created_at = base.created_at;
  return out;
}

namespace {

using Mat = std::vector<double>;

// G^{-1/2} for a symmetric positive definite G via cyclic Jacobi rotations.
Mat inverse_sqrt_spd(Mat a, std::size_t n) {
  Mat v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  Mat out(n * n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double lambda = a[k * n + k];
    if (!(lambda > 1e-9)) throw Error(Errc::DegenerateSpan, "keys are linearly dependent");
    const double w = 1.0 / std::sqrt(lambda);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += w * v[i * n + k] * v[j * n + k];
  }
  return out;
}

}  // namespace

std::vector<Key> make_equiangular_keys(std::span<const Key> orthogonal_keys, double angle_deg) {
  const std::size_t n = orthogonal_keys.size();
  if (n == 0) throw Error(Errc::InvalidArgument, "make_equiangular_keys needs at least one key");
  if (!(angle_deg > 0.0 && angle_deg <= 90.0))
    throw Error(Errc::InvalidArgument, "angle_deg must be in (0, 90]");
  const std::size_t d = orthogonal_keys[0].dim();
  // symmetric orthonormalization: the closest orthonormal set to the input
  const Mat w = inverse_sqrt_spd(gram_matrix(orthogonal_keys), n);
  std::vector<Vec> u(n, Vec(d, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < d; ++k) u[i][k] += w[j * n + i] * orthogonal_keys[j].vector[k];

  // psi_i = u_i + t * sum_k u_k  has  cos = (2t + n t^2) / (1 + 2t + n t^2)
  const double c = std::cos(angle_deg * std::numbers::pi / 180.0);
  const double q = c / (1.0 - c);
  const double nn = static_cast<double>(n);
  const double t = (std::sqrt(1.0 + nn * q) - 1.0) / nn;
  Vec sum(d, 0.0);
  for (const Vec& ui : u)
    for (std::size_t k = 0; k < d; ++k) sum[k] += ui[k];

  std::vector<Key> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec v(d);
    for (std::size_t k = 0; k < d; ++k) v[k] = u[i][k] + t * sum[k];
    Key key = Key::unit(std::move(v), orthogonal_keys[i].id);
    key.created_at = orthogonal_keys[i].created_at;
    out.push_back(std::move(key));
  }
  return out;
}

}  // namespace dattr::keygen
