#include "dattr/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dattr/keygen.hpp"

namespace dattr::theory {

double tail_factor(double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw Error(Errc::InvalidDelta, "delta must be in (0, 1]");
  return std::sqrt(-2.0 * std::log(delta));
}

Vec prop1_perturbation(const Key& key, const DatasetHandle& dataset) {
  const auto stats = keygen::compliance_stats(key, dataset);
  if (stats.compliance_fraction < 1.0) throw Error(Errc::NonCompliant, "key is not data-compliant");
  Vec dx = key.vector;
  for (double& v : dx) v *= 1.0 + stats.d_max;
  return dx;
}

double theorem1_min_gamma(double d_max, double sigma, double mean_projection, double delta) {
  return d_max + sigma * tail_factor(delta) - mean_projection;
}

double theorem1_min_gamma(const Key& key, const DatasetHandle& dataset, const NoiseModel& noise, double delta) {
  require_same_dim(noise.dim(), key.dim(), "theorem1_min_gamma");
  const auto stats = keygen::compliance_stats(key, dataset);
  return theorem1_min_gamma(stats.d_max, projected_std(noise, key), noise.mean_projection(key.vector), delta);
}

SufficiencyReport check_theorem1(double gamma, const Key& key, const DatasetHandle& dataset,
                                 const NoiseModel& noise, double delta) {
  SufficiencyReport r;
  r.form = SufficiencyReport::Form::AtLeast;
  r.delta = delta;
  r.lhs = gamma;
  r.rhs = theorem1_min_gamma(key, dataset, noise, delta);
  r.satisfied = r.lhs >= r.rhs;
  return r;
}

double theorem2_rhs(double d_max_other, double d_min_other, double sigma_other, double mean_projection_other,
                    double delta) {
  const double denom = sigma_other * tail_factor(delta) + d_max_other - mean_projection_other;
  if (!(denom > 0.0)) throw Error(Errc::ZeroDenominator, "pairwise bound denominator is not positive");
  return -1.0 + (d_max_other + d_min_other - 2.0 * mean_projection_other) / denom;
}

double theorem2_rhs(const Key& key, const Key& other, const DatasetHandle& dataset, const NoiseModel& noise_other,
                    double delta) {
  require_same_dim(key.dim(), other.dim(), "theorem2_rhs");
  require_same_dim(noise_other.dim(), other.dim(), "theorem2_rhs noise");
  const auto stats = keygen::compliance_stats(other, dataset);
  return theorem2_rhs(stats.d_max, stats.d_min, projected_std(noise_other, other),
                      noise_other.mean_projection(other.vector), delta);
}

PairwiseResult check_pairwise_condition(std::span<const Key> keys, std::span<const double> sigmas,
                                        std::span<const double> mean_projections, double delta) {
  require_same_dim(keys.size(), sigmas.size(), "check_pairwise_condition sigmas");
  require_same_dim(keys.size(), mean_projections.size(), "check_pairwise_condition means");
  PairwiseResult out;
  const std::size_t n = keys.size();
  if (n < 2) {
    tail_factor(delta);
    return out;
  }
  // a(phi_i, phi_j) depends only on j
  std::vector<double> rhs_of(n);
  for (std::size_t j = 0; j < n; ++j) {
    rhs_of[j] = theorem2_rhs(keys[j].d_max, keys[j].d_min, sigmas[j], mean_projections[j], delta);
  }
  out.min_rhs.assign(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      PairReport p;
      p.i = i;
      p.j = j;
      p.report.form = SufficiencyReport::Form::AtMost;
      p.report.delta = delta;
      p.report.lhs = dot(keys[i].vector, keys[j].vector);
      p.report.rhs = rhs_of[j];
      p.report.satisfied = p.report.lhs <= p.report.rhs;
      if (!p.report.satisfied) ++out.violations;
      out.min_rhs[i] = std::min(out.min_rhs[i], rhs_of[j]);
      out.pairs.push_back(p);
    }
  }
  return out;
}

PairwiseResult check_pairwise_condition(std::span<const Key> keys, std::span<const NoiseModel> noises,
                                        const DatasetHandle& dataset, double delta) {
  require_same_dim(keys.size(), noises.size(), "check_pairwise_condition noises");
  std::vector<Key> fresh;
  std::vector<double> sigmas, means;
  fresh.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    fresh.push_back(keygen::with_stats(keys[i], dataset));
    sigmas.push_back(projected_std(noises[i], keys[i]));
    means.push_back(noises[i].mean_projection(keys[i].vector));
  }
  return check_pairwise_condition(fresh, sigmas, means, delta);
}

double attributability_lower_bound(int n_models, double delta) {
  if (n_models < 1) throw Error(Errc::InvalidArgument, "n_models must be >= 1");
  if (!(delta > 0.0 && delta <= 1.0)) throw Error(Errc::InvalidDelta, "delta must be in (0, 1]");
  return std::max(0.0, 1.0 - static_cast<double>(n_models) * delta);
}

}  // namespace dattr::theory
