#pragma once

// Closed-form sufficient conditions for distinguishability and attributability
// of linearly watermarked models.

#include <span>
#include <vector>

#include "dattr/core.hpp"

namespace dattr::theory {

struct SufficiencyReport {
  enum class Form { AtLeast, AtMost };  // satisfied iff lhs >= rhs / lhs <= rhs

  double lhs = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
  double delta = 0.0;
  Form form = Form::AtMost;
};

// sqrt(log(1/delta^2)); throws InvalidDelta outside (0, 1].
double tail_factor(double delta);

// (1 + d_max) * phi; throws NonCompliant unless phi'x < 0 for every x.
Vec prop1_perturbation(const Key& key, const DatasetHandle& dataset);

// gamma >= d_max + sigma * sqrt(log(1/delta^2)) - phi'mu
double theorem1_min_gamma(double d_max, double sigma, double mean_projection, double delta);
double theorem1_min_gamma(const Key& key, const DatasetHandle& dataset, const NoiseModel& noise, double delta);

// Reports lhs = gamma against rhs = theorem1_min_gamma (AtLeast form).
SufficiencyReport check_theorem1(double gamma, const Key& key, const DatasetHandle& dataset,
                                 const NoiseModel& noise, double delta);

// a(phi, phi') = -1 + (d_max' + d_min' - 2 phi''mu) / (sigma' sqrt(log(1/delta^2)) + d_max' - phi''mu),
// all quantities belonging to the other key phi'.
double theorem2_rhs(double d_max_other, double d_min_other, double sigma_other, double mean_projection_other,
                    double delta);
double theorem2_rhs(const Key& key, const Key& other, const DatasetHandle& dataset, const NoiseModel& noise_other,
                    double delta);

struct PairReport {
  std::size_t i = 0;
  std::size_t j = 0;
  SufficiencyReport report;  // lhs = phi_i' phi_j, rhs = a(phi_i, phi_j)
};

struct PairwiseResult {
  std::vector<PairReport> pairs;   // every ordered pair i != j
  std::vector<double> min_rhs;     // per key i: min over j != i of a(phi_i, phi_j)
  std::size_t violations = 0;
};

// noises[i] belongs to keys[i]. Fewer than two keys yields an empty result.
PairwiseResult check_pairwise_condition(std::span<const Key> keys, std::span<const NoiseModel> noises,
                                        const DatasetHandle& dataset, double delta);

// Same check from precomputed per-key statistics (d_max/d_min on the key,
// sigma and phi'mu supplied per key).
PairwiseResult check_pairwise_condition(std::span<const Key> keys, std::span<const double> sigmas,
                                        std::span<const double> mean_projections, double delta);

// max(0, 1 - N delta)
double attributability_lower_bound(int n_models, double delta);

}  // namespace dattr::theory
