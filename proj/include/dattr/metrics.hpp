#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dattr/core.hpp"
#include "dattr/postproc.hpp"

namespace dattr::metrics {

struct Distinguishability {
  double value = 0.0;          // (positive_rate + negative_rate) / 2
  double positive_rate = 0.0;  // model samples labelled +1
  double negative_rate = 0.0;  // dataset samples labelled -1
};

// Monte-Carlo estimate with n model draws and n dataset draws. When attack is
// non-null it is applied to the model draws before classification.
Distinguishability distinguishability_parts(const WatermarkModel& model, const DatasetHandle& dataset,
                                            std::size_t n, std::uint64_t seed,
                                            const postproc::PostProcessSpec* attack = nullptr);
double distinguishability(const WatermarkModel& model, const DatasetHandle& dataset, std::size_t n,
                          std::uint64_t seed, const postproc::PostProcessSpec* attack = nullptr);

// Exact D under Gaussian noise without clamping:
// mean over x0 of Phi((phi'x0 + gamma + phi'mu) / sigma), plus the dataset's
// negative rate. Throws ClampUnsupported for clamped models.
double distinguishability_analytic(const WatermarkModel& model, const DatasetHandle& dataset);

double normal_cdf(double x);

struct Attributability {
  double value = 0.0;
  std::vector<double> per_model;      // one-hot success rate of each model
  std::vector<double> positive_rate;  // own-key positive rate of each model
};

// Model i (built on keys[i]) succeeds on a draw x when keys[i]'x > 0 and
// keys[j]'x < 0 for every j != i. Throws KeyModelMismatch on mismatched input.
Attributability attributability_parts(std::span<const WatermarkModel> models, std::span<const Key> keys,
                                      std::size_t n, std::uint64_t seed,
                                      const postproc::PostProcessSpec* attack = nullptr);
double attributability(std::span<const WatermarkModel> models, std::span<const Key> keys, std::size_t n,
                       std::uint64_t seed, const postproc::PostProcessSpec* attack = nullptr);

// Per-sample decision shared with the registry: index of the single key with a
// positive projection and all others strictly negative, or -1.
int one_hot_owner(std::span<const Key> keys, ConstVecView x);

// || mean over n paired draws of (x - x0) ||
double perturbation_norm(const WatermarkModel& model, std::size_t n, std::uint64_t seed);

MetricsReport evaluate(const WatermarkModel& model, const DatasetHandle& dataset, std::size_t n,
                       std::uint64_t seed);

// Stream of the attack applied to draw s of model i.
std::uint64_t attack_stream(std::size_t model_index, std::size_t sample_index);

}  // namespace dattr::metrics
