#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dattr/core.hpp"
#include "dattr/postproc.hpp"

namespace dattr::watermark {

struct GammaSearchConfig {
  double delta = 0.01;
  double alpha = 1.1;
  std::size_t mc_samples = 5000;
  int max_rounds = 60;
  std::uint64_t seed = 0;

  void validate() const;
};

// Writes one draw x0 + gamma phi + eps (clipped when model.clamp) into out and
// returns the index of the base point x0.
std::size_t draw(const WatermarkModel& model, Rng& rng, VecView out);

// n draws, row-major n x d.
Vec sample(const WatermarkModel& model, std::size_t n, std::uint64_t seed);

// Streams n draws through fn(index, base_row, sample) without materializing them.
void for_each_sample(const WatermarkModel& model, std::size_t n, std::uint64_t seed,
                     const std::function<void(std::size_t, ConstVecView, VecView)>& fn);

struct GammaSearchResult {
  double gamma = 0.0;
  WatermarkModel model;
  int rounds = 0;
  std::vector<double> gamma_history;  // gamma tried in each round
  std::vector<double> d_history;      // empirical D in each round (attacked D for robust search)
};

// gamma starts at d_max(phi) and is multiplied by alpha until the empirical
// distinguishability reaches 1 - delta. Throws Diverged after max_rounds.
GammaSearchResult gamma_search(const Key& key, const DatasetPtr& dataset, const NoisePtr& noise,
                               const GammaSearchConfig& cfg, bool clamp = false);

// Same loop, but a round passes only when D is at least 1 - delta both on raw
// samples and on attacked samples T(x). Raw D uses the plain search's seed
// stream, so the result is never below gamma_search's for the same seed.
GammaSearchResult robust_gamma_search(const Key& key, const DatasetPtr& dataset, const NoisePtr& noise,
                                      const postproc::PostProcessSpec& attack, const GammaSearchConfig& cfg,
                                      bool clamp = false);

// Mean and diagonal sample covariance of residuals (row-major m x d), or the
// residuals themselves when keep_empirical. Throws TooFewSamples for m < 2.
NoiseModel fit_noise(std::size_t m, std::size_t d, ConstVecView residuals, bool keep_empirical = false);

// Residuals eps = G_phi(z) - G_0(z) - gamma phi from paired draws of a model;
// used to re-estimate the noise of a simulated model.
Vec paired_residuals(const WatermarkModel& model, std::size_t m, std::uint64_t seed);

}  // namespace dattr::watermark
