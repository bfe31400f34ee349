#include "dattr/watermark.hpp"

#include <algorithm>
#include <cmath>

#include "dattr/keygen.hpp"
#include "dattr/metrics.hpp"

namespace dattr::watermark {

void GammaSearchConfig::validate() const {
  if (!(delta > 0.0 && delta <= 1.0)) throw Error(Errc::InvalidDelta, "delta must be in (0, 1]");
  if (!(alpha > 1.0)) throw Error(Errc::InvalidArgument, "alpha must be > 1");
  if (mc_samples < 1) throw Error(Errc::InvalidArgument, "mc_samples must be >= 1");
  if (max_rounds < 1) throw Error(Errc::InvalidArgument, "max_rounds must be >= 1");
}

std::size_t draw(const WatermarkModel& model, Rng& rng, VecView out) {
  const DatasetHandle& base = *model.base;
  const std::size_t idx = rng.index(base.size());
  const auto x0 = base.row(idx);
  const auto& phi = model.key.vector;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = x0[k] + model.gamma * phi[k];
  model.noise->add_sample(rng, out);
  if (model.clamp) {
    const double lo = *base.clamp_lo(), hi = *base.clamp_hi();
    for (double& v : out) v = std::clamp(v, lo, hi);
  }
  return idx;
}

void for_each_sample(const WatermarkModel& model, std::size_t n, std::uint64_t seed,
                     const std::function<void(std::size_t, ConstVecView, VecView)>& fn) {
  Rng rng(seed);
  Vec x(model.base->dim());
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t idx = draw(model, rng, x);
    fn(s, model.base->row(idx), x);
  }
}

Vec sample(const WatermarkModel& model, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error(Errc::InvalidArgument, "sample needs n >= 1");
  const std::size_t d = model.base->dim();
  Vec out(n * d);
  Rng rng(seed);
  for (std::size_t s = 0; s < n; ++s) draw(model, rng, VecView(out.data() + s * d, d));
  return out;
}

namespace {

GammaSearchResult search(const Key& key, const DatasetPtr& dataset, const NoisePtr& noise,
                         const postproc::PostProcessSpec* attack, const GammaSearchConfig& cfg, bool clamp) {
  cfg.validate();
  if (!dataset) throw Error(Errc::InvalidArgument, "gamma search needs a dataset");
  if (attack) {
    attack->validate();
    if (!attack->is_identity() && !dataset->layout())
      throw Error(Errc::InvalidArgument, "post-process attacks need an image layout on the dataset");
  }
  const auto stats = keygen::compliance_stats(key, *dataset);
  Key k = key;
  k.d_max = stats.d_max;
  k.d_min = stats.d_min;
  k.compliance_fraction = stats.compliance_fraction;
  if (!(stats.d_max > 0.0)) throw Error(Errc::InvalidArgument, "key has d_max = 0 on this dataset");

  const double target = 1.0 - cfg.delta;
  GammaSearchResult result{0.0, WatermarkModel(dataset, k, stats.d_max, noise, clamp), 0, {}, {}};
  double gamma = stats.d_max;
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    WatermarkModel model(dataset, k, gamma, noise, clamp);
    const std::uint64_t round_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(round));
    double d = metrics::distinguishability(model, *dataset, cfg.mc_samples, round_seed);
    bool pass = d >= target;
    if (attack && !attack->is_identity()) {
      // attacked draws reuse the raw draws of this round
      d = metrics::distinguishability(model, *dataset, cfg.mc_samples, round_seed, attack);
      pass = pass && d >= target;
    }
    result.gamma_history.push_back(gamma);
    result.d_history.push_back(d);
    if (pass) {
      result.gamma = gamma;
      result.model = std::move(model);
      result.rounds = round;
      return result;
    }
    gamma *= cfg.alpha;
  }
  throw Error(Errc::Diverged, "gamma search did not reach D >= 1 - delta within " +
                                  std::to_string(cfg.max_rounds) + " rounds (last gamma " +
                                  std::to_string(result.gamma_history.back()) + ")");
}

}  // namespace

GammaSearchResult gamma_search(const Key& key, const DatasetPtr& dataset, const NoisePtr& noise,
                               const GammaSearchConfig& cfg, bool clamp) {
  return search(key, dataset, noise, nullptr, cfg, clamp);
}

GammaSearchResult robust_gamma_search(const Key& key, const DatasetPtr& dataset, const NoisePtr& noise,
                                      const postproc::PostProcessSpec& attack, const GammaSearchConfig& cfg,
                                      bool clamp) {
  return search(key, dataset, noise, &attack, cfg, clamp);
}

NoiseModel fit_noise(std::size_t m, std::size_t d, ConstVecView residuals, bool keep_empirical) {
  if (m < 2) throw Error(Errc::TooFewSamples, "fit_noise needs at least 2 residuals");
  require_same_dim(residuals.size(), m * d, "fit_noise");
  NoiseModel emp = NoiseModel::empirical(m, d, Vec(residuals.begin(), residuals.end()));
  if (keep_empirical) return emp;
  return NoiseModel::diagonal(emp.mean(), emp.variance());
}

Vec paired_residuals(const WatermarkModel& model, std::size_t m, std::uint64_t seed) {
  const std::size_t d = model.base->dim();
  Vec out(m * d);
  for_each_sample(model, m, seed, [&](std::size_t s, ConstVecView x0, VecView x) {
    for (std::size_t k = 0; k < d; ++k) out[s * d + k] = x[k] - x0[k] - model.gamma * model.key.vector[k];
  });
  return out;
}

}  // namespace dattr::watermark
