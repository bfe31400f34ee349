#include "dattr/metrics.hpp"

#include <cmath>

#include "dattr/watermark.hpp"

namespace dattr::metrics {

namespace {

const ImageLayout& require_layout(const DatasetHandle& ds, const postproc::PostProcessSpec* attack) {
  if (!ds.layout()) throw Error(Errc::InvalidArgument, "post-process attacks need an image layout on the dataset");
  attack->validate();
  return *ds.layout();
}

bool active(const postproc::PostProcessSpec* attack) { return attack && !attack->is_identity(); }

}  // namespace

std::uint64_t attack_stream(std::size_t model_index, std::size_t sample_index) {
  return (static_cast<std::uint64_t>(model_index) << 32) ^ static_cast<std::uint64_t>(sample_index);
}

Distinguishability distinguishability_parts(const WatermarkModel& model, const DatasetHandle& dataset,
                                            std::size_t n, std::uint64_t seed,
                                            const postproc::PostProcessSpec* attack) {
  if (n < 1) throw Error(Errc::InvalidArgument, "distinguishability needs n >= 1");
  require_same_dim(model.key.dim(), dataset.dim(), "distinguishability");
  const ImageLayout* layout = active(attack) ? &require_layout(*model.base, attack) : nullptr;

  std::size_t positive = 0;
  watermark::for_each_sample(model, n, derive_seed(seed, 0), [&](std::size_t s, ConstVecView, VecView x) {
    if (layout) attack->apply_in_place(x, *layout, attack_stream(0, s));
    if (classify(model.key, x) == 1) ++positive;
  });

  Rng rng(derive_seed(seed, 1));
  std::size_t negative = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (classify(model.key, dataset.row(rng.index(dataset.size()))) == -1) ++negative;
  }
  Distinguishability out;
  out.positive_rate = static_cast<double>(positive) / static_cast<double>(n);
  out.negative_rate = static_cast<double>(negative) / static_cast<double>(n);
  out.value = 0.5 * (out.positive_rate + out.negative_rate);
  return out;
}

double distinguishability(const WatermarkModel& model, const DatasetHandle& dataset, std::size_t n,
                          std::uint64_t seed, const postproc::PostProcessSpec* attack) {
  return distinguishability_parts(model, dataset, n, seed, attack).value;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double distinguishability_analytic(const WatermarkModel& model, const DatasetHandle& dataset) {
  if (model.clamp) throw Error(Errc::ClampUnsupported, "analytic distinguishability assumes no clamping");
  if (!model.noise->is_gaussian()) throw Error(Errc::InvalidArgument, "analytic distinguishability needs Gaussian noise");
  require_same_dim(model.key.dim(), dataset.dim(), "distinguishability_analytic");
  const auto& phi = model.key.vector;
  const double sigma = projected_std(*model.noise, model.key);
  const double shift = model.gamma + model.noise->mean_projection(phi);
  const DatasetHandle& base = *model.base;
  double pos = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double m = dot(phi, base.row(i)) + shift;
    if (sigma > 0.0) {
      pos += normal_cdf(m / sigma);
    } else {
      pos += m > 0.0 ? 1.0 : 0.0;
    }
  }
  pos /= static_cast<double>(base.size());
  std::size_t neg = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dot(phi, dataset.row(i)) <= 0.0) ++neg;
  }
  return 0.5 * (pos + static_cast<double>(neg) / static_cast<double>(dataset.size()));
}

int one_hot_owner(std::span<const Key> keys, ConstVecView x) {
  int owner = -1;
  for (std::size_t j = 0; j < keys.size(); ++j) {
    if (dot(keys[j].vector, x) > 0.0) {
      if (owner >= 0) return -1;
      owner = static_cast<int>(j);
    }
  }
  return owner;
}

Attributability attributability_parts(std::span<const WatermarkModel> models, std::span<const Key> keys,
                                      std::size_t n, std::uint64_t seed,
                                      const postproc::PostProcessSpec* attack) {
  if (models.empty() || models.size() != keys.size())
    throw Error(Errc::KeyModelMismatch, "need one key per model");
  if (n < 1) throw Error(Errc::InvalidArgument, "attributability needs n >= 1");
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].key.vector != keys[i].vector)
      throw Error(Errc::KeyModelMismatch, "model " + std::to_string(i) + " is not built on key " + std::to_string(i));
  }
  Attributability out;
  out.per_model.resize(models.size());
  out.positive_rate.resize(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    const ImageLayout* layout = active(attack) ? &require_layout(*models[i].base, attack) : nullptr;
    std::size_t hits = 0, positive = 0;
    watermark::for_each_sample(models[i], n, derive_seed(seed, i), [&](std::size_t s, ConstVecView, VecView x) {
      if (layout) attack->apply_in_place(x, *layout, attack_stream(i, s));
      if (classify(keys[i], x) == 1) ++positive;
      if (one_hot_owner(keys, x) == static_cast<int>(i)) ++hits;
    });
    out.per_model[i] = static_cast<double>(hits) / static_cast<double>(n);
    out.positive_rate[i] = static_cast<double>(positive) / static_cast<double>(n);
    out.value += out.per_model[i];
  }
  out.value /= static_cast<double>(models.size());
  return out;
}

double attributability(std::span<const WatermarkModel> models, std::span<const Key> keys, std::size_t n,
                       std::uint64_t seed, const postproc::PostProcessSpec* attack) {
  return attributability_parts(models, keys, n, seed, attack).value;
}

double perturbation_norm(const WatermarkModel& model, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error(Errc::InvalidArgument, "perturbation_norm needs n >= 1");
  Vec mean(model.base->dim(), 0.0);
  watermark::for_each_sample(model, n, seed, [&](std::size_t, ConstVecView x0, VecView x) {
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += x[k] - x0[k];
  });
  for (double& v : mean) v /= static_cast<double>(n);
  return norm2(mean);
}

MetricsReport evaluate(const WatermarkModel& model, const DatasetHandle& dataset, std::size_t n,
                       std::uint64_t seed) {
  MetricsReport r;
  r.distinguishability = distinguishability(model, dataset, n, derive_seed(seed, 0));
  r.perturbation_norm = perturbation_norm(model, n, derive_seed(seed, 1));
  r.samples_used = n;
  r.seed = seed;
  return r;
}

}  // namespace dattr::metrics
