#include <algorithm>
#include <cmath>
#include <sstream>

#include "dattr/app.hpp"
#include "dattr/dataio.hpp"
#include "dattr/keygen.hpp"
#include "dattr/metrics.hpp"
#include "dattr/theory.hpp"

namespace dattr::app {

std::vector<WatermarkModel> models_from_registry(const registry::KeyRegistry& reg, const DatasetPtr& dataset,
                                                 const NoisePtr& noise, bool clamp) {
  require_same_dim(reg.dim(), dataset->dim(), "registry vs dataset");
  std::vector<WatermarkModel> models;
  for (const auto& e : reg.entries()) {
    if (e.revoked) continue;
    if (!e.gamma) {
      throw Error(Errc::InvalidArgument,
                  "registry key " + std::to_string(e.key.id) + " has no gamma; run gamma-search first");
    }
    models.emplace_back(dataset, e.key, *e.gamma, noise, clamp);
  }
  if (models.empty()) throw Error(Errc::InvalidArgument, "registry has no active keys");
  return models;
}

std::vector<EvalRow> evaluate_registry(const registry::KeyRegistry& reg, const DatasetPtr& dataset,
                                       const NoisePtr& noise, std::size_t n, std::uint64_t seed, bool clamp) {
  const auto models = models_from_registry(reg, dataset, noise, clamp);
  std::vector<Key> keys;
  for (const auto& m : models) keys.push_back(m.key);
  const auto attr = metrics::attributability_parts(models, keys, n, derive_seed(seed, 1));
  std::vector<EvalRow> rows;
  for (std::size_t i = 0; i < models.size(); ++i) {
    EvalRow r;
    r.model_id = models[i].key.id;
    r.distinguishability = metrics::distinguishability(models[i], *dataset, n, derive_seed(seed, 2, i));
    r.a_contribution = attr.per_model[i] / static_cast<double>(models.size());
    r.delta_x_norm = metrics::perturbation_norm(models[i], n, derive_seed(seed, 3, i));
    r.gamma = models[i].gamma;
    r.theorem1_gamma = theory::theorem1_min_gamma(models[i].key, *dataset, *noise, reg.delta());
    rows.push_back(r);
  }
  return rows;
}

std::string format_eval_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << "model_id,D,A_contribution,delta_x_norm\n";
  for (const auto& r : rows) {
    os << r.model_id << ',' << dataio::format_double(r.distinguishability) << ','
       << dataio::format_double(r.a_contribution) << ',' << dataio::format_double(r.delta_x_norm) << '\n';
  }
  return os.str();
}

std::string format_scatter(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << "# model_id gamma gamma_bound D\n";
  for (const auto& r : rows) {
    os << r.model_id << ' ' << dataio::format_double(r.gamma) << ' ' << dataio::format_double(r.theorem1_gamma) << ' '
       << dataio::format_double(r.distinguishability) << '\n';
  }
  return os.str();
}

RobustEvalResult robust_evaluate(std::span<const WatermarkModel> models, std::span<const Key> keys,
                                 const postproc::PostProcessSpec& attack, std::size_t n, std::uint64_t seed) {
  if (models.empty() || models.size() != keys.size()) throw Error(Errc::KeyModelMismatch, "need one key per model");
  RobustEvalResult out;
  double d_before = 0.0, d_after = 0.0, dx = 0.0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::uint64_t s = derive_seed(seed, 2, i);
    d_before += metrics::distinguishability(models[i], *models[i].base, n, s);
    d_after += metrics::distinguishability(models[i], *models[i].base, n, s, &attack);
    dx += metrics::perturbation_norm(models[i], n, derive_seed(seed, 3, i));
  }
  const double m = static_cast<double>(models.size());
  out.before.distinguishability = d_before / m;
  out.after.distinguishability = d_after / m;
  out.before.attributability = metrics::attributability(models, keys, n, derive_seed(seed, 1));
  out.after.attributability = metrics::attributability(models, keys, n, derive_seed(seed, 1), &attack);
  out.before.perturbation_norm = out.after.perturbation_norm = dx / m;
  out.before.samples_used = out.after.samples_used = n;
  out.before.seed = out.after.seed = seed;
  return out;
}

RobustRow robust_grid_row(const registry::KeyRegistry& reg, const DatasetPtr& dataset, const NoisePtr& noise,
                          const postproc::PostProcessSpec& attack, const watermark::GammaSearchConfig& cfg,
                          std::size_t n, bool clamp) {
  const auto plain = models_from_registry(reg, dataset, noise, clamp);
  std::vector<Key> keys;
  for (const auto& m : plain) keys.push_back(m.key);
  std::vector<WatermarkModel> robust;
  RobustRow row;
  row.attack = attack.describe();
  for (std::size_t i = 0; i < plain.size(); ++i) {
    watermark::GammaSearchConfig c = cfg;
    c.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(keys[i].id));
    try {
      robust.push_back(watermark::robust_gamma_search(keys[i], dataset, noise, attack, c, clamp).model);
    } catch (const Error& e) {
      if (e.code() != Errc::Diverged) throw;
      ++row.diverged;
      const double last = plain[i].gamma * std::pow(cfg.alpha, cfg.max_rounds);
      robust.emplace_back(dataset, keys[i], std::max(last, plain[i].gamma), noise, clamp);
    }
  }
  const auto before = robust_evaluate(plain, keys, attack, n, cfg.seed);
  const auto after = robust_evaluate(robust, keys, attack, n, cfg.seed);
  row.d_raw = before.before.distinguishability;
  row.a_raw = *before.before.attributability;
  row.d_bfr = before.after.distinguishability;
  row.a_bfr = *before.after.attributability;
  row.d_aft = after.after.distinguishability;
  row.a_aft = *after.after.attributability;
  row.dx_plain = before.before.perturbation_norm;
  row.dx_robust = after.before.perturbation_norm;
  return row;
}

std::string format_robust_csv(const std::vector<RobustRow>& rows) {
  std::ostringstream os;
  os << "attack,D_raw,A_raw,D_bfr,A_bfr,D_aft,A_aft,dx_plain,dx_robust,diverged\n";
  auto f = [](double v) { return dataio::format_double(v); };
  for (const auto& r : rows) {
    os << r.attack << ',' << f(r.d_raw) << ',' << f(r.a_raw) << ',' << f(r.d_bfr) << ',' << f(r.a_bfr) << ','
       << f(r.d_aft) << ',' << f(r.a_aft) << ',' << f(r.dx_plain) << ',' << f(r.dx_robust) << ',' << r.diverged
       << '\n';
  }
  return os.str();
}

}  // namespace dattr::app
