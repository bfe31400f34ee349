#include "dattr/capacity.hpp"

#include <algorithm>
#include <limits>

#include "dattr/theory.hpp"

namespace dattr::capacity {

std::string_view failure_name(FailureReason r) {
  switch (r) {
    case FailureReason::NonCompliant: return "NonCompliant";
    case FailureReason::PairwiseViolated: return "PairwiseViolated";
    case FailureReason::IterLimit: return "IterLimit";
  }
  return "Unknown";
}

FailureReason parse_failure(std::string_view name) {
  for (auto r : {FailureReason::NonCompliant, FailureReason::PairwiseViolated, FailureReason::IterLimit}) {
    if (failure_name(r) == name) return r;
  }
  throw Error(Errc::InvalidArgument, "unknown capacity failure reason '" + std::string(name) + "'");
}

namespace {

double margin_of(const theory::PairwiseResult& r) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& p : r.pairs) m = std::min(m, p.report.rhs - p.report.lhs);
  return m;
}

}  // namespace

CapacityReport estimate_capacity(const DatasetHandle& dataset, const NoiseModel& noise_proxy, double delta,
                                 const CapacityConfig& capacity_cfg, const keygen::KeygenConfig& keygen_cfg) {
  if (capacity_cfg.max_keys < 1) throw Error(Errc::InvalidArgument, "max_keys must be >= 1");
  if (capacity_cfg.restarts < 1) throw Error(Errc::InvalidArgument, "restarts must be >= 1");
  require_same_dim(noise_proxy.dim(), dataset.dim(), "estimate_capacity noise");
  theory::tail_factor(delta);

  CapacityReport report;
  std::vector<double> sigmas, means;
  for (int slot = 0; slot < capacity_cfg.max_keys; ++slot) {
    bool accepted = false;
    bool any_compliant = false;
    for (int r = 0; r < capacity_cfg.restarts && !accepted; ++r) {
      keygen::KeygenConfig cfg = keygen_cfg;
      cfg.seed = derive_seed(keygen_cfg.seed, static_cast<std::uint64_t>(slot), static_cast<std::uint64_t>(r));
      cfg.init = (r == 0) ? keygen_cfg.init : keygen::InitPolicy::Random;
      cfg.compliance_threshold = 1.0;
      Key candidate;
      try {
        candidate = keygen::generate_key(dataset, report.keys, cfg);
      } catch (const Error& e) {
        if (e.code() == Errc::NonCompliant) continue;
        throw;
      }
      any_compliant = true;
      if (capacity_cfg.d_max_ceiling && candidate.d_max > *capacity_cfg.d_max_ceiling) continue;

      std::vector<Key> trial = report.keys;
      trial.push_back(candidate);
      std::vector<double> s = sigmas, m = means;
      s.push_back(projected_std(noise_proxy, candidate));
      m.push_back(noise_proxy.mean_projection(candidate.vector));
      theory::PairwiseResult check;
      try {
        check = theory::check_pairwise_condition(trial, s, m, delta);
      } catch (const Error& e) {
        if (e.code() == Errc::ZeroDenominator) continue;
        throw;
      }
      if (check.violations != 0) continue;

      report.keys = std::move(trial);
      sigmas = std::move(s);
      means = std::move(m);
      accepted = true;
    }
    if (!accepted) {
      report.failure_reason = any_compliant ? FailureReason::PairwiseViolated : FailureReason::NonCompliant;
      break;
    }
  }
  if (!report.failure_reason) report.failure_reason = FailureReason::IterLimit;
  report.count = static_cast<int>(report.keys.size());
  report.min_pairwise_margin = std::numeric_limits<double>::infinity();
  if (report.count >= 2) {
    report.min_pairwise_margin = margin_of(theory::check_pairwise_condition(report.keys, sigmas, means, delta));
  }
  return report;
}

}  // namespace dattr::capacity
