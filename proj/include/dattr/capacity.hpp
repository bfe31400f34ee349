#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "dattr/core.hpp"
#include "dattr/keygen.hpp"

namespace dattr::capacity {

enum class FailureReason { NonCompliant, PairwiseViolated, IterLimit };

std::string_view failure_name(FailureReason r);
FailureReason parse_failure(std::string_view name);

struct CapacityConfig {
  int max_keys = 16;
  int restarts = 5;                   // candidates tried per slot
  std::optional<double> d_max_ceiling;  // optional generation-quality proxy
};

struct CapacityReport {
  int count = 0;
  std::vector<Key> keys;
  // min over ordered pairs of a(phi_i, phi_j) - phi_i' phi_j; +inf for < 2 keys
  double min_pairwise_margin = 0.0;
  std::optional<FailureReason> failure_reason;
};

// Greedy lower bound on the number of mutually admissible keys: each slot
// runs generate_key against the accepted set (restart 0 from the negative
// mean, later restarts from random points) and accepts the first candidate
// that is fully compliant and satisfies the pairwise condition with every
// accepted key in both directions.
CapacityReport estimate_capacity(const DatasetHandle& dataset, const NoiseModel& noise_proxy, double delta,
                                 const CapacityConfig& capacity_cfg, const keygen::KeygenConfig& keygen_cfg);

}  // namespace dattr::capacity
