#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dattr/core.hpp"

namespace dattr::keygen {

enum class InitPolicy {
  NegativeMean,  // -mean/|mean| when nonzero, else random
  Random,
};

struct KeygenConfig {
  int max_iters = 400;
  int batch_size = 256;
  double step_size = 0.5;
  double step_decay = 0.99;
  double tol = 1e-7;
  double compliance_threshold = 1.0;
  double orthogonality_weight = 1.0;
  int eval_every = 10;  // full-objective evaluation period (iterations)
  InitPolicy init = InitPolicy::NegativeMean;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ComplianceStats {
  double compliance_fraction = 0.0;
  double d_max = 0.0;
  double d_min = 0.0;
};

ComplianceStats compliance_stats(ConstVecView phi, const DatasetHandle& dataset);
ComplianceStats compliance_stats(const Key& key, const DatasetHandle& dataset);

// Recomputes the cached geometry of key against dataset.
Key with_stats(Key key, const DatasetHandle& dataset);

// Mean hinge loss  E_x max{1 + phi'x, 0}  over the full dataset.
double hinge_objective(ConstVecView phi, const DatasetHandle& dataset);

// Full key-generation objective: hinge term plus the weighted orthogonality
// penalty  sum_j max{phi_j' phi, 0}.
double key_objective(ConstVecView phi, const DatasetHandle& dataset, std::span<const Key> existing,
                     double orthogonality_weight);

// True iff max{1 + phi'x, 0} == 0 for every dataset point (margin form).
bool hinge_free(ConstVecView phi, const DatasetHandle& dataset);

struct KeygenTrace {
  std::vector<double> objective;  // full objective at each evaluation point
  int iterations = 0;
};

// Mini-batch projected subgradient descent on the unit sphere; returns the
// best full-objective iterate among those meeting cfg.compliance_threshold
// (the best overall when none does). Throws NonCompliant when the compliance
// fraction of the result is below the threshold.
Key generate_key(const DatasetHandle& dataset, std::span<const Key> existing, const KeygenConfig& cfg,
                 KeygenTrace* trace = nullptr);

// Generates count keys sequentially, each penalized against all previous ones.
std::vector<Key> generate_keys(const DatasetHandle& dataset, int count, const KeygenConfig& cfg);

// N x N row-major matrix of inner products.
std::vector<double> gram_matrix(std::span<const Key> keys);

// Largest off-diagonal Gram entry (-inf for a single key).
double max_off_diagonal(std::span<const Key> keys);

// Unit key at angle_deg from reference inside span{reference, base}.
Key make_rotated_key(const Key& base, const Key& reference, double angle_deg);

// Symmetrically orthonormalizes the keys, then mixes each with the sum of all
// so that every pairwise inner product equals cos(angle_deg). Throws
// DegenerateSpan for linearly dependent keys.
std::vector<Key> make_equiangular_keys(std::span<const Key> orthogonal_keys, double angle_deg);

}  // namespace dattr::keygen
