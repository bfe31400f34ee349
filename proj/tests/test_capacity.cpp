#include <doctest.h>

#include <cmath>

#include "dattr/capacity.hpp"
#include "dattr/dataio.hpp"
#include "dattr/theory.hpp"
#include "support.hpp"

using namespace dattr;
using namespace dattr::capacity;

namespace {

DatasetHandle cluster3(std::uint64_t seed) {
  const double c = -1.0 / std::sqrt(3.0);
  return dataio::synth_gaussian(300, 3, {c, c, c}, 0.01, std::nullopt, seed);
}

// re-verification written against the raw bound rather than the library checker
bool pairwise_ok(const std::vector<Key>& keys, const DatasetHandle& ds) {
  for (std::size_t i = 0; i < keys.size(); ++i)
    for (std::size_t j = 0; j < keys.size(); ++j) {
      if (i == j) continue;
      double dmax = 0.0, dmin = INFINITY;
      for (std::size_t r = 0; r < ds.size(); ++r) {
        const double p = std::abs(dot(keys[j].vector, ds.row(r)));
        dmax = std::max(dmax, p);
        dmin = std::min(dmin, p);
      }
      if (dot(keys[i].vector, keys[j].vector) > dmin / dmax) return false;
    }
  return true;
}

}  // namespace

TEST_CASE("the constructed three-dimensional cluster admits three keys") {
  const auto ds = cluster3(1);
  // e1, e2, e3 are compliant and orthogonal, so three keys are feasible
  for (int i = 0; i < 3; ++i) {
    Vec v(3, 0.0);
    v[i] = 1.0;
    for (std::size_t r = 0; r < ds.size(); ++r) REQUIRE(dot(v, ds.row(r)) < 0.0);
  }
  CapacityConfig cc;
  cc.max_keys = 6;
  keygen::KeygenConfig kc;
  kc.seed = 4;
  const auto rep = estimate_capacity(ds, NoiseModel::zero(3), 0.01, cc, kc);
  CHECK(rep.count >= 3);
  CHECK(rep.count == static_cast<int>(rep.keys.size()));
  CHECK(pairwise_ok(rep.keys, ds));
  const std::vector<NoiseModel> zero(rep.keys.size(), NoiseModel::zero(3));
  CHECK(theory::check_pairwise_condition(rep.keys, zero, ds, 0.01).violations == 0);
  CHECK(rep.min_pairwise_margin >= 0.0);
  for (const Key& k : rep.keys) CHECK(k.compliance_fraction == 1.0);
}

TEST_CASE("two-dimensional cluster") {
  const auto ds = dataio::synth_gaussian(200, 2, {-1.0, 0.0}, 0.05, std::nullopt, 3);
  CapacityConfig cc;
  cc.max_keys = 4;
  const auto rep = estimate_capacity(ds, NoiseModel::zero(2), 0.01, cc, {});
  CHECK(rep.count >= 1);
  CHECK(pairwise_ok(rep.keys, ds));
  REQUIRE(rep.failure_reason);
}

TEST_CASE("a budget of one key stops with IterLimit") {
  const auto ds = cluster3(2);
  CapacityConfig cc;
  cc.max_keys = 1;
  const auto rep = estimate_capacity(ds, NoiseModel::zero(3), 0.01, cc, {});
  CHECK(rep.count == 1);
  REQUIRE(rep.failure_reason);
  CHECK(*rep.failure_reason == FailureReason::IterLimit);
  CHECK(std::isinf(rep.min_pairwise_margin));
}

TEST_CASE("count is monotone in the key budget and bounded by it") {
  const auto ds = cluster3(5);
  int last = 0;
  for (int m = 1; m <= 6; ++m) {
    CapacityConfig cc;
    cc.max_keys = m;
    keygen::KeygenConfig kc;
    kc.seed = 8;
    const auto rep = estimate_capacity(ds, NoiseModel::isotropic(3, 0.001), 0.01, cc, kc);
    CHECK(rep.count <= m);
    CHECK(rep.count >= last);
    last = rep.count;
  }
}

TEST_CASE("data with no compliant direction reports NonCompliant") {
  auto ds = testing::points({{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}});
  CapacityConfig cc;
  cc.restarts = 2;
  const auto rep = estimate_capacity(*ds, NoiseModel::zero(2), 0.01, cc, {});
  CHECK(rep.count == 0);
  REQUIRE(rep.failure_reason);
  CHECK(*rep.failure_reason == FailureReason::NonCompliant);
}

TEST_CASE("d_max ceiling filters candidates") {
  const auto ds = cluster3(6);
  CapacityConfig cc;
  cc.d_max_ceiling = 0.5;  // every compliant key has d_max near 1
  const auto rep = estimate_capacity(ds, NoiseModel::zero(3), 0.01, cc, {});
  CHECK(rep.count == 0);
  CHECK(*rep.failure_reason == FailureReason::PairwiseViolated);
}

TEST_CASE("argument validation and names") {
  const auto ds = cluster3(1);
  CapacityConfig cc;
  cc.max_keys = 0;
  CHECK_THROWS_AS(estimate_capacity(ds, NoiseModel::zero(3), 0.01, cc, {}), Error);
  CHECK_THROWS_AS(estimate_capacity(ds, NoiseModel::zero(2), 0.01, {}, {}), Error);
  CHECK_THROWS_AS(estimate_capacity(ds, NoiseModel::zero(3), 0.0, {}, {}), Error);
  for (auto r : {FailureReason::NonCompliant, FailureReason::PairwiseViolated, FailureReason::IterLimit})
    CHECK(parse_failure(failure_name(r)) == r);
  CHECK_THROWS_AS(parse_failure("nope"), Error);
}
