#pragma once

#include <cmath>
#include <memory>
#include <string>

#include "dattr/core.hpp"

namespace testing {

inline dattr::DatasetPtr points(std::initializer_list<dattr::Vec> rows) {
  dattr::Vec flat;
  std::size_t d = 0;
  for (const auto& r : rows) {
    d = r.size();
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return std::make_shared<dattr::DatasetHandle>("points", rows.size(), d, std::move(flat));
}

inline dattr::NoisePtr zero_noise(std::size_t d) {
  return std::make_shared<dattr::NoiseModel>(dattr::NoiseModel::zero(d));
}

inline dattr::NoisePtr iso_noise(std::size_t d, double sigma) {
  return std::make_shared<dattr::NoiseModel>(dattr::NoiseModel::isotropic(d, sigma));
}

// 3 binomial standard deviations for a rate p over n draws
inline double binom3(double p, double n) { return 3.0 * std::sqrt(p * (1.0 - p) / n); }

inline std::string mnist_images() { return std::string(DATTR_DATA_DIR) + "/mnist5k-images-idx3-ubyte.gz"; }
inline std::string mnist_labels() { return std::string(DATTR_DATA_DIR) + "/mnist5k-labels-idx1-ubyte.gz"; }

}  // namespace testing
