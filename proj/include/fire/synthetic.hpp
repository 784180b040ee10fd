#ifndef FIRE_SYNTHETIC_HPP
#define FIRE_SYNTHETIC_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "fire/dataset.hpp"

namespace fire {

/// Friedman #1 regression data: x ~ U[0,1]^p (p >= 5),
/// y = 10 sin(pi x0 x1) + 20 (x2 - 0.5)^2 + 10 x3 + 5 x4 + noise_sd * N(0,1).
inline Dataset friedman1(std::size_t n_rows, std::size_t n_features, double noise_sd,
                         std::uint64_t seed) {
  if (n_features < 5) throw invalid_input("friedman1 needs at least 5 features");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  Dataset d;
  d.n_rows = n_rows;
  d.n_features = n_features;
  d.features.resize(n_rows * n_features);
  d.target.resize(n_rows);
  for (std::size_t f = 0; f < n_features; ++f) d.feature_names.push_back("x" + std::to_string(f));
  for (std::size_t i = 0; i < n_rows; ++i) {
    double* x = d.features.data() + i * n_features;
    for (std::size_t f = 0; f < n_features; ++f) x[f] = u(rng);
    d.target[i] = 10.0 * std::sin(std::numbers::pi * x[0] * x[1]) +
                  20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] + 5.0 * x[4] +
                  noise_sd * z(rng);
  }
  return d;
}

}  // namespace fire

#endif  // FIRE_SYNTHETIC_HPP
