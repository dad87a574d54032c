#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "trendforest/dataset.hpp"
#include "trendforest/rng.hpp"

namespace trendforest::synth {

/// Noise-mixing family: a standardized base dataset with a planted linear
/// signal, mixed with structure-matched pure-noise datasets.
struct Syn1Spec {
  std::size_t n = 1000;
  std::size_t d = 10;
  /// Coefficients of the leading informative features; the rest are zero.
  std::vector<double> coefficients = {3.0, 2.0, 1.0};
  double noise_std = 1.0;
  std::size_t trials = 250;
  /// Mixing weights, strictly increasing within (0, 1].
  std::vector<double> grid = default_grid();
  std::uint64_t seed = 0;

  static std::vector<double> default_grid() {
    std::vector<double> g;
    for (int k = 1; k <= 100; ++k) g.push_back(k / 100.0);
    return g;
  }

  void validate() const {
    if (n < 2 || d == 0) throw std::invalid_argument("syn1: need n >= 2 and d >= 1");
    if (coefficients.empty() || coefficients.size() > d) {
      throw std::invalid_argument("syn1: informative feature count must lie in [1, d]");
    }
    for (double c : coefficients) {
      if (c == 0.0) throw std::invalid_argument("syn1: informative coefficients must be nonzero");
    }
    for (std::size_t k = 0; k < grid.size(); ++k) {
      if (!(grid[k] > 0.0 && grid[k] <= 1.0) || (k > 0 && !(grid[k] > grid[k - 1]))) {
        throw std::invalid_argument("syn1: grid must be strictly increasing within (0, 1]");
      }
    }
  }
};

/// Feature names f1 .. fd.
inline std::vector<std::string> syn1_feature_names(std::size_t d) {
  std::vector<std::string> names;
  for (std::size_t j = 1; j <= d; ++j) names.push_back("f" + std::to_string(j));
  return names;
}

inline std::vector<double> normal_vector(std::size_t n, SeededRng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

/// Standard-normal features; target = coefficients . informative + N(0, noise_std^2); standardized.
inline Dataset gen_base(const Syn1Spec& spec, SeededRng rng) {
  spec.validate();
  std::vector<std::vector<double>> cols;
  for (std::size_t j = 0; j < spec.d; ++j) cols.push_back(normal_vector(spec.n, rng));
  std::vector<double> y(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    double v = spec.noise_std * rng.normal();
    for (std::size_t j = 0; j < spec.coefficients.size(); ++j) v += spec.coefficients[j] * cols[j][i];
    y[i] = v;
  }
  return standardize(Dataset(std::move(cols), std::move(y), syn1_feature_names(spec.d), "y")).first;
}

/// Same shape as gen_base, every column (target included) i.i.d. N(0, 1), standardized.
inline Dataset gen_noise_like(const Syn1Spec& spec, SeededRng rng) {
  spec.validate();
  std::vector<std::vector<double>> cols;
  for (std::size_t j = 0; j < spec.d; ++j) cols.push_back(normal_vector(spec.n, rng));
  auto y = normal_vector(spec.n, rng);
  return standardize(Dataset(std::move(cols), std::move(y), syn1_feature_names(spec.d), "y")).first;
}

/// A structure-matched noise dataset for an arbitrary (standardized) base.
inline Dataset noise_like(const Dataset& base, SeededRng rng) {
  std::vector<std::vector<double>> cols;
  for (std::size_t j = 0; j < base.d(); ++j) cols.push_back(normal_vector(base.n(), rng));
  auto y = normal_vector(base.n(), rng);
  return standardize(Dataset(std::move(cols), std::move(y), base.feature_names(), base.target_name())).first;
}

/// sign(x) |x|^p; keeps x^1.5 defined and increasing for negative x.
inline double signed_pow(double x, double p) { return std::copysign(std::pow(std::abs(x), p), x); }

inline constexpr std::size_t kSyn23Samples = 100;

struct Syn23Columns {
  std::vector<double> x0, x1, x2, a0, a1, a2;
};

inline Syn23Columns gen_syn23_columns(SeededRng rng, std::size_t n = kSyn23Samples) {
  Syn23Columns c;
  c.x0 = normal_vector(n, rng, 3.0);
  c.x1 = normal_vector(n, rng, 2.0);
  c.x2 = normal_vector(n, rng, 1.0);
  c.a0.resize(n);
  c.a1.resize(n);
  c.a2.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.a0[i] = c.x0[i] + rng.normal();
  for (std::size_t i = 0; i < n; ++i) c.a1[i] = c.x0[i] + 10.0 * rng.normal();
  for (std::size_t i = 0; i < n; ++i) c.a2[i] = c.x0[i] * c.x0[i] + 10.0 * rng.normal();
  return c;
}

/// Y = 4 X0^1.5 + 2 X1 + 0.5 X2^2 with features X0, X1, X2, A0, A1, A2.
inline Dataset gen_syn2(std::uint64_t seed, std::size_t n = kSyn23Samples) {
  auto c = gen_syn23_columns(SeededRng(seed, 2), n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = 4.0 * signed_pow(c.x0[i], 1.5) + 2.0 * c.x1[i] + 0.5 * c.x2[i] * c.x2[i];
  }
  return Dataset({c.x0, c.x1, c.x2, c.a0, c.a1, c.a2}, std::move(y), {"X0", "X1", "X2", "A0", "A1", "A2"}, "Y");
}

/// Y = 4 X0^1.5 with the correlated cluster X0, A0, A1, A2 as features.
inline Dataset gen_syn3(std::uint64_t seed, std::size_t n = kSyn23Samples) {
  auto c = gen_syn23_columns(SeededRng(seed, 3), n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = 4.0 * signed_pow(c.x0[i], 1.5);
  return Dataset({c.x0, c.a0, c.a1, c.a2}, std::move(y), {"X0", "A0", "A1", "A2"}, "Y");
}

}  // namespace trendforest::synth
