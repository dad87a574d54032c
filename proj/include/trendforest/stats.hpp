#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "trendforest/dataset.hpp"

namespace trendforest {

/// A correlation-type estimate; `degenerate` is set (and value is 0) when
/// one of the inputs has zero variance.
struct Correlation {
  double value = 0.0;
  bool degenerate = false;
};

namespace detail {

inline void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("correlation: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("correlation: need at least two observations");
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

/// Pearson correlation Cov(x, y) / (sigma(x) sigma(y)), clamped to [-1, 1].
inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y);
  const double mx = detail::mean_of(x);
  const double my = detail::mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return {0.0, true};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

/// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j + 1);  // mean of i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

inline Correlation spearman(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

struct OlsCoefficient {
  double coefficient = 0.0;
  double std_error = 0.0;
  double p_value = 1.0;
};

struct OlsFit {
  double intercept = 0.0;
  std::vector<OlsCoefficient> coefficients;  // one per feature
  std::size_t dof = 0;                       // n - d - 1
  /// Design matrix was rank deficient; the minimum-norm solution is reported.
  bool collinear = false;
};

/// Two-sided p-value of a t statistic with `dof` degrees of freedom.
inline double t_test_p_value(double t, std::size_t dof) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(static_cast<double>(dof));
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

/// Least squares fit of the target on all features jointly plus an intercept.
inline OlsFit ols_coefficients(const Dataset& ds) {
  const std::size_t n = ds.n();
  const std::size_t d = ds.d();
  if (n <= d + 1) throw std::invalid_argument("ols: need more rows than features + 1");

  // Centering the columns keeps the intercept column orthogonal to the rest,
  // which improves conditioning; the intercept is recovered afterwards.
  Eigen::MatrixXd x(n, d + 1);
  Eigen::VectorXd means(d);
  x.col(0).setOnes();
  for (std::size_t j = 0; j < d; ++j) {
    const auto col = ds.column(j);
    means[static_cast<Eigen::Index>(j)] = detail::mean_of(col);
    for (std::size_t i = 0; i < n; ++i) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = col[i] - means[static_cast<Eigen::Index>(j)];
    }
  }
  const auto target = ds.target();
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(target.data(), static_cast<Eigen::Index>(n));

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
  const Eigen::VectorXd beta = cod.solve(y);
  const Eigen::VectorXd residual = y - x * beta;

  OlsFit fit;
  fit.dof = n - d - 1;
  fit.collinear = cod.rank() < static_cast<Eigen::Index>(d + 1);
  const double sigma2 = residual.squaredNorm() / static_cast<double>(fit.dof);
  const Eigen::MatrixXd pinv = cod.pseudoInverse();
  const Eigen::VectorXd var_diag = (pinv * pinv.transpose()).diagonal() * sigma2;

  fit.intercept = beta[0] - means.dot(beta.tail(static_cast<Eigen::Index>(d)));
  fit.coefficients.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const auto k = static_cast<Eigen::Index>(j + 1);
    OlsCoefficient& c = fit.coefficients[j];
    c.coefficient = beta[k];
    c.std_error = std::sqrt(std::max(0.0, var_diag[k]));
    if (c.std_error > 0.0) {
      c.p_value = t_test_p_value(c.coefficient / c.std_error, fit.dof);
    } else {
      c.p_value = c.coefficient == 0.0 ? 1.0 : 0.0;
    }
  }
  return fit;
}

}  // namespace trendforest
