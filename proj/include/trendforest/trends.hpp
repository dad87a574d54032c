#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "trendforest/dataset.hpp"
#include "trendforest/forest.hpp"
#include "trendforest/shapley.hpp"
#include "trendforest/stats.hpp"

namespace trendforest {

/// Aggregate over the split nodes of one feature.
struct TraversalRate {
  double value = 0.0;
  std::size_t splits = 0;   // k, the number of split nodes on the feature
  std::size_t skipped = 0;  // RTR terms dropped for a near-zero denominator
  bool no_splits() const noexcept { return splits == 0; }
};

/// Absolute traversal rate: mean over the feature's split nodes of
/// +1 if AVG(L) < AVG(R), -1 if AVG(L) > AVG(R), 0 on a tie.
inline TraversalRate atr(std::span<const SplitRecord> splits) {
  TraversalRate out;
  out.splits = splits.size();
  if (splits.empty()) return out;
  long votes = 0;
  for (const auto& s : splits) {
    if (s.left_target_mean < s.right_target_mean) ++votes;
    if (s.left_target_mean > s.right_target_mean) --votes;
  }
  out.value = static_cast<double>(votes) / static_cast<double>(splits.size());
  return out;
}

inline TraversalRate atr(const Forest& forest, std::size_t feature) {
  return atr(splits_for_feature(forest, feature));
}

enum class RtrNormalization {
  by_split_count,  // (2/k) * sum
  none,            // 2 * sum
};

inline constexpr double kRtrDenominatorEpsilon = 1e-12;

/// Relative traversal rate:
///   (2/k) * sum_i (AVG(R_i) - AVG(L_i)) / |AVG(L_i) + AVG(R_i)|
/// Terms whose denominator is below kRtrDenominatorEpsilon are skipped and
/// counted in `skipped`; k still counts every split node.
inline TraversalRate rtr(std::span<const SplitRecord> splits,
                         RtrNormalization normalization = RtrNormalization::by_split_count) {
  TraversalRate out;
  out.splits = splits.size();
  if (splits.empty()) return out;
  double sum = 0.0;
  for (const auto& s : splits) {
    const double denom = std::abs(s.left_target_mean + s.right_target_mean);
    if (denom < kRtrDenominatorEpsilon) {
      ++out.skipped;
      continue;
    }
    sum += (s.right_target_mean - s.left_target_mean) / denom;
  }
  out.value = 2.0 * sum;
  if (normalization == RtrNormalization::by_split_count) out.value /= static_cast<double>(splits.size());
  return out;
}

inline TraversalRate rtr(const Forest& forest, std::size_t feature,
                         RtrNormalization normalization = RtrNormalization::by_split_count) {
  return rtr(splits_for_feature(forest, feature), normalization);
}

struct ShapleyTrend {
  Correlation r;
  Correlation rho;
};

/// Pearson and Spearman correlation between a feature's values and its
/// Shapley attributions.
inline ShapleyTrend shapley_trend(std::span<const double> feature_values, std::span<const double> phi) {
  return {pearson(feature_values, phi), spearman(feature_values, phi)};
}

/// Estimator identifiers, in report order.
inline constexpr std::array<std::string_view, 7> kTrendEstimators = {"r",   "rho", "r_lm", "r_s",
                                                                     "rho_s", "atr", "rtr"};

struct FeatureTrends {
  std::string feature;
  Correlation r;    // pearson(feature, target)
  Correlation rho;  // spearman(feature, target)
  std::optional<OlsCoefficient> r_lm;
  Correlation r_s;    // pearson(feature, shapley)
  Correlation rho_s;  // spearman(feature, shapley)
  TraversalRate atr;
  TraversalRate rtr;

  /// Values in kTrendEstimators order; nullopt for a missing or degenerate estimate.
  std::array<std::optional<double>, 7> values() const {
    auto corr = [](const Correlation& c) -> std::optional<double> {
      if (c.degenerate) return std::nullopt;
      return c.value;
    };
    auto rate = [](const TraversalRate& t) -> std::optional<double> {
      if (t.no_splits()) return std::nullopt;
      return t.value;
    };
    std::optional<double> lm;
    if (r_lm) lm = r_lm->coefficient;
    return {corr(r), corr(rho), lm, corr(r_s), corr(rho_s), rate(atr), rate(rtr)};
  }
};

struct TrendOptions {
  RtrNormalization rtr_normalization = RtrNormalization::by_split_count;
  /// Threads for the Shapley pass; does not affect results.
  std::size_t workers = 1;
};

struct TrendReport {
  std::vector<FeatureTrends> features;
  ForestConfig config;
  std::size_t n = 0;
  std::size_t d = 0;
  RtrNormalization rtr_normalization = RtrNormalization::by_split_count;
  bool ols_collinear = false;
  /// Non-empty when the linear model could not be fitted (r_lm then absent).
  std::string ols_error;
  bool forest_degenerate = false;
};

/// ATR and RTR only, from a fitted (possibly deserialized) forest.
inline TrendReport traversal_report(const Forest& forest, const TrendOptions& options = {}) {
  TrendReport report;
  report.config = forest.config();
  report.d = forest.n_features();
  report.rtr_normalization = options.rtr_normalization;
  report.forest_degenerate = forest.degenerate();
  for (std::size_t j = 0; j < forest.n_features(); ++j) {
    const auto splits = splits_for_feature(forest, j);
    FeatureTrends ft;
    ft.feature = forest.feature_names()[j];
    ft.r.degenerate = ft.rho.degenerate = ft.r_s.degenerate = ft.rho_s.degenerate = true;
    ft.atr = atr(splits);
    ft.rtr = rtr(splits, options.rtr_normalization);
    report.features.push_back(std::move(ft));
  }
  return report;
}

/// Fits one forest and one linear model on `ds` and fills every estimator.
/// Shapley values are computed on the training rows. Sub-estimator failures
/// are recorded per feature; the report itself is always produced.
inline TrendReport trend_report(const Dataset& ds, const ForestConfig& config,
                                const TrendOptions& options = {},
                                ShapleyMatrix* shapley_out = nullptr) {
  const Forest forest = fit(ds, config);
  TrendReport report = traversal_report(forest, options);
  report.n = ds.n();

  std::optional<OlsFit> ols;
  try {
    ols = ols_coefficients(ds);
    report.ols_collinear = ols->collinear;
  } catch (const std::exception& e) {
    report.ols_error = e.what();
  }

  ShapleyMatrix shap = shapley_values(forest, ds, options.workers);
  for (std::size_t j = 0; j < ds.d(); ++j) {
    FeatureTrends& ft = report.features[j];
    const auto x = ds.column(j);
    if (ds.n() >= 2) {
      ft.r = pearson(x, ds.target());
      ft.rho = spearman(x, ds.target());
      const auto phi = shap.column(j);
      const auto st = shapley_trend(x, phi);
      ft.r_s = st.r;
      ft.rho_s = st.rho;
    }
    if (ols) ft.r_lm = ols->coefficients[j];
  }
  if (shapley_out) *shapley_out = std::move(shap);
  return report;
}

}  // namespace trendforest
