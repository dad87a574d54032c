#pragma once

#include <charconv>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trendforest/csv.hpp"
#include "trendforest/dataset.hpp"
#include "trendforest/forest_io.hpp"
#include "trendforest/importance.hpp"
#include "trendforest/shapley.hpp"
#include "trendforest/trends.hpp"

namespace trendforest {

inline constexpr int kTrendReportVersion = 1;
inline constexpr int kImportanceReportVersion = 1;

/// Shortest round-trip decimal form; empty for non-finite values.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) return {};
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string{};
}

inline nlohmann::json json_number(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline void write_csv(std::ostream& out, const Dataset& ds) {
  csv::Row row = ds.feature_names();
  row.push_back(ds.target_name());
  csv::write_record(out, row);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t j = 0; j < ds.d(); ++j) row[j] = format_double(ds.at(i, j));
    row[ds.d()] = format_double(ds.target()[i]);
    csv::write_record(out, row);
  }
}

inline void write_shapley_csv(std::ostream& out, const ShapleyMatrix& shap,
                              const std::vector<std::string>& feature_names) {
  csv::write_record(out, feature_names);
  csv::Row row(shap.d);
  for (std::size_t i = 0; i < shap.n; ++i) {
    for (std::size_t j = 0; j < shap.d; ++j) row[j] = format_double(shap.at(i, j));
    csv::write_record(out, row);
  }
}

inline const char* to_string(RtrNormalization n) {
  return n == RtrNormalization::by_split_count ? "split-count" : "none";
}

namespace detail {

inline nlohmann::json correlation_json(const Correlation& c) {
  return {{"value", json_number(c.value)}, {"degenerate", c.degenerate}};
}

inline nlohmann::json rate_json(const TraversalRate& t) {
  return {{"value", json_number(t.value)}, {"splits", t.splits}, {"skipped", t.skipped},
          {"no_splits", t.no_splits()}};
}

}  // namespace detail

inline nlohmann::json to_json(const TrendReport& report) {
  nlohmann::json doc;
  doc["format"] = "trendforest.trends";
  doc["version"] = kTrendReportVersion;
  doc["metadata"] = {
      {"n", report.n},
      {"d", report.d},
      {"seed", report.config.seed},
      {"forest", config_to_json(report.config)},
      {"rtr_normalization", to_string(report.rtr_normalization)},
      {"partition_average", "training-targets"},
      {"ols_collinear", report.ols_collinear},
      {"ols_error", report.ols_error.empty() ? nlohmann::json(nullptr) : nlohmann::json(report.ols_error)},
      {"forest_degenerate", report.forest_degenerate},
  };
  auto& features = doc["features"] = nlohmann::json::array();
  for (const auto& f : report.features) {
    nlohmann::json jf;
    jf["feature"] = f.feature;
    jf["r"] = detail::correlation_json(f.r);
    jf["rho"] = detail::correlation_json(f.rho);
    if (f.r_lm) {
      jf["r_lm"] = {{"coefficient", json_number(f.r_lm->coefficient)},
                    {"std_error", json_number(f.r_lm->std_error)},
                    {"p_value", json_number(f.r_lm->p_value)}};
    } else {
      jf["r_lm"] = nullptr;
    }
    jf["r_s"] = detail::correlation_json(f.r_s);
    jf["rho_s"] = detail::correlation_json(f.rho_s);
    jf["atr"] = detail::rate_json(f.atr);
    jf["rtr"] = detail::rate_json(f.rtr);
    features.push_back(std::move(jf));
  }
  return doc;
}

/// One row per feature; blank cells mark missing or degenerate estimates.
inline void write_csv(std::ostream& out, const TrendReport& report) {
  csv::write_record(out, {"feature", "r", "rho", "r_lm", "r_lm_std_error", "r_lm_p_value", "r_s", "rho_s", "atr",
                          "rtr", "splits", "rtr_skipped"});
  for (const auto& f : report.features) {
    const auto v = f.values();
    csv::write_record(out, {f.feature, format_optional(v[0]), format_optional(v[1]), format_optional(v[2]),
                            f.r_lm ? format_double(f.r_lm->std_error) : "",
                            f.r_lm ? format_double(f.r_lm->p_value) : "", format_optional(v[3]),
                            format_optional(v[4]), format_optional(v[5]), format_optional(v[6]),
                            std::to_string(f.atr.splits), std::to_string(f.rtr.skipped)});
  }
}

inline nlohmann::json to_json(const ImportanceReport& report) {
  nlohmann::json doc;
  doc["format"] = "trendforest.importance";
  doc["version"] = kImportanceReportVersion;
  doc["metadata"] = {
      {"n", report.n},
      {"d", report.d},
      {"seed", report.config.seed},
      {"forest", config_to_json(report.config)},
      {"permutations_per_feature", report.options.permutations},
      {"chains_per_feature", report.chains_per_feature},
      {"repeats", report.options.repeats},
      {"gs_literal", report.options.gs_literal},
      {"weight_metric", report.options.weight == WeightMetric::pearson ? "pearson" : "r_squared"},
      {"residual_rf_all_zero", report.residual_rf_all_zero},
      {"residual_gs_all_zero", report.residual_gs_all_zero},
      {"negative_weight", report.negative_weight},
  };
  auto opt = [](const std::optional<double>& v) { return v ? json_number(*v) : nlohmann::json(nullptr); };
  auto& features = doc["features"] = nlohmann::json::array();
  for (const auto& f : report.features) {
    nlohmann::json jf;
    jf["feature"] = f.feature;
    jf["impurity"] = opt(f.impurity);
    if (f.permutation) {
      jf["permutation"] = {{"mean", json_number(f.permutation->mean)}, {"std", json_number(f.permutation->std)}};
    } else {
      jf["permutation"] = nullptr;
    }
    jf["residual_rf"] = opt(f.residual_rf);
    jf["residual_gs"] = opt(f.residual_gs);
    features.push_back(std::move(jf));
  }
  return doc;
}

inline void write_csv(std::ostream& out, const ImportanceReport& report) {
  csv::write_record(out, {"feature", "impurity", "permutation_mean", "permutation_std", "residual_rf", "residual_gs"});
  for (const auto& f : report.features) {
    csv::write_record(out, {f.feature, format_optional(f.impurity),
                            f.permutation ? format_double(f.permutation->mean) : "",
                            f.permutation ? format_double(f.permutation->std) : "", format_optional(f.residual_rf),
                            format_optional(f.residual_gs)});
  }
}

}  // namespace trendforest
