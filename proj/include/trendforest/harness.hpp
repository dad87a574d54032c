#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trendforest/csv.hpp"
#include "trendforest/dataset.hpp"
#include "trendforest/forest.hpp"
#include "trendforest/forest_io.hpp"
#include "trendforest/importance.hpp"
#include "trendforest/parallel.hpp"
#include "trendforest/report_io.hpp"
#include "trendforest/rng.hpp"
#include "trendforest/synth.hpp"
#include "trendforest/trends.hpp"

namespace trendforest::harness {

inline constexpr double kZ95 = 1.96;
inline constexpr int kResultVersion = 1;

/// Summary of one cell's per-trial samples. Missing samples (NaN) are skipped.
struct Aggregate {
  double mean = 0.0;
  double std = 0.0;             // sample standard deviation (n - 1); 0 for one sample
  double ci_half_width = 0.0;   // 1.96 * std / sqrt(count)
  std::size_t count = 0;
  std::size_t missing = 0;
  /// Fewer than two samples: spread and interval are not informative.
  bool degenerate = true;

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

inline Aggregate aggregate(std::span<const double> samples) {
  Aggregate a;
  double sum = 0.0;
  for (double v : samples) {
    if (std::isnan(v)) {
      ++a.missing;
      continue;
    }
    sum += v;
    ++a.count;
  }
  if (a.count == 0) {
    a.mean = std::numeric_limits<double>::quiet_NaN();
    return a;
  }
  a.mean = sum / static_cast<double>(a.count);
  if (a.count >= 2) {
    double ss = 0.0;
    for (double v : samples) {
      if (!std::isnan(v)) ss += (v - a.mean) * (v - a.mean);
    }
    a.std = std::sqrt(ss / static_cast<double>(a.count - 1));
    a.ci_half_width = kZ95 * a.std / std::sqrt(static_cast<double>(a.count));
    a.degenerate = false;
  }
  return a;
}

/// Per-trial samples for every (estimator, feature, axis point), with aggregates.
struct ExperimentResult {
  std::string kind;
  std::string axis_name;
  std::vector<double> axis;
  std::vector<std::string> features;
  std::vector<std::string> estimators;
  std::size_t trials = 0;
  /// samples[cell_index(e, f, a)][trial]; NaN marks a missing value.
  std::vector<std::vector<double>> samples;
  std::vector<Aggregate> aggregates;
  nlohmann::json provenance;

  std::size_t cell_index(std::size_t estimator, std::size_t feature, std::size_t axis_point) const {
    return (estimator * features.size() + feature) * axis.size() + axis_point;
  }

  std::size_t estimator_index(std::string_view name) const { return index_of(estimators, name); }
  std::size_t feature_index(std::string_view name) const { return index_of(features, name); }

  const Aggregate& stats(std::string_view estimator, std::string_view feature, std::size_t axis_point = 0) const {
    return aggregates.at(cell_index(estimator_index(estimator), feature_index(feature), axis_point));
  }
  const std::vector<double>& cell(std::string_view estimator, std::string_view feature,
                                  std::size_t axis_point = 0) const {
    return samples.at(cell_index(estimator_index(estimator), feature_index(feature), axis_point));
  }

  void allocate() {
    samples.assign(estimators.size() * features.size() * axis.size(),
                   std::vector<double>(trials, std::numeric_limits<double>::quiet_NaN()));
  }

  void finalize() {
    aggregates.clear();
    for (const auto& s : samples) aggregates.push_back(aggregate(s));
  }

 private:
  static std::size_t index_of(const std::vector<std::string>& v, std::string_view name) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == name) return i;
    }
    throw std::out_of_range("experiment result: unknown name " + std::string(name));
  }
};

/// FNV-1a over the raw bytes of every column, the target and the names.
inline std::string fingerprint(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t j = 0; j < ds.d(); ++j) {
    feed(ds.feature_names()[j].data(), ds.feature_names()[j].size());
    feed(ds.column(j).data(), ds.n() * sizeof(double));
  }
  feed(ds.target().data(), ds.n() * sizeof(double));
  char buf[17];
  for (int i = 15; i >= 0; --i) {
    buf[i] = "0123456789abcdef"[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

struct RunOptions {
  std::size_t workers = 1;
  TrendOptions trends;
};

namespace detail {

inline std::vector<std::string> trend_estimator_names() {
  return {kTrendEstimators.begin(), kTrendEstimators.end()};
}

inline void store_trends(ExperimentResult& result, const TrendReport& report, std::size_t axis_point,
                         std::size_t trial) {
  for (std::size_t f = 0; f < report.features.size(); ++f) {
    const auto values = report.features[f].values();
    for (std::size_t e = 0; e < values.size(); ++e) {
      if (values[e]) result.samples[result.cell_index(e, f, axis_point)][trial] = *values[e];
    }
  }
}

}  // namespace detail

/// Trend estimators on D_w = (1 - w) base + w noise_t for every trial t and
/// grid weight w. Trial t draws its noise dataset from derive(1, t); the
/// forest for (t, k) is seeded from derive(2, t, k).
inline ExperimentResult run_noise_sweep(const Dataset& base, std::size_t trials, const std::vector<double>& grid,
                                        const ForestConfig& config, std::uint64_t seed,
                                        const RunOptions& options = {}) {
  if (trials == 0) throw std::invalid_argument("noise sweep: trials must be >= 1");
  if (grid.empty()) throw std::invalid_argument("noise sweep: empty grid");
  for (double w : grid) {
    if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("noise sweep: grid weights must lie in [0, 1]");
  }
  const SeededRng master(seed);
  ExperimentResult result;
  result.kind = "noise-sweep";
  result.axis_name = "w";
  result.axis = grid;
  result.features = base.feature_names();
  result.estimators = detail::trend_estimator_names();
  result.trials = trials;
  result.allocate();

  TrendOptions trend_options = options.trends;
  trend_options.workers = 1;
  parallel_for(trials * grid.size(), options.workers, [&](std::size_t job) {
    const std::size_t t = job / grid.size();
    const std::size_t k = job % grid.size();
    try {
      const Dataset noise = synth::noise_like(base, master.derive(1, t));
      const Dataset mixed = mix_noise(base, noise, grid[k]);
      ForestConfig cfg = config;
      cfg.workers = 1;
      cfg.seed = master.derive(2, t, k)();
      detail::store_trends(result, trend_report(mixed, cfg, trend_options), k, t);
    } catch (const std::exception&) {
      // cell stays missing
    }
  });
  result.finalize();
  result.provenance = {{"master_seed", seed},
                       {"trials", trials},
                       {"forest", config_to_json(config)},
                       {"rtr_normalization", to_string(options.trends.rtr_normalization)},
                       {"base_fingerprint", fingerprint(base)},
                       {"n", base.n()},
                       {"d", base.d()}};
  return result;
}

/// Trend estimators on `iterations` random subsets of floor(fraction * n) rows.
inline ExperimentResult run_bootstrap_trends(const Dataset& ds, std::size_t iterations, double fraction,
                                             const ForestConfig& config, std::uint64_t seed,
                                             const RunOptions& options = {}) {
  if (iterations == 0) throw std::invalid_argument("bootstrap: iterations must be >= 1");
  const SeededRng master(seed);
  ExperimentResult result;
  result.kind = "bootstrap";
  result.axis_name = "fraction";
  result.axis = {fraction};
  result.features = ds.feature_names();
  result.estimators = detail::trend_estimator_names();
  result.trials = iterations;
  result.allocate();

  TrendOptions trend_options = options.trends;
  trend_options.workers = 1;
  parallel_for(iterations, options.workers, [&](std::size_t it) {
    try {
      const Dataset subset = bootstrap_subset(ds, fraction, master.derive(1, it));
      ForestConfig cfg = config;
      cfg.workers = 1;
      cfg.seed = master.derive(2, it)();
      detail::store_trends(result, trend_report(subset, cfg, trend_options), 0, it);
    } catch (const std::exception&) {
    }
  });
  result.finalize();
  result.provenance = {{"master_seed", seed},
                       {"iterations", iterations},
                       {"fraction", fraction},
                       {"forest", config_to_json(config)},
                       {"rtr_normalization", to_string(options.trends.rtr_normalization)},
                       {"data_fingerprint", fingerprint(ds)},
                       {"n", ds.n()},
                       {"d", ds.d()}};
  return result;
}

inline const std::vector<std::string>& importance_estimator_names() {
  static const std::vector<std::string> names = {"impurity", "permutation", "permutation_l1", "residual_rf",
                                                 "residual_gs"};
  return names;
}

/// Independent importance reports; run r uses forest seed derive(2, r).
/// "permutation_l1" is the permutation mean divided by the L1 norm of all
/// permutation means of that run, comparable with the residual scores.
inline ExperimentResult run_importance_runs(const Dataset& ds, std::size_t runs, const ImportanceOptions& importance,
                                            const ForestConfig& config, std::uint64_t seed,
                                            const RunOptions& options = {}) {
  if (runs == 0) throw std::invalid_argument("importance runs: runs must be >= 1");
  const SeededRng master(seed);
  ExperimentResult result;
  result.kind = "importance-runs";
  result.axis_name = "run";
  result.axis = {0.0};
  result.features = ds.feature_names();
  result.estimators = importance_estimator_names();
  result.trials = runs;
  result.allocate();

  parallel_for(runs, options.workers, [&](std::size_t run) {
    try {
      ForestConfig cfg = config;
      cfg.workers = 1;
      cfg.seed = master.derive(2, run)();
      const ImportanceReport report = importance_report(ds, cfg, importance);
      double l1 = 0.0;
      for (const auto& f : report.features) {
        if (f.permutation) l1 += std::abs(f.permutation->mean);
      }
      for (std::size_t j = 0; j < report.features.size(); ++j) {
        const auto& f = report.features[j];
        auto put = [&](std::size_t e, double v) { result.samples[result.cell_index(e, j, 0)][run] = v; };
        if (f.impurity) put(0, *f.impurity);
        if (f.permutation) {
          put(1, f.permutation->mean);
          if (l1 > 0.0) put(2, f.permutation->mean / l1);
        }
        if (f.residual_rf && !report.residual_rf_all_zero) put(3, *f.residual_rf);
        if (f.residual_gs && !report.residual_gs_all_zero) put(4, *f.residual_gs);
      }
    } catch (const std::exception&) {
    }
  });
  result.finalize();
  result.provenance = {{"master_seed", seed},
                       {"runs", runs},
                       {"permutations_per_feature", importance.permutations},
                       {"repeats", importance.repeats},
                       {"gs_literal", importance.gs_literal},
                       {"forest", config_to_json(config)},
                       {"data_fingerprint", fingerprint(ds)},
                       {"n", ds.n()},
                       {"d", ds.d()}};
  return result;
}

/// Aggregates and provenance; per-trial samples go to samples.csv.
inline nlohmann::json to_json(const ExperimentResult& r) {
  nlohmann::json doc;
  doc["format"] = "trendforest.experiment";
  doc["version"] = kResultVersion;
  doc["kind"] = r.kind;
  doc["axis_name"] = r.axis_name;
  doc["axis"] = r.axis;
  doc["features"] = r.features;
  doc["estimators"] = r.estimators;
  doc["trials"] = r.trials;
  doc["provenance"] = r.provenance;
  auto& cells = doc["cells"] = nlohmann::json::array();
  for (std::size_t e = 0; e < r.estimators.size(); ++e) {
    for (std::size_t f = 0; f < r.features.size(); ++f) {
      for (std::size_t a = 0; a < r.axis.size(); ++a) {
        const Aggregate& g = r.aggregates[r.cell_index(e, f, a)];
        cells.push_back({{"estimator", r.estimators[e]},
                         {"feature", r.features[f]},
                         {"axis", r.axis[a]},
                         {"mean", json_number(g.mean)},
                         {"std", json_number(g.std)},
                         {"ci95_half_width", json_number(g.ci_half_width)},
                         {"count", g.count},
                         {"missing", g.missing},
                         {"degenerate", g.degenerate}});
      }
    }
  }
  return doc;
}

/// Long format: trial, axis value, feature, estimator, value.
inline void write_samples_csv(std::ostream& out, const ExperimentResult& r) {
  csv::write_record(out, {"trial", r.axis_name, "feature", "estimator", "value"});
  for (std::size_t t = 0; t < r.trials; ++t) {
    for (std::size_t a = 0; a < r.axis.size(); ++a) {
      for (std::size_t f = 0; f < r.features.size(); ++f) {
        for (std::size_t e = 0; e < r.estimators.size(); ++e) {
          csv::write_record(out, {std::to_string(t), format_double(r.axis[a]), r.features[f], r.estimators[e],
                                  format_double(r.samples[r.cell_index(e, f, a)][t])});
        }
      }
    }
  }
}

/// plotdata/<feature>.csv: one line per (axis point, estimator) with mean and CI bounds.
inline void write_plotdata(const std::filesystem::path& dir, const ExperimentResult& r) {
  std::filesystem::create_directories(dir);
  for (std::size_t f = 0; f < r.features.size(); ++f) {
    std::string name = r.features[f];
    for (char& c : name) {
      if (c == '/' || c == '\\') c = '_';
    }
    std::ofstream out(dir / (name + ".csv"));
    csv::write_record(out, {r.axis_name, "estimator", "mean", "std", "ci_low", "ci_high", "count"});
    for (std::size_t a = 0; a < r.axis.size(); ++a) {
      for (std::size_t e = 0; e < r.estimators.size(); ++e) {
        const Aggregate& g = r.aggregates[r.cell_index(e, f, a)];
        csv::write_record(out, {format_double(r.axis[a]), r.estimators[e], format_double(g.mean),
                                format_double(g.std), format_double(g.mean - g.ci_half_width),
                                format_double(g.mean + g.ci_half_width), std::to_string(g.count)});
      }
    }
  }
}

inline void write_experiment(const std::filesystem::path& out_dir, const ExperimentResult& r) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "result.json");
    out << to_json(r).dump(2) << '\n';
  }
  {
    std::ofstream out(out_dir / "samples.csv");
    write_samples_csv(out, r);
  }
  write_plotdata(out_dir / "plotdata", r);
}

}  // namespace trendforest::harness
