#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "trendforest/csv.hpp"
#include "trendforest/rng.hpp"

namespace trendforest {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Column-major table of real-valued features plus a real target.
///
/// Immutable once built; construction enforces equal column lengths, n >= 1,
/// d >= 1, finite values and unique feature names.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<std::vector<double>> columns, std::vector<double> target,
          std::vector<std::string> feature_names, std::string target_name = "target")
      : columns_(std::move(columns)),
        target_(std::move(target)),
        feature_names_(std::move(feature_names)),
        target_name_(std::move(target_name)) {
    validate();
  }

  std::size_t n() const noexcept { return target_.size(); }
  std::size_t d() const noexcept { return columns_.size(); }

  std::span<const double> column(std::size_t feature) const { return columns_.at(feature); }
  std::span<const double> target() const noexcept { return target_; }
  const std::vector<std::vector<double>>& columns() const noexcept { return columns_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::string& target_name() const noexcept { return target_name_; }

  double at(std::size_t row, std::size_t feature) const { return columns_[feature][row]; }

  std::vector<double> row(std::size_t i) const {
    std::vector<double> out(d());
    for (std::size_t j = 0; j < d(); ++j) out[j] = columns_[j][i];
    return out;
  }

  std::optional<std::size_t> feature_index(std::string_view name) const {
    for (std::size_t j = 0; j < feature_names_.size(); ++j) {
      if (feature_names_[j] == name) return j;
    }
    return std::nullopt;
  }

  /// Rows dropped during ingestion (non-finite or unparseable values).
  std::size_t dropped_rows() const noexcept { return dropped_rows_; }
  void set_dropped_rows(std::size_t count) noexcept { dropped_rows_ = count; }

  /// New dataset with the given rows, in the given order (duplicates allowed).
  Dataset select_rows(std::span<const std::size_t> rows) const {
    std::vector<std::vector<double>> cols(d(), std::vector<double>(rows.size()));
    std::vector<double> y(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      for (std::size_t j = 0; j < d(); ++j) cols[j][k] = columns_[j].at(rows[k]);
      y[k] = target_.at(rows[k]);
    }
    return Dataset(std::move(cols), std::move(y), feature_names_, target_name_);
  }

  Dataset select_features(std::span<const std::size_t> features) const {
    std::vector<std::vector<double>> cols;
    std::vector<std::string> names;
    for (std::size_t j : features) {
      cols.push_back(columns_.at(j));
      names.push_back(feature_names_.at(j));
    }
    return Dataset(std::move(cols), target_, std::move(names), target_name_);
  }

  Dataset with_target(std::vector<double> target, std::string name = "target") const {
    return Dataset(columns_, std::move(target), feature_names_, std::move(name));
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.columns_ == b.columns_ && a.target_ == b.target_ &&
           a.feature_names_ == b.feature_names_ && a.target_name_ == b.target_name_;
  }

 private:
  void validate() const {
    if (target_.empty()) throw DatasetError("dataset must contain at least one row");
    if (columns_.empty()) throw DatasetError("dataset must contain at least one feature");
    if (feature_names_.size() != columns_.size()) {
      throw DatasetError("feature name count does not match column count");
    }
    std::set<std::string_view> seen;
    for (const auto& name : feature_names_) {
      if (!seen.insert(name).second) throw DatasetError("duplicate feature name: " + name);
    }
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (columns_[j].size() != target_.size()) {
        throw DatasetError("column '" + feature_names_[j] + "' has wrong length");
      }
      if (!std::all_of(columns_[j].begin(), columns_[j].end(),
                       [](double v) { return std::isfinite(v); })) {
        throw DatasetError("column '" + feature_names_[j] + "' contains non-finite values");
      }
    }
    if (!std::all_of(target_.begin(), target_.end(), [](double v) { return std::isfinite(v); })) {
      throw DatasetError("target contains non-finite values");
    }
  }

  std::vector<std::vector<double>> columns_;
  std::vector<double> target_;
  std::vector<std::string> feature_names_;
  std::string target_name_ = "target";
  std::size_t dropped_rows_ = 0;
};

/// category label -> ordinal rank, per column name.
using OrdinalMaps = std::map<std::string, std::map<std::string, double>>;

struct CsvOptions {
  std::string target_column;
  /// Feature columns to keep, in order. Empty means every non-target column.
  std::vector<std::string> feature_columns;
  OrdinalMaps ordinal_maps;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_real(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

}  // namespace detail

/// Parses an RFC-4180 CSV with a header row.
///
/// Columns named in `ordinal_maps` are mapped label -> rank; all others must
/// be numeric. A row with any empty, unparseable, unmapped or non-finite
/// value in a used column is dropped and counted in Dataset::dropped_rows().
/// A used column in which no row parses and which has no ordinal map is an
/// error, as is a missing file, a missing target or zero surviving rows.
inline Dataset load_csv(std::istream& in, const CsvOptions& options) {
  csv::Row header;
  if (!csv::read_record(in, header)) throw DatasetError("csv: missing header row");
  if (header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);
  for (auto& h : header) h = std::string(detail::trim(h));

  auto find_column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DatasetError("csv: column not found: " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t target_idx = find_column(options.target_column);

  std::vector<std::size_t> feature_idx;
  std::vector<std::string> names;
  if (options.feature_columns.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j == target_idx) continue;
      feature_idx.push_back(j);
      names.push_back(header[j]);
    }
  } else {
    for (const auto& name : options.feature_columns) {
      feature_idx.push_back(find_column(name));
      names.push_back(name);
    }
  }
  for (const auto& [name, map] : options.ordinal_maps) {
    if (std::find(header.begin(), header.end(), name) == header.end()) {
      throw DatasetError("csv: ordinal map given for unknown column: " + name);
    }
  }

  std::vector<std::size_t> used = feature_idx;
  used.push_back(target_idx);
  std::vector<const std::map<std::string, double>*> maps(header.size(), nullptr);
  for (std::size_t j : used) {
    auto it = options.ordinal_maps.find(header[j]);
    if (it != options.ordinal_maps.end()) maps[j] = &it->second;
  }

  std::vector<std::vector<double>> values(used.size());
  std::vector<std::size_t> parsed_count(used.size(), 0);
  std::size_t dropped = 0;
  std::size_t records = 0;
  csv::Row record;
  std::vector<double> row(used.size());
  while (csv::read_record(in, record)) {
    if (record.size() == 1 && detail::trim(record[0]).empty()) continue;  // blank line
    ++records;
    bool ok = record.size() == header.size();
    for (std::size_t k = 0; ok && k < used.size(); ++k) {
      const std::string& raw = record[used[k]];
      std::optional<double> v;
      if (maps[used[k]] != nullptr) {
        auto it = maps[used[k]]->find(std::string(detail::trim(raw)));
        if (it != maps[used[k]]->end()) v = it->second;
      } else {
        v = detail::parse_real(raw);
      }
      if (v) {
        ++parsed_count[k];
        row[k] = *v;
      } else {
        ok = false;
      }
    }
    if (!ok) {
      ++dropped;
      continue;
    }
    for (std::size_t k = 0; k < used.size(); ++k) values[k].push_back(row[k]);
  }
  for (std::size_t k = 0; k < used.size(); ++k) {
    if (records > 0 && parsed_count[k] == 0) {
      throw DatasetError("csv: column '" + header[used[k]] +
                         "' is neither numeric nor ordinal-mapped");
    }
  }
  if (values.back().empty()) throw DatasetError("csv: no rows survived parsing");

  std::vector<double> target = std::move(values.back());
  values.pop_back();
  Dataset ds(std::move(values), std::move(target), std::move(names), header[target_idx]);
  ds.set_dropped_rows(dropped);
  return ds;
}

inline Dataset load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("csv: cannot open file: " + path);
  return load_csv(in, options);
}

struct StandardizationParams {
  /// d feature entries followed by the target entry.
  std::vector<double> means;
  std::vector<double> stds;
  /// Columns with zero variance; their std is recorded as 1.
  std::vector<bool> constant;

  bool any_constant() const {
    return std::find(constant.begin(), constant.end(), true) != constant.end();
  }
};

namespace detail {

inline std::pair<double, double> mean_and_population_std(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

inline std::vector<double> zscore(std::span<const double> v, double& mean_out, double& std_out,
                                  bool& constant_out) {
  auto [mean, sd] = mean_and_population_std(v);
  const double scale = std::max(std::abs(mean), 1.0);
  constant_out = !(sd > 1e-12 * scale);
  std_out = constant_out ? 1.0 : sd;
  mean_out = mean;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / std_out;
  if (constant_out) {
    std::fill(out.begin(), out.end(), 0.0);
  }
  return out;
}

}  // namespace detail

/// Z-scores every feature column and the target with population variance.
inline std::pair<Dataset, StandardizationParams> standardize(const Dataset& ds) {
  if (ds.n() < 2) throw DatasetError("standardize requires at least two rows");
  StandardizationParams params;
  params.means.resize(ds.d() + 1);
  params.stds.resize(ds.d() + 1);
  params.constant.resize(ds.d() + 1);

  auto zscore_column = [&](std::size_t j, std::span<const double> source) {
    bool constant = false;
    auto z = detail::zscore(source, params.means[j], params.stds[j], constant);
    params.constant[j] = constant;
    return z;
  };
  std::vector<std::vector<double>> cols(ds.d());
  for (std::size_t j = 0; j < ds.d(); ++j) cols[j] = zscore_column(j, ds.column(j));
  auto target = zscore_column(ds.d(), ds.target());
  Dataset out(std::move(cols), std::move(target), ds.feature_names(), ds.target_name());
  return {std::move(out), std::move(params)};
}

/// Inverse of standardize for one value of column `j` (j == d is the target).
inline double destandardize(const StandardizationParams& p, std::size_t j, double z) {
  return p.means.at(j) + p.stds.at(j) * z;
}

/// Elementwise (1 - w) * base + w * noise on every feature and the target.
inline Dataset mix_noise(const Dataset& base, const Dataset& noise, double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw DatasetError("mix_noise: weight must lie in [0, 1]");
  if (base.n() != noise.n() || base.d() != noise.d() ||
      base.feature_names() != noise.feature_names()) {
    throw DatasetError("mix_noise: base and noise datasets differ in shape or feature names");
  }
  // b + w (n - b) is exact at both ends of the interval.
  auto mix = [w](std::span<const double> b, std::span<const double> n) {
    std::vector<double> out(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
      out[i] = w == 1.0 ? n[i] : b[i] + w * (n[i] - b[i]);
    }
    return out;
  };
  std::vector<std::vector<double>> cols(base.d());
  for (std::size_t j = 0; j < base.d(); ++j) cols[j] = mix(base.column(j), noise.column(j));
  return Dataset(std::move(cols), mix(base.target(), noise.target()), base.feature_names(),
                 base.target_name());
}

/// floor(fraction * n) rows drawn uniformly without replacement.
inline Dataset bootstrap_subset(const Dataset& ds, double fraction, SeededRng rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw DatasetError("bootstrap_subset: fraction must lie in (0, 1]");
  }
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ds.n())));
  if (keep == 0) throw DatasetError("bootstrap_subset: subset would be empty");
  std::vector<std::size_t> rows(ds.n());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `keep` slots are the sample.
  for (std::size_t i = 0; i < keep; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(ds.n() - i));
    std::swap(rows[i], rows[j]);
  }
  rows.resize(keep);
  return ds.select_rows(rows);
}

}  // namespace trendforest
