#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "trendforest/dataset.hpp"
#include "trendforest/parallel.hpp"
#include "trendforest/rng.hpp"

namespace trendforest {

struct ForestConfig {
  std::size_t n_trees = 100;
  std::optional<std::size_t> max_depth;  // unlimited when empty
  std::size_t min_samples_leaf = 1;
  std::size_t min_samples_split = 2;
  std::optional<std::size_t> mtry;  // ceil(d / 3) when empty
  bool bootstrap = true;
  std::uint64_t seed = 0;
  /// Threads used by fit(); has no influence on the fitted model.
  std::size_t workers = 1;

  std::size_t resolved_mtry(std::size_t d) const {
    const std::size_t m = mtry.value_or((d + 2) / 3);
    return std::clamp<std::size_t>(m, 1, d);
  }

  void validate(std::size_t d) const {
    if (n_trees == 0) throw std::invalid_argument("forest: n_trees must be positive");
    if (min_samples_leaf == 0) throw std::invalid_argument("forest: min_samples_leaf must be positive");
    if (min_samples_split < 2) throw std::invalid_argument("forest: min_samples_split must be >= 2");
    if (mtry && (*mtry == 0 || *mtry > d)) {
      throw std::invalid_argument("forest: mtry must lie in [1, d]");
    }
  }
};

/// Statistics of one split node: the partition classes it creates over the
/// training targets that reached it. Left holds feature values <= threshold.
struct SplitRecord {
  std::size_t feature_index = 0;
  double threshold = 0.0;
  double left_target_mean = 0.0;
  double right_target_mean = 0.0;
  std::size_t left_count = 0;
  std::size_t right_count = 0;
  /// (SSE(node) - SSE(left) - SSE(right)) / (samples at the root).
  double impurity_decrease = 0.0;

  friend bool operator==(const SplitRecord&, const SplitRecord&) = default;
};

/// Flat, preorder node of a regression tree. Internal nodes carry a split;
/// their left child is always the next node in the vector.
struct TreeNode {
  std::optional<SplitRecord> split;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;      // mean training target of the node
  std::size_t count = 0;   // training samples (with bootstrap multiplicity)

  bool is_leaf() const noexcept { return !split.has_value(); }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw std::invalid_argument("tree: no nodes");
  }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }

  /// Index of the leaf reached by `x` (go left iff value <= threshold).
  template <typename Features>
  std::size_t leaf_index(const Features& x) const {
    std::size_t i = 0;
    while (const auto& split = nodes_[i].split) {
      i = static_cast<std::size_t>(x[split->feature_index] <= split->threshold ? nodes_[i].left
                                                                               : nodes_[i].right);
    }
    return i;
  }

  template <typename Features>
  double predict(const Features& x) const {
    return nodes_[leaf_index(x)].value;
  }

  std::size_t depth() const { return depth_from(0); }
  std::size_t leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }

  friend bool operator==(const Tree&, const Tree&) = default;

 private:
  std::size_t depth_from(std::size_t i) const {
    const auto& node = nodes_[i];
    if (node.is_leaf()) return 0;
    return 1 + std::max(depth_from(static_cast<std::size_t>(node.left)),
                        depth_from(static_cast<std::size_t>(node.right)));
  }

  std::vector<TreeNode> nodes_;
};

class Forest {
 public:
  Forest() = default;
  Forest(std::vector<Tree> trees, ForestConfig config, std::vector<std::string> feature_names,
         std::vector<std::vector<std::size_t>> oob_indices = {})
      : trees_(std::move(trees)),
        config_(std::move(config)),
        feature_names_(std::move(feature_names)),
        oob_indices_(std::move(oob_indices)) {}

  const std::vector<Tree>& trees() const noexcept { return trees_; }
  const ForestConfig& config() const noexcept { return config_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  std::size_t n_features() const noexcept { return feature_names_.size(); }
  /// Rows left out of each tree's bootstrap sample (empty without bootstrap).
  const std::vector<std::vector<std::size_t>>& oob_indices() const noexcept { return oob_indices_; }

  /// True when no tree contains a split, e.g. every feature was constant.
  bool degenerate() const {
    return std::all_of(trees_.begin(), trees_.end(), [](const Tree& t) { return t.nodes().size() == 1; });
  }

  template <typename Features>
  double predict(const Features& x) const {
    double sum = 0.0;
    for (const auto& tree : trees_) sum += tree.predict(x);
    return sum / static_cast<double>(trees_.size());
  }

  std::vector<double> predict(const Dataset& ds) const {
    std::vector<double> out(ds.n(), 0.0);
    const auto& cols = ds.columns();
    for (const auto& tree : trees_) {
      for (std::size_t i = 0; i < ds.n(); ++i) {
        out[i] += tree.predict(ColumnRow{cols, i});
      }
    }
    for (double& v : out) v /= static_cast<double>(trees_.size());
    return out;
  }

  friend bool operator==(const Forest& a, const Forest& b) {
    return a.trees_ == b.trees_ && a.feature_names_ == b.feature_names_ &&
           a.oob_indices_ == b.oob_indices_;
  }

  /// Row view into column-major storage.
  struct ColumnRow {
    const std::vector<std::vector<double>>& columns;
    std::size_t row;
    double operator[](std::size_t feature) const { return columns[feature][row]; }
  };

 private:
  std::vector<Tree> trees_;
  ForestConfig config_;
  std::vector<std::string> feature_names_;
  std::vector<std::vector<std::size_t>> oob_indices_;
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& ds, const ForestConfig& config, SeededRng rng)
      : columns_(ds.columns()),
        target_(ds.target()),
        config_(config),
        mtry_(config.resolved_mtry(ds.d())),
        rng_(rng),
        feature_order_(ds.d()) {}

  Tree build(std::vector<std::size_t> samples) {
    samples_ = std::move(samples);
    root_count_ = static_cast<double>(samples_.size());
    nodes_.clear();
    grow(0, samples_.size(), 0);
    return Tree(std::move(nodes_));
  }

 private:
  struct Candidate {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = -std::numeric_limits<double>::infinity();
  };

  std::size_t grow(std::size_t begin, std::size_t end, std::size_t depth) {
    const std::size_t count = end - begin;
    const std::size_t id = nodes_.size();
    nodes_.emplace_back();
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t k = begin; k < end; ++k) {
      const double y = target_[samples_[k]];
      sum += y;
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
    nodes_[id].value = sum / static_cast<double>(count);
    nodes_[id].count = count;

    const bool can_split = count >= config_.min_samples_split &&
                           count >= 2 * config_.min_samples_leaf && lo < hi &&
                           (!config_.max_depth || depth < *config_.max_depth);
    if (!can_split) return id;

    const Candidate best = find_split(begin, end, sum);
    if (!best.found) return id;

    auto mid = std::stable_partition(
        samples_.begin() + static_cast<std::ptrdiff_t>(begin),
        samples_.begin() + static_cast<std::ptrdiff_t>(end),
        [&](std::size_t s) { return columns_[best.feature][s] <= best.threshold; });
    const auto split_at = static_cast<std::size_t>(mid - samples_.begin());

    SplitRecord rec;
    rec.feature_index = best.feature;
    rec.threshold = best.threshold;
    rec.left_count = split_at - begin;
    rec.right_count = end - split_at;
    const double parent_sse = sse(begin, end, nodes_[id].value);
    rec.left_target_mean = mean(begin, split_at);
    rec.right_target_mean = mean(split_at, end);
    const double child_sse =
        sse(begin, split_at, rec.left_target_mean) + sse(split_at, end, rec.right_target_mean);
    rec.impurity_decrease = std::max(0.0, parent_sse - child_sse) / root_count_;
    nodes_[id].split = rec;

    const std::size_t left = grow(begin, split_at, depth + 1);
    const std::size_t right = grow(split_at, end, depth + 1);
    nodes_[id].left = static_cast<std::int32_t>(left);
    nodes_[id].right = static_cast<std::int32_t>(right);
    return id;
  }

  // Draws features without replacement until mtry non-constant ones have been
  // scanned (or all features are exhausted).
  Candidate find_split(std::size_t begin, std::size_t end, double node_sum) {
    const std::size_t count = end - begin;
    const std::size_t d = feature_order_.size();
    std::iota(feature_order_.begin(), feature_order_.end(), std::size_t{0});
    pairs_.resize(count);
    Candidate best;
    std::size_t informative = 0;
    const double parent_term = node_sum * node_sum / static_cast<double>(count);
    const std::size_t min_leaf = config_.min_samples_leaf;

    for (std::size_t k = 0; k < d && informative < mtry_; ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(rng_.below(d - k));
      std::swap(feature_order_[k], feature_order_[pick]);
      const std::size_t f = feature_order_[k];

      const auto& col = columns_[f];
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t s = samples_[begin + i];
        pairs_[i] = {col[s], target_[s]};
      }
      std::sort(pairs_.begin(), pairs_.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      if (!(pairs_.front().first < pairs_.back().first)) continue;
      ++informative;

      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < count; ++i) {
        left_sum += pairs_[i].second;
        if (!(pairs_[i].first < pairs_[i + 1].first)) continue;
        const std::size_t nl = i + 1;
        const std::size_t nr = count - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double right_sum = node_sum - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) - parent_term;
        double threshold = 0.5 * (pairs_[i].first + pairs_[i + 1].first);
        if (threshold >= pairs_[i + 1].first) threshold = pairs_[i].first;
        if (better(gain, f, threshold, best)) best = {true, f, threshold, gain};
      }
    }
    return best;
  }

  static bool better(double gain, std::size_t feature, double threshold, const Candidate& best) {
    if (!best.found || gain > best.gain) return true;
    if (gain < best.gain) return false;
    if (feature != best.feature) return feature < best.feature;
    return threshold < best.threshold;
  }

  double mean(std::size_t begin, std::size_t end) const {
    double s = 0.0;
    for (std::size_t k = begin; k < end; ++k) s += target_[samples_[k]];
    return s / static_cast<double>(end - begin);
  }

  double sse(std::size_t begin, std::size_t end, double m) const {
    double s = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const double e = target_[samples_[k]] - m;
      s += e * e;
    }
    return s;
  }

  const std::vector<std::vector<double>>& columns_;
  std::span<const double> target_;
  const ForestConfig& config_;
  std::size_t mtry_;
  SeededRng rng_;
  std::vector<std::size_t> feature_order_;
  std::vector<std::size_t> samples_;
  std::vector<std::pair<double, double>> pairs_;
  std::vector<TreeNode> nodes_;
  double root_count_ = 1.0;
};

}  // namespace detail

/// Grows a random forest of variance-reduction regression trees.
///
/// Tree t draws everything from the stream SeededRng(config.seed).derive(t),
/// so the result does not depend on config.workers.
inline Forest fit(const Dataset& ds, const ForestConfig& config) {
  config.validate(ds.d());
  if (ds.n() < config.min_samples_split) {
    throw std::invalid_argument("forest: fewer samples than min_samples_split");
  }
  const std::size_t n = ds.n();
  std::vector<Tree> trees(config.n_trees);
  std::vector<std::vector<std::size_t>> oob(config.bootstrap ? config.n_trees : 0);
  const SeededRng master(config.seed);

  parallel_for(config.n_trees, config.workers, [&](std::size_t t) {
    SeededRng rng = master.derive(t);
    std::vector<std::size_t> samples(n);
    if (config.bootstrap) {
      std::vector<bool> drawn(n, false);
      for (auto& s : samples) {
        s = static_cast<std::size_t>(rng.below(n));
        drawn[s] = true;
      }
      std::sort(samples.begin(), samples.end());
      for (std::size_t i = 0; i < n; ++i) {
        if (!drawn[i]) oob[t].push_back(i);
      }
    } else {
      std::iota(samples.begin(), samples.end(), std::size_t{0});
    }
    detail::TreeBuilder builder(ds, config, rng.derive(1));
    trees[t] = builder.build(std::move(samples));
  });
  return Forest(std::move(trees), config, ds.feature_names(), std::move(oob));
}

/// Every split on `feature` across the forest, ordered by (tree, preorder).
inline std::vector<SplitRecord> splits_for_feature(const Forest& forest, std::size_t feature) {
  if (feature >= forest.n_features()) throw std::out_of_range("splits_for_feature: bad feature index");
  std::vector<SplitRecord> out;
  for (const auto& tree : forest.trees()) {
    for (const auto& node : tree.nodes()) {
      if (node.split && node.split->feature_index == feature) out.push_back(*node.split);
    }
  }
  return out;
}

/// Mean decrease in impurity: per-feature sum of sample-weighted SSE
/// decreases, averaged over trees and normalized to sum to one. All zeros if
/// the forest has no split.
inline std::vector<double> impurity_importance(const Forest& forest) {
  std::vector<double> imp(forest.n_features(), 0.0);
  for (const auto& tree : forest.trees()) {
    for (const auto& node : tree.nodes()) {
      if (node.split) imp[node.split->feature_index] += node.split->impurity_decrease;
    }
  }
  double total = 0.0;
  for (double& v : imp) {
    v /= static_cast<double>(forest.trees().size());
    total += v;
  }
  if (total > 0.0) {
    for (double& v : imp) v /= total;
  }
  return imp;
}

/// Coefficient of determination of `prediction` against `truth`.
inline double r_squared(std::span<const double> truth, std::span<const double> prediction) {
  double mean = 0.0;
  for (double y : truth) mean += y;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - prediction[i]) * (truth[i] - prediction[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

}  // namespace trendforest
