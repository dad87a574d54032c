#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <limits>
#include <optional>
#include <unordered_map>
#include <span>
#include <stdexcept>
#include <vector>

#include "trendforest/dataset.hpp"
#include "trendforest/forest.hpp"
#include "trendforest/parallel.hpp"

namespace trendforest {

/// Per-row Shapley attributions for a forest, row-major n x d.
struct ShapleyMatrix {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> phi;
  /// Expected forest output under the training-count distribution; every row
  /// satisfies base_value + sum(phi[row]) == prediction(row).
  double base_value = 0.0;

  double at(std::size_t row, std::size_t feature) const { return phi[row * d + feature]; }
  std::span<const double> row(std::size_t i) const { return {phi.data() + i * d, d}; }
  std::vector<double> column(std::size_t feature) const {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = at(i, feature);
    return out;
  }
};

namespace detail {

// Path-dependent TreeSHAP. A path element tracks the fraction of "feature
// absent" (zero) and "feature present" (one) flow through the unique
// features on the current root-to-node path, plus the permutation weight of
// subsets of each size.
class TreeShap {
 public:
  explicit TreeShap(const Tree& tree) : nodes_(tree.nodes()) {
    const std::size_t depth = tree.depth();
    path_.resize((depth + 2) * (depth + 3) / 2);
  }

  /// Adds this tree's attributions for row `x` into `phi`.
  void accumulate(std::span<const double> x, std::span<double> phi) {
    x_ = x;
    phi_ = phi;
    recurse(0, 0, path_.data(), 1.0, 1.0, kNoFeature);
  }

  /// Count-weighted mean of the leaf values.
  double expected_value() const {
    double sum = 0.0;
    for (const auto& node : nodes_) {
      if (node.is_leaf()) sum += node.value * static_cast<double>(node.count);
    }
    return sum / static_cast<double>(nodes_.front().count);
  }

 private:
  static constexpr std::size_t kNoFeature = static_cast<std::size_t>(-1);

  struct PathElement {
    std::size_t feature = kNoFeature;
    double zero_fraction = 0.0;
    double one_fraction = 0.0;
    double weight = 0.0;
  };

  static void extend(PathElement* path, std::size_t depth, double zero_fraction,
                     double one_fraction, std::size_t feature) {
    path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
    const double denom = static_cast<double>(depth + 1);
    for (std::size_t k = depth; k-- > 0;) {
      path[k + 1].weight += one_fraction * path[k].weight * static_cast<double>(k + 1) / denom;
      path[k].weight = zero_fraction * path[k].weight * static_cast<double>(depth - k) / denom;
    }
  }

  static void unwind(PathElement* path, std::size_t depth, std::size_t index) {
    const double one = path[index].one_fraction;
    const double zero = path[index].zero_fraction;
    double next_one_portion = path[depth].weight;
    const double denom = static_cast<double>(depth + 1);
    for (std::size_t k = depth; k-- > 0;) {
      if (one != 0.0) {
        const double tmp = path[k].weight;
        path[k].weight = next_one_portion * denom / (static_cast<double>(k + 1) * one);
        next_one_portion = tmp - path[k].weight * zero * static_cast<double>(depth - k) / denom;
      } else {
        path[k].weight = path[k].weight * denom / (zero * static_cast<double>(depth - k));
      }
    }
    for (std::size_t k = index; k < depth; ++k) {
      path[k].feature = path[k + 1].feature;
      path[k].zero_fraction = path[k + 1].zero_fraction;
      path[k].one_fraction = path[k + 1].one_fraction;
    }
  }

  static double unwound_sum(const PathElement* path, std::size_t depth, std::size_t index) {
    const double one = path[index].one_fraction;
    const double zero = path[index].zero_fraction;
    double next_one_portion = path[depth].weight;
    double total = 0.0;
    if (one != 0.0) {
      for (std::size_t k = depth; k-- > 0;) {
        const double tmp = next_one_portion / (static_cast<double>(k + 1) * one);
        total += tmp;
        next_one_portion = path[k].weight - tmp * zero * static_cast<double>(depth - k);
      }
    } else {
      for (std::size_t k = depth; k-- > 0;) {
        total += path[k].weight / (zero * static_cast<double>(depth - k));
      }
    }
    return total * static_cast<double>(depth + 1);
  }

  void recurse(std::size_t node_index, std::size_t depth, PathElement* parent_path,
               double zero_fraction, double one_fraction, std::size_t feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend(path, depth, zero_fraction, one_fraction, feature);

    const TreeNode& node = nodes_[node_index];
    if (node.is_leaf()) {
      for (std::size_t k = 1; k <= depth; ++k) {
        const double w = unwound_sum(path, depth, k);
        phi_[path[k].feature] += w * (path[k].one_fraction - path[k].zero_fraction) * node.value;
      }
      return;
    }

    const SplitRecord& split = *node.split;
    const auto left = static_cast<std::size_t>(node.left);
    const auto right = static_cast<std::size_t>(node.right);
    const bool goes_left = x_[split.feature_index] <= split.threshold;
    const std::size_t hot = goes_left ? left : right;
    const std::size_t cold = goes_left ? right : left;
    const double count = static_cast<double>(node.count);
    const double hot_zero = static_cast<double>(nodes_[hot].count) / count;
    const double cold_zero = static_cast<double>(nodes_[cold].count) / count;

    double incoming_zero = 1.0;
    double incoming_one = 1.0;
    std::size_t k = 0;
    for (; k <= depth; ++k) {
      if (path[k].feature == split.feature_index) break;
    }
    if (k <= depth) {
      incoming_zero = path[k].zero_fraction;
      incoming_one = path[k].one_fraction;
      unwind(path, depth, k);
      --depth;
    }
    recurse(hot, depth + 1, path, hot_zero * incoming_zero, incoming_one, split.feature_index);
    recurse(cold, depth + 1, path, cold_zero * incoming_zero, 0.0, split.feature_index);
  }

  const std::vector<TreeNode>& nodes_;
  std::vector<PathElement> path_;
  std::span<const double> x_;
  std::span<double> phi_;
};

}  // namespace detail

/// Exact path-dependent Shapley values of a single tree for row `x`.
inline std::vector<double> tree_shapley_values(const Tree& tree, std::span<const double> x) {
  std::vector<double> phi(x.size(), 0.0);
  detail::TreeShap(tree).accumulate(x, phi);
  return phi;
}

namespace detail {

// Batched evaluation of the same quantity. For a leaf, the path-dependent
// value only depends on which of the leaf's path features the row satisfies,
// so each leaf is expanded once per distinct satisfaction mask.
class LeafPathShap {
 public:
  explicit LeafPathShap(const Tree& tree) : nodes_(tree.nodes()) {
    std::vector<Constraint> path;
    collect(0, path);
  }

  /// False when some leaf depends on more features than a mask can hold.
  bool usable() const noexcept { return usable_; }

  /// Adds this tree's attributions for rows [lo, hi) into row-major `phi`.
  void accumulate(const Dataset& ds, std::size_t lo, std::size_t hi, std::span<double> phi) const {
    const std::size_t d = ds.d();
    const std::size_t rows = hi - lo;
    std::vector<std::uint64_t> masks(rows);
    std::unordered_map<std::uint64_t, std::size_t> memo;
    std::vector<double> cache;
    std::vector<double> poly;
    for (const auto& leaf : leaves_) {
      const std::size_t m = leaf.path.size();
      if (m == 0) continue;
      std::fill(masks.begin(), masks.end(), 0);
      for (std::size_t p = 0; p < m; ++p) {
        const auto& c = leaf.path[p];
        const auto col = ds.column(c.feature);
        for (std::size_t i = 0; i < rows; ++i) {
          const double v = col[lo + i];
          masks[i] |= static_cast<std::uint64_t>(v > c.lo && v <= c.hi) << p;
        }
      }
      memo.clear();
      cache.clear();
      for (std::size_t i = 0; i < rows; ++i) {
        auto [it, inserted] = memo.try_emplace(masks[i], cache.size());
        if (inserted) {
          cache.resize(cache.size() + m);
          contributions(leaf, masks[i], std::span<double>(cache.data() + it->second, m), poly);
        }
        const double* c = cache.data() + it->second;
        double* dst = phi.data() + (lo + i) * d;
        for (std::size_t p = 0; p < m; ++p) dst[leaf.path[p].feature] += c[p];
      }
    }
  }

 private:
  struct Constraint {
    std::size_t feature;
    double lo;    // row satisfies lo < x <= hi
    double hi;
    double zero;  // product of cover ratios along the path
  };
  struct Leaf {
    std::vector<Constraint> path;
    double value;
    std::vector<double> weights;  // s! (m-1-s)! / m!
  };

  void collect(std::size_t i, std::vector<Constraint>& path) {
    const TreeNode& node = nodes_[i];
    if (node.is_leaf()) {
      if (path.size() > 64) usable_ = false;
      Leaf leaf{path, node.value, {}};
      const std::size_t m = path.size();
      leaf.weights.resize(m);
      if (m > 0) {
        // w(0) = 1/m, w(s+1) = w(s) (s+1) / (m-1-s)
        leaf.weights[0] = 1.0 / static_cast<double>(m);
        for (std::size_t s = 0; s + 1 < m; ++s) {
          leaf.weights[s + 1] = leaf.weights[s] * static_cast<double>(s + 1) / static_cast<double>(m - 1 - s);
        }
      }
      leaves_.push_back(std::move(leaf));
      return;
    }
    const auto& split = *node.split;
    const double parent = static_cast<double>(node.count);
    for (int side = 0; side < 2; ++side) {
      const auto child = static_cast<std::size_t>(side == 0 ? node.left : node.right);
      const double ratio = static_cast<double>(nodes_[child].count) / parent;
      std::vector<Constraint> next = path;
      auto it = std::find_if(next.begin(), next.end(),
                             [&](const Constraint& c) { return c.feature == split.feature_index; });
      if (it == next.end()) {
        next.push_back({split.feature_index, -std::numeric_limits<double>::infinity(),
                        std::numeric_limits<double>::infinity(), 1.0});
        it = std::prev(next.end());
      }
      if (side == 0) {
        it->hi = std::min(it->hi, split.threshold);
      } else {
        it->lo = std::max(it->lo, split.threshold);
      }
      it->zero *= ratio;
      collect(child, next);
    }
  }

  // phi_k = v (o_k - z_k) sum_s w(s) [t^s] prod_{p != k} (z_p + o_p t)
  static void contributions(const Leaf& leaf, std::uint64_t mask, std::span<double> out,
                            std::vector<double>& poly) {
    const std::size_t m = leaf.path.size();
    auto on = [&](std::size_t p) { return ((mask >> p) & 1U) != 0; };
    // F(t) = prod_p (z_p + o_p t); factors with o_k = 0 are plain scalars.
    poly.assign(1, 1.0);
    for (std::size_t p = 0; p < m; ++p) {
      const double z = leaf.path[p].zero;
      if (on(p)) {
        poly.push_back(0.0);
        for (std::size_t s = poly.size() - 1; s > 0; --s) poly[s] = poly[s] * z + poly[s - 1];
        poly[0] *= z;
      } else {
        for (auto& c : poly) c *= z;
      }
    }
    const std::size_t degree = poly.size() - 1;
    double off_value = 0.0;
    if (degree < m) {
      for (std::size_t s = 0; s <= degree; ++s) off_value += poly[s] * leaf.weights[s];
      off_value *= -leaf.value;
    }
    for (std::size_t k = 0; k < m; ++k) {
      if (!on(k)) {
        out[k] = off_value;
        continue;
      }
      // F / (z_k + t), highest coefficient first
      const double z = leaf.path[k].zero;
      double q = poly[degree];
      double sum = q * leaf.weights[degree - 1];
      for (std::size_t s = degree - 1; s > 0; --s) {
        q = poly[s] - z * q;
        sum += q * leaf.weights[s - 1];
      }
      out[k] = leaf.value * (1.0 - z) * sum;
    }
  }

  const std::vector<TreeNode>& nodes_;
  std::vector<Leaf> leaves_;
  bool usable_ = true;
};

}  // namespace detail

/// Exact path-dependent Shapley values of `forest` for every row of `ds`:
/// per-tree attributions summed in tree order, then divided by the tree count.
inline ShapleyMatrix shapley_values(const Forest& forest, const Dataset& ds, std::size_t workers = 1) {
  if (ds.d() != forest.n_features()) throw std::invalid_argument("shapley: feature count mismatch");
  ShapleyMatrix out;
  out.n = ds.n();
  out.d = ds.d();
  out.phi.assign(out.n * out.d, 0.0);
  const auto n_trees = static_cast<double>(forest.trees().size());
  for (const auto& tree : forest.trees()) out.base_value += detail::TreeShap(tree).expected_value();
  out.base_value /= n_trees;

  std::vector<detail::LeafPathShap> batched;
  for (const auto& tree : forest.trees()) batched.emplace_back(tree);

  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (out.n + kBlock - 1) / kBlock;
  parallel_for(blocks, workers, [&](std::size_t b) {
    const std::size_t lo = b * kBlock;
    const std::size_t hi = std::min(out.n, lo + kBlock);
    std::vector<double> x(out.d);
    for (std::size_t t = 0; t < batched.size(); ++t) {
      if (batched[t].usable()) {
        batched[t].accumulate(ds, lo, hi, out.phi);
        continue;
      }
      detail::TreeShap shap(forest.trees()[t]);
      for (std::size_t i = lo; i < hi; ++i) {
        for (std::size_t j = 0; j < out.d; ++j) x[j] = ds.at(i, j);
        shap.accumulate(x, std::span<double>(out.phi.data() + i * out.d, out.d));
      }
    }
    for (std::size_t k = lo * out.d; k < hi * out.d; ++k) out.phi[k] /= n_trees;
  });
  return out;
}

}  // namespace trendforest
