#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "trendforest/dataset.hpp"
#include "trendforest/forest.hpp"
#include "trendforest/parallel.hpp"
#include "trendforest/rng.hpp"
#include "trendforest/stats.hpp"

namespace trendforest {

struct PermutationScore {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over repeats
};

/// Drop in training R^2 when one column is shuffled, per feature. Feature j,
/// repeat r shuffles with rng.derive(j, r).
inline std::vector<PermutationScore> permutation_importance(const Forest& forest, const Dataset& ds,
                                                            std::size_t repeats, SeededRng rng) {
  if (repeats == 0) throw std::invalid_argument("permutation_importance: repeats must be >= 1");
  if (ds.d() != forest.n_features()) throw std::invalid_argument("permutation_importance: feature mismatch");
  const double baseline = r_squared(ds.target(), forest.predict(ds));
  std::vector<PermutationScore> out(ds.d());
  for (std::size_t j = 0; j < ds.d(); ++j) {
    std::vector<double> drops(repeats);
    for (std::size_t r = 0; r < repeats; ++r) {
      auto columns = ds.columns();
      SeededRng shuffler = rng.derive(j, r);
      shuffler.shuffle(std::span<double>(columns[j]));
      const Dataset permuted(std::move(columns), std::vector<double>(ds.target().begin(), ds.target().end()),
                             ds.feature_names(), ds.target_name());
      drops[r] = baseline - r_squared(ds.target(), forest.predict(permuted));
    }
    double mean = 0.0;
    for (double v : drops) mean += v;
    mean /= static_cast<double>(repeats);
    double var = 0.0;
    for (double v : drops) var += (v - mean) * (v - mean);
    out[j] = {mean, std::sqrt(var / static_cast<double>(repeats))};
  }
  return out;
}

enum class ResidualKind { residual_forest, gram_schmidt };

/// How the residual of the next column is computed from the previous ones.
struct ResidualAlgorithm {
  ResidualKind kind = ResidualKind::gram_schmidt;
  /// Gram-Schmidt only: use sum_i Cov(F, W_i) / Var(F) * F instead of the
  /// projection onto the W_i.
  bool gs_literal = false;
};

inline constexpr double kGramSchmidtMinVariance = 1e-12;

namespace detail {

inline std::vector<double> centered(std::span<const double> v) {
  const double m = mean_of(v);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - m;
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

/// Covariance projection of `target` onto the span of `basis`:
///   sum_i Cov(F, W_i) / Var(W_i) * (W_i - mean(W_i))
/// over basis vectors with Var(W_i) > kGramSchmidtMinVariance. The basis is
/// assumed mutually uncorrelated (as it is inside a residual chain); the
/// coefficients are accumulated on the running residual (modified
/// Gram-Schmidt), which is identical in exact arithmetic and keeps the
/// residual orthogonal to every retained W_i in floating point.
inline std::vector<double> residual_project_gs(std::span<const double> target,
                                               const std::vector<std::vector<double>>& basis,
                                               bool literal = false) {
  const std::size_t n = target.size();
  if (n < 2) throw std::invalid_argument("residual_project_gs: need at least two rows");
  for (const auto& w : basis) {
    if (w.size() != n) throw std::invalid_argument("residual_project_gs: length mismatch");
  }
  std::vector<double> projection(n, 0.0);
  if (basis.empty()) return projection;

  const auto f = detail::centered(target);
  if (literal) {
    const double var_f = detail::dot(f, f);
    if (!(var_f > kGramSchmidtMinVariance * static_cast<double>(n))) return projection;
    double coef = 0.0;
    for (const auto& w : basis) coef += detail::dot(f, detail::centered(w)) / var_f;
    for (std::size_t i = 0; i < n; ++i) projection[i] = coef * f[i];
    return projection;
  }

  std::vector<double> residual = f;
  for (const auto& w : basis) {
    const auto wc = detail::centered(w);
    const double var_w = detail::dot(wc, wc);
    if (!(var_w > kGramSchmidtMinVariance * static_cast<double>(n))) continue;
    const double coef = detail::dot(residual, wc) / var_w;
    for (std::size_t i = 0; i < n; ++i) {
      projection[i] += coef * wc[i];
      residual[i] -= coef * wc[i];
    }
  }
  return projection;
}

/// Training-row predictions of a forest fitted on the basis columns with
/// `target` as the dependent variable. Empty basis: the mean of `target`.
inline std::vector<double> residual_project_rf(std::span<const double> target,
                                               const std::vector<std::vector<double>>& basis,
                                               const ForestConfig& config) {
  const std::size_t n = target.size();
  if (basis.empty()) return std::vector<double>(n, detail::mean_of(target));
  std::vector<std::string> names;
  for (std::size_t i = 0; i < basis.size(); ++i) names.push_back("w" + std::to_string(i));
  const Dataset ds(basis, std::vector<double>(target.begin(), target.end()), std::move(names));
  ForestConfig inner = config;
  inner.workers = 1;
  inner.mtry.reset();
  if (config.mtry) inner.mtry = std::min(*config.mtry, basis.size());
  return fit(ds, inner).predict(ds);
}

/// Builds the residual chain for feature `order`: W_0 = F_order[0],
/// W_j = F_order[j] - A(W_0 .. W_{j-1}). Columns are returned in chain order.
inline std::vector<std::vector<double>> residual_chain(const Dataset& ds, std::span<const std::size_t> order,
                                                       const ResidualAlgorithm& alg,
                                                       const ForestConfig& config, SeededRng rng) {
  std::vector<std::vector<double>> chain;
  chain.reserve(order.size());
  for (std::size_t j = 0; j < order.size(); ++j) {
    const auto f = ds.column(order[j]);
    std::vector<double> w(f.begin(), f.end());
    if (j > 0) {
      std::vector<double> predicted;
      if (alg.kind == ResidualKind::gram_schmidt) {
        predicted = residual_project_gs(f, chain, alg.gs_literal);
        w = detail::centered(f);
      } else {
        ForestConfig inner = config;
        inner.seed = rng.derive(j)();
        predicted = residual_project_rf(f, chain, inner);
      }
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= predicted[i];
      if (alg.kind == ResidualKind::gram_schmidt) {
        // Nothing left but rounding noise: make it exactly constant so no
        // tree splits on it.
        const auto wc = detail::centered(w);
        if (!(detail::dot(wc, wc) > kGramSchmidtMinVariance * static_cast<double>(w.size()))) {
          std::fill(w.begin(), w.end(), 0.0);
        }
      }
    }
    chain.push_back(std::move(w));
  }
  return chain;
}

/// Performance of a single-feature model, used to weight the chain importance.
enum class WeightMetric { pearson, r_squared };

struct ResidualImportance {
  std::vector<double> scores;            // f~ / ||f~||_1
  std::vector<double> raw;               // f~_i = weight_i * FI_i
  std::vector<double> chain_importance;  // FI_i, mean over chains
  std::vector<double> weights;
  std::size_t chains_per_feature = 0;
  bool all_zero = false;
  bool negative_weight = false;
};

namespace detail {

inline std::uint64_t permutation_key(std::span<const std::size_t> perm) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (std::size_t v : perm) h = mix_stream(h, v);
  return h;
}

/// Orders of the other features (feature placed last). With
/// (d-1)! <= m every order is used, repeated in whole cycles until at least m
/// chains exist; otherwise m orders are drawn uniformly with replacement. The
/// result is sorted so both routes reduce in the same order.
struct ChainSpec {
  std::vector<std::size_t> order;
  std::size_t replicate = 0;
};

inline std::vector<ChainSpec> chain_orders(std::size_t d, std::size_t feature, std::size_t m, bool exhaustive,
                                           SeededRng rng) {
  std::vector<std::size_t> others;
  for (std::size_t j = 0; j < d; ++j) {
    if (j != feature) others.push_back(j);
  }
  std::uint64_t total = 1;
  bool overflow = false;
  for (std::size_t k = 2; k <= others.size(); ++k) {
    if (total > std::numeric_limits<std::uint64_t>::max() / k) {
      overflow = true;
      break;
    }
    total *= k;
  }

  std::vector<ChainSpec> chains;
  if (exhaustive || (!overflow && total <= m)) {
    const std::size_t cycles = exhaustive ? 1 : (m + total - 1) / total;
    std::vector<std::size_t> perm = others;
    do {
      for (std::size_t r = 0; r < cycles; ++r) {
        auto order = perm;
        order.push_back(feature);
        chains.push_back({std::move(order), r});
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return chains;
  }

  // Repeated draws of one order get distinct replicate ids, hence distinct
  // chain seeds.
  std::map<std::vector<std::size_t>, std::size_t> drawn;
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<std::size_t> perm = others;
    rng.shuffle(std::span<std::size_t>(perm));
    ++drawn[std::move(perm)];
  }
  for (const auto& [perm, count] : drawn) {
    for (std::size_t r = 0; r < count; ++r) {
      auto order = perm;
      order.push_back(feature);
      chains.push_back({std::move(order), r});
    }
  }
  return chains;
}

inline ResidualImportance residual_importance_impl(const Dataset& ds, const ResidualAlgorithm& alg,
                                                   std::size_t m, bool exhaustive, const ForestConfig& config,
                                                   WeightMetric metric, SeededRng rng) {
  const std::size_t d = ds.d();
  ResidualImportance out;
  out.scores.assign(d, 0.0);
  out.raw.assign(d, 0.0);
  out.chain_importance.assign(d, 0.0);
  out.weights.assign(d, 0.0);
  if (d == 1) {
    out.scores[0] = out.raw[0] = out.chain_importance[0] = out.weights[0] = 1.0;
    out.chains_per_feature = 1;
    return out;
  }

  struct Job {
    std::size_t feature;
    ChainSpec spec;
    double importance = 0.0;
  };
  std::vector<Job> jobs;
  std::vector<std::size_t> first_job(d + 1, 0);
  for (std::size_t i = 0; i < d; ++i) {
    first_job[i] = jobs.size();
    for (auto& spec : chain_orders(d, i, m, exhaustive, rng.derive(0, i))) {
      jobs.push_back({i, std::move(spec)});
    }
  }
  first_job[d] = jobs.size();

  ForestConfig inner = config;
  inner.workers = 1;
  parallel_for(jobs.size() + d, config.workers, [&](std::size_t k) {
    if (k >= jobs.size()) {
      // Single-feature model R_i on raw F_i.
      const std::size_t i = k - jobs.size();
      const std::size_t only[] = {i};
      const Dataset single = ds.select_features(only);
      ForestConfig cfg = inner;
      cfg.mtry.reset();
      cfg.seed = rng.derive(2, i)();
      const auto pred = fit(single, cfg).predict(single);
      if (metric == WeightMetric::pearson) {
        out.weights[i] = pearson(pred, ds.target()).value;
      } else {
        out.weights[i] = r_squared(ds.target(), pred);
      }
      return;
    }
    Job& job = jobs[k];
    const SeededRng chain_rng =
        rng.derive(1, job.feature, detail::permutation_key(job.spec.order), job.spec.replicate);
    auto chain = residual_chain(ds, job.spec.order, alg, inner, chain_rng);
    std::vector<std::string> names;
    for (std::size_t j = 0; j < chain.size(); ++j) names.push_back("w" + std::to_string(j));
    const Dataset w(std::move(chain), std::vector<double>(ds.target().begin(), ds.target().end()),
                    std::move(names));
    ForestConfig cfg = inner;
    cfg.seed = chain_rng.derive(0)();
    job.importance = impurity_importance(fit(w, cfg)).back();
  });

  for (std::size_t i = 0; i < d; ++i) {
    double sum = 0.0;
    for (std::size_t k = first_job[i]; k < first_job[i + 1]; ++k) sum += jobs[k].importance;
    const auto count = first_job[i + 1] - first_job[i];
    out.chain_importance[i] = sum / static_cast<double>(count);
    out.chains_per_feature = count;
    out.raw[i] = out.weights[i] * out.chain_importance[i];
    if (out.weights[i] < 0.0) out.negative_weight = true;
  }
  double norm = 0.0;
  for (double v : out.raw) norm += std::abs(v);
  if (norm > 0.0) {
    for (std::size_t i = 0; i < d; ++i) out.scores[i] = out.raw[i] / norm;
  } else {
    out.all_zero = true;
  }
  return out;
}

}  // namespace detail

/// Residual-based feature importance with m sampled feature orders per feature.
///
/// For each feature i and each order placing i last, the residual chain is
/// built, a forest is fitted on the chain columns against the target and the
/// impurity importance of the last column is recorded. The mean over orders
/// is weighted by the performance of a forest trained on F_i alone and the
/// vector is L1-normalized (signs are kept).
///
/// Each chain draws from rng.derive(1, i, key(order), replicate), so the
/// value for a given order does not depend on how the order was selected.
inline ResidualImportance residual_importance(const Dataset& ds, const ResidualAlgorithm& alg, std::size_t m,
                                              const ForestConfig& config, SeededRng rng,
                                              WeightMetric metric = WeightMetric::pearson) {
  if (m == 0) throw std::invalid_argument("residual_importance: m must be >= 1");
  return detail::residual_importance_impl(ds, alg, m, false, config, metric, rng);
}

/// Same estimator over every order of the other features, each used once.
inline ResidualImportance residual_importance_exhaustive(const Dataset& ds, const ResidualAlgorithm& alg,
                                                         const ForestConfig& config, SeededRng rng,
                                                         WeightMetric metric = WeightMetric::pearson) {
  if (ds.d() > 9) throw std::invalid_argument("residual_importance_exhaustive: d too large to enumerate");
  return detail::residual_importance_impl(ds, alg, 0, true, config, metric, rng);
}

struct ImportanceOptions {
  std::size_t permutations = 20;  // m, orders per feature
  std::size_t repeats = 5;        // permutation-importance shuffles
  bool impurity = true;
  bool permutation = true;
  bool residual_rf = true;
  bool residual_gs = true;
  bool gs_literal = false;
  WeightMetric weight = WeightMetric::pearson;
};

struct FeatureImportance {
  std::string feature;
  std::optional<double> impurity;
  std::optional<PermutationScore> permutation;
  std::optional<double> residual_rf;
  std::optional<double> residual_gs;
};

struct ImportanceReport {
  std::vector<FeatureImportance> features;
  ImportanceOptions options;
  ForestConfig config;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t chains_per_feature = 0;
  bool residual_rf_all_zero = false;
  bool residual_gs_all_zero = false;
  bool negative_weight = false;  // some single-feature weight was negative
};

/// All requested importance scores under the master seed config.seed.
inline ImportanceReport importance_report(const Dataset& ds, const ForestConfig& config,
                                          const ImportanceOptions& options = {}) {
  const SeededRng master(config.seed);
  ImportanceReport report;
  report.options = options;
  report.config = config;
  report.n = ds.n();
  report.d = ds.d();
  report.features.resize(ds.d());
  for (std::size_t j = 0; j < ds.d(); ++j) report.features[j].feature = ds.feature_names()[j];

  if (options.impurity || options.permutation) {
    const Forest forest = fit(ds, config);
    if (options.impurity) {
      const auto imp = impurity_importance(forest);
      for (std::size_t j = 0; j < ds.d(); ++j) report.features[j].impurity = imp[j];
    }
    if (options.permutation) {
      const auto perm = permutation_importance(forest, ds, options.repeats, master.derive(10));
      for (std::size_t j = 0; j < ds.d(); ++j) report.features[j].permutation = perm[j];
    }
  }
  if (options.residual_rf) {
    const auto res = residual_importance(ds, {ResidualKind::residual_forest, false}, options.permutations, config,
                                         master.derive(11), options.weight);
    for (std::size_t j = 0; j < ds.d(); ++j) report.features[j].residual_rf = res.scores[j];
    report.residual_rf_all_zero = res.all_zero;
    report.negative_weight |= res.negative_weight;
    report.chains_per_feature = res.chains_per_feature;
  }
  if (options.residual_gs) {
    const auto res = residual_importance(ds, {ResidualKind::gram_schmidt, options.gs_literal},
                                         options.permutations, config, master.derive(12), options.weight);
    for (std::size_t j = 0; j < ds.d(); ++j) report.features[j].residual_gs = res.scores[j];
    report.residual_gs_all_zero = res.all_zero;
    report.negative_weight |= res.negative_weight;
    report.chains_per_feature = res.chains_per_feature;
  }
  return report;
}

}  // namespace trendforest
