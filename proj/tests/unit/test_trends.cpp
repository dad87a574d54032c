#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "trendforest/forest_io.hpp"
#include "trendforest/trends.hpp"

using namespace trendforest;

namespace {

SplitRecord record(double left_mean, double right_mean, std::size_t nl = 1, std::size_t nr = 1) {
  SplitRecord s;
  s.left_target_mean = left_mean;
  s.right_target_mean = right_mean;
  s.left_count = nl;
  s.right_count = nr;
  return s;
}

double mean(std::initializer_list<double> v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Three splits on one feature with partition classes
// {2,4,7,3} | {8,12,4,6}, {7} | {3}, {8,12} | {4,6}.
std::vector<SplitRecord> worked_example() {
  return {record(mean({2, 4, 7, 3}), mean({8, 12, 4, 6}), 4, 4), record(mean({7}), mean({3})),
          record(mean({8, 12}), mean({4, 6}), 2, 2)};
}

Dataset line(std::size_t n, double slope) {
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<double>(i);
    y[i] = slope * x[i] + 1000.0 * (slope < 0 ? -1 : 1);
  }
  return Dataset({x}, y, {"x"});
}

}  // namespace

TEST(WorkedExample, PartitionAverages) {
  const auto s = worked_example();
  EXPECT_EQ(s[0].left_target_mean, 4.0);
  EXPECT_EQ(s[0].right_target_mean, 7.5);
  EXPECT_EQ(s[1].left_target_mean, 7.0);
  EXPECT_EQ(s[1].right_target_mean, 3.0);
  EXPECT_EQ(s[2].left_target_mean, 10.0);
  EXPECT_EQ(s[2].right_target_mean, 5.0);
}

TEST(Atr, WorkedExampleIsMinusOneThird) {
  const auto t = atr(worked_example());
  EXPECT_EQ(t.value, -1.0 / 3.0);
  EXPECT_EQ(t.splits, 3U);
}

TEST(Rtr, WorkedExample) {
  const auto splits = worked_example();
  const double sum = 3.5 / 11.5 - 4.0 / 10.0 - 5.0 / 15.0;
  EXPECT_NEAR(rtr(splits).value, 2.0 * sum / 3.0, 1e-15);
  EXPECT_NEAR(rtr(splits).value, -0.28599, 1e-5);
  EXPECT_NEAR(rtr(splits, RtrNormalization::none).value, 2.0 * sum, 1e-15);
}

TEST(Atr, TieVotesZero) {
  const std::vector<SplitRecord> s{record(1, 1), record(0, 1)};
  EXPECT_EQ(atr(s).value, 0.5);
}

TEST(Rtr, NearZeroDenominatorIsSkippedAndCounted) {
  const std::vector<SplitRecord> s{record(-1, 1), record(1, 3)};
  const auto t = rtr(s);
  EXPECT_EQ(t.skipped, 1U);
  EXPECT_EQ(t.splits, 2U);
  EXPECT_DOUBLE_EQ(t.value, 2.0 * (2.0 / 4.0) / 2.0);
}

TEST(TraversalRates, EmptyMeansNoSplits) {
  const std::vector<SplitRecord> none;
  EXPECT_TRUE(atr(none).no_splits());
  EXPECT_TRUE(rtr(none).no_splits());
}

TEST(TraversalRates, MonotoneIncreasingDatasetGivesAtrOne) {
  ForestConfig cfg;
  cfg.n_trees = 10;
  const Forest forest = fit(line(50, 1.0), cfg);
  EXPECT_EQ(atr(forest, 0).value, 1.0);
  EXPECT_GT(rtr(forest, 0).value, 0.0);
}

TEST(TraversalRates, TargetNegationFlipsBothSigns) {
  std::vector<double> x(60), y(60), neg(60);
  SeededRng rng(5);
  for (std::size_t i = 0; i < 60; ++i) {
    x[i] = rng.normal();
    y[i] = std::sin(3 * x[i]) + 2.0 + 0.1 * rng.normal();
    neg[i] = -y[i];
  }
  ForestConfig cfg;
  cfg.n_trees = 10;
  cfg.seed = 3;
  const Forest a = fit(Dataset({x}, y, {"x"}), cfg);
  const Forest b = fit(Dataset({x}, neg, {"x"}), cfg);
  EXPECT_EQ(atr(a, 0).value, -atr(b, 0).value);
  EXPECT_EQ(rtr(a, 0).value, -rtr(b, 0).value);
  EXPECT_NE(atr(a, 0).value, 0.0);
}

TEST(TrendReport, PlantedSignalSigns) {
  SeededRng rng(6);
  std::vector<std::vector<double>> cols(3, std::vector<double>(300));
  std::vector<double> y(300);
  for (std::size_t i = 0; i < 300; ++i) {
    for (auto& c : cols) c[i] = rng.normal();
    y[i] = 10 + 2 * cols[0][i] - 2 * cols[1][i] + 0.2 * rng.normal();
  }
  ForestConfig cfg;
  cfg.n_trees = 30;
  cfg.min_samples_leaf = 5;
  ShapleyMatrix shap;
  const auto report = trend_report(Dataset(cols, y, {"up", "down", "none"}), cfg, {}, &shap);
  ASSERT_EQ(report.features.size(), 3U);
  EXPECT_EQ(shap.n, 300U);
  for (std::size_t e = 0; e < 7; ++e) {
    const auto up = report.features[0].values()[e];
    const auto down = report.features[1].values()[e];
    ASSERT_TRUE(up && down) << kTrendEstimators[e];
    EXPECT_GT(*up, 0.0) << kTrendEstimators[e];
    EXPECT_LT(*down, 0.0) << kTrendEstimators[e];
  }
  EXPECT_TRUE(report.ols_error.empty());
  EXPECT_FALSE(report.forest_degenerate);
}

TEST(TrendReport, SubEstimatorFailuresAreRecorded) {
  // n == d + 1: no OLS; constant column: degenerate correlations
  const Dataset ds({{1, 2, 3}, {4, 4, 4}}, {1, 3, 2}, {"a", "c"});
  ForestConfig cfg;
  cfg.n_trees = 3;
  const auto report = trend_report(ds, cfg);
  EXPECT_FALSE(report.ols_error.empty());
  EXPECT_FALSE(report.features[0].r_lm.has_value());
  EXPECT_TRUE(report.features[1].r.degenerate);
  EXPECT_TRUE(report.features[1].atr.no_splits());
  EXPECT_FALSE(report.features[1].values()[5].has_value());
}

TEST(TrendReport, SavedModelGivesSameTraversalRates) {
  SeededRng rng(7);
  std::vector<double> x(100), z(100), y(100);
  for (std::size_t i = 0; i < 100; ++i) {
    x[i] = rng.normal();
    z[i] = rng.normal();
    y[i] = x[i] * x[i] + z[i];
  }
  const Dataset ds({x, z}, y, {"x", "z"});
  ForestConfig cfg;
  cfg.n_trees = 8;
  const auto full = trend_report(ds, cfg);
  const auto from_model = traversal_report(forest_from_json(forest_to_json(fit(ds, cfg))));
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(full.features[j].atr.value, from_model.features[j].atr.value);
    EXPECT_EQ(full.features[j].rtr.value, from_model.features[j].rtr.value);
    EXPECT_FALSE(from_model.features[j].values()[0].has_value());
  }
}

TEST(ShapleyTrend, CorrelatesFeatureWithAttribution) {
  const std::vector<double> x{1, 2, 3, 4}, phi{-2, -1, 1, 2};
  const auto t = shapley_trend(x, phi);
  EXPECT_GT(t.r.value, 0.9);
  EXPECT_EQ(t.rho.value, 1.0);
}
