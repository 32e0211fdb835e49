#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "support.hpp"

namespace wdlm {
namespace {

TEST(KMeans, TwoClusterExample) {
  const std::vector<double> v{1, 1, 2, 8, 9, 9};
  const auto map = kmeans_1d(v, 2);
  ASSERT_EQ(map.centers.size(), 2u);
  EXPECT_NEAR(map.centers[0], 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(map.centers[1], 26.0 / 3.0, 1e-12);
  ASSERT_EQ(map.cut_points.size(), 1u);
  EXPECT_NEAR(map.cut_points[0], 5.0, 1e-12);
}

TEST(KMeans, SingletonClusters) {
  std::vector<double> v;
  for (int r = 0; r < 4; ++r)
    for (int x = 1; x <= 5; ++x) v.push_back(x);
  const auto map = kmeans_1d(v, 5);
  for (int c = 0; c < 5; ++c) EXPECT_DOUBLE_EQ(map.centers[c], c + 1.0);
  EXPECT_DOUBLE_EQ(map.objective, 0.0);
}

TEST(KMeans, UniformTenMatchesDynamicProgramming) {
  std::vector<double> v(10);
  std::iota(v.begin(), v.end(), 1.0);
  const auto lloyd = kmeans_1d(v, 5);
  const auto exact = kmeans_dp_oracle(v, 5);
  EXPECT_NEAR(lloyd.objective, exact.objective, 1e-12);
  for (int c = 0; c < 5; ++c) EXPECT_NEAR(lloyd.centers[c], exact.centers[c], 1e-12);
}

TEST(KMeans, RandomInstancesMatchDynamicProgramming) {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = rng.uniform_int(5, 50);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform_int(1, 10) + (rep % 2 ? rng.normal(0.0, 0.3) : 0.0);
    std::vector<double> u = v;
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    const int k = std::min<int>(5, static_cast<int>(u.size()));
    const auto lloyd = kmeans_1d(v, k);
    const auto exact = kmeans_dp_oracle(v, k);
    EXPECT_GE(lloyd.objective, exact.objective - 1e-9);
    EXPECT_NEAR(lloyd.objective, exact.objective, 1e-9 * std::max(1.0, exact.objective)) << "instance " << rep;
    for (std::size_t c = 1; c < lloyd.centers.size(); ++c) EXPECT_LT(lloyd.centers[c - 1], lloyd.centers[c]);
    for (std::size_t c = 1; c < lloyd.cut_points.size(); ++c)
      EXPECT_LT(lloyd.cut_points[c - 1], lloyd.cut_points[c]);
  }
}

TEST(KMeans, HardInstanceReachesGlobalOptimum) {
  // 25 seeded restarts settle in a local optimum here.
  const std::vector<double> v{1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 6, 6,
                              6, 7, 7, 7, 7, 7, 7, 7, 7, 8, 8, 8, 8, 8, 8, 9, 9, 10, 10, 10, 10, 10};
  EXPECT_NEAR(kmeans_1d(v, 5).objective, kmeans_dp_oracle(v, 5).objective, 1e-9);
}

TEST(KMeans, TooFewDistinctValuesIsDegenerate) {
  const std::vector<double> v{1, 1, 2, 2, 3};
  EXPECT_THROW(kmeans_1d(v, 5), DegenerateInput);
}

TEST(KMeans, MissingValuesAreDropped) {
  const std::vector<double> v{1, kNaN, 1, 2, 8, 9, kNaN, 9};
  const auto map = kmeans_1d(v, 2);
  EXPECT_NEAR(map.cut_points[0], 5.0, 1e-12);
}

TEST(Recode, BoundariesAndTies) {
  RecodingMap map;
  map.centers = {1, 3, 5, 7, 9};
  map.cut_points = {2, 4, 6, 8};
  EXPECT_EQ(recode_ordinal(1, map), 1);
  EXPECT_EQ(recode_ordinal(10, map), 5);
  EXPECT_EQ(recode_ordinal(4, map), 2);  // tie goes to the lower category
  EXPECT_EQ(recode_ordinal(4.0000001, map), 3);
  EXPECT_EQ(recode_ordinal(3.9999999, map), 2);
  int last = 0;
  for (double raw = 0.0; raw <= 11.0; raw += 0.25) {
    const int code = recode_ordinal(raw, map);
    EXPECT_GE(code, last);
    last = code;
  }
}

TEST(Workload, ProductDefinition) {
  EXPECT_DOUBLE_EQ(compute_workload(0, 1.5), 0.0);
  EXPECT_DOUBLE_EQ(compute_workload(7, 1.5), 10.5);
  EXPECT_DOUBLE_EQ(compute_workload(10, 0), 0.0);
  EXPECT_THROW(compute_workload(-1, 1), std::domain_error);
  EXPECT_THROW(compute_workload(1, -1), std::domain_error);
}

TEST(Workload, MissingRpeOnlyZeroWhenRecordedZero) {
  EXPECT_DOUBLE_EQ(row_workload(0.0, kNaN), 0.0);
  EXPECT_TRUE(std::isnan(row_workload(kNaN, 1.0)));
  EXPECT_TRUE(std::isnan(row_workload(5.0, kNaN)));
}

TEST(Recovery, PerfectlyCorrelatedInputs) {
  const std::vector<double> h{6, 7, 8, 9}, q{2, 4, 6, 8};
  const auto r = compute_recovery(h, q);
  EXPECT_NEAR(r.loading.variance_explained, 1.0, 1e-12);
  EXPECT_NEAR(r.loading.loading[0], std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(r.loading.loading[1], std::sqrt(0.5), 1e-12);
}

TEST(Recovery, VarianceExplainedIsTopCorrelationEigenvalue) {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const int T = 30 + rep;
    std::vector<double> h(T), q(T);
    const double rho = rng.uniform() * 2.0 - 1.0;
    for (int t = 0; t < T; ++t) {
      h[t] = 7.0 + rng.normal();
      q[t] = 5.0 + 2.0 * (rho * (h[t] - 7.0) + std::sqrt(1 - rho * rho) * rng.normal());
    }
    const auto r = compute_recovery(h, q);
    Eigen::VectorXd a = Eigen::Map<Eigen::VectorXd>(h.data(), T), b = Eigen::Map<Eigen::VectorXd>(q.data(), T);
    const double top = 1.0 + std::abs(*pearson(a, b));  // eigenvalues of [[1,r],[r,1]]
    EXPECT_NEAR(r.loading.variance_explained, top / 2.0, 1e-10);
    EXPECT_NEAR(r.scores.mean(), 0.0, 1e-10);
    const double var = (r.scores.array() - r.scores.mean()).square().sum() / (T - 1);
    EXPECT_NEAR(var, top, 1e-10);
    EXPECT_NEAR(std::hypot(r.loading.loading[0], r.loading.loading[1]), 1.0, 1e-12);
    if (r.loading.convention == SignConvention::both_nonnegative) {
      EXPECT_GE(r.loading.loading[0], 0.0);
      EXPECT_GE(r.loading.loading[1], 0.0);
    } else {
      EXPECT_GT(r.loading.loading[1], 0.0);
    }
  }
}

TEST(Recovery, IndependentNoiseExplainsAboutHalf) {
  Rng rng(8);
  const int T = 200000;
  std::vector<double> h(T), q(T);
  for (int t = 0; t < T; ++t) {
    h[t] = rng.normal();
    q[t] = rng.normal();
  }
  EXPECT_NEAR(compute_recovery(h, q).loading.variance_explained, 0.5, 0.01);
}

TEST(Recovery, ZeroVarianceIsDegenerate) {
  const std::vector<double> h{7, 7, 7}, q{3, 3, 3};
  EXPECT_THROW(compute_recovery(h, q), DegenerateInput);
}

CovariatePanel one_series(const std::vector<double>& x) {
  CovariatePanel c;
  c.names = {"workload"};
  c.series = {{Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()))}};
  return c;
}

TEST(LagDesign, RowHoldsLaggedValues) {
  const std::vector<double> x{1.0, 4.0, 2.0, 7.0};
  const auto d = build_lag_design(one_series(x), {{0, 1, 2, 3}}, 2);
  ASSERT_EQ(d.rows[0], (std::vector<int>{2, 3}));
  const auto& s = d.standardized[0][0];
  EXPECT_DOUBLE_EQ(d.at(0, 0, 1, 0), s[3]);
  EXPECT_DOUBLE_EQ(d.at(0, 0, 1, 1), s[2]);
  EXPECT_DOUBLE_EQ(d.at(0, 0, 1, 2), s[1]);
  EXPECT_EQ(d.excluded[0], 2);
}

TEST(LagDesign, ZeroLagIsStandardizedSeries) {
  const std::vector<double> x{3.0, 1.0, 4.0, 1.0, 5.0};
  const auto d = build_lag_design(one_series(x), {{0, 1, 2, 3, 4}}, 0);
  const double mean = 2.8, sd = std::sqrt(((0.04 + 3.24 + 1.44 + 3.24 + 4.84)) / 4.0);
  for (int t = 0; t < 5; ++t) EXPECT_NEAR(d.at(0, 0, t, 0), (x[t] - mean) / sd, 1e-14);
  // Back-mapping through the stored transform recovers the raw series.
  const auto tr = d.transform[0][0];
  for (int t = 0; t < 5; ++t) EXPECT_NEAR(d.at(0, 0, t, 0) * tr.sd + tr.mean, x[t], 1e-12);
}

TEST(LagDesign, ConstantSeriesIsDegenerate) {
  EXPECT_THROW(build_lag_design(one_series({2, 2, 2, 2}), {{0, 1, 2, 3}}, 1), DegenerateInput);
}

TEST(LagDesign, CalendarGapAndMissingCovariateBreakHistory) {
  std::vector<double> x{1, 2, 3, kNaN, 5, 6, 7, 8};
  const auto d = build_lag_design(one_series(x), {{0, 1, 2, 3, 4, 5, 7, 8}}, 1);
  // day 3 missing covariate; day 6 missing from the calendar
  EXPECT_EQ(d.rows[0], (std::vector<int>{1, 2, 5, 7}));
}

TEST(LagDesign, RowsReconstructSeries) {
  Rng rng(4);
  std::vector<double> x(40);
  for (auto& v : x) v = rng.normal();
  std::vector<int> days(40);
  std::iota(days.begin(), days.end(), 0);
  const auto d = build_lag_design(one_series(x), {days}, 3);
  for (int r = 0; r < static_cast<int>(d.rows[0].size()); ++r)
    for (int l = 0; l <= 3; ++l) EXPECT_EQ(d.at(0, 0, r, l), d.standardized[0][0][d.rows[0][r] - l]);
}

TEST(Preprocess, RecodesEveryMetricWithOneMap) {
  Rng rng(21);
  RawPanel raw;
  raw.metric_names = {"fatigue", "soreness"};
  for (int i = 0; i < 2; ++i) {
    const int T = 30;
    raw.individual_ids.push_back("p" + std::to_string(i));
    std::vector<int> days(T);
    std::iota(days.begin(), days.end(), 1000);
    raw.day_index.push_back(days);
    Eigen::MatrixXd m(2, T);
    Eigen::VectorXd rpe(T), dur(T), hrs(T), qual(T);
    for (int t = 0; t < T; ++t) {
      m(0, t) = rng.uniform_int(1, 10);
      m(1, t) = t == 3 ? kNaN : rng.uniform_int(1, 10);
      rpe[t] = t % 4 == 0 ? 0.0 : rng.uniform_int(1, 10);
      dur[t] = t % 4 == 0 ? kNaN : 1.0 + rng.uniform();
      hrs[t] = 6.0 + 2.0 * rng.uniform();
      qual[t] = rng.uniform_int(1, 10);
    }
    raw.metrics.push_back(m);
    raw.rpe.push_back(rpe);
    raw.duration_hours.push_back(dur);
    raw.sleep_hours.push_back(hrs);
    raw.sleep_quality.push_back(qual);
  }
  raw.match_days = {{1010}, {}};
  const auto out = preprocess(raw, 5);
  ASSERT_EQ(out.panel.ordinal.individuals(), 2);
  for (int i = 0; i < 2; ++i) {
    const auto& codes = out.panel.ordinal.values[i];
    const auto& map = out.artifacts.recoding[i];
    for (int t = 0; t < codes.cols(); ++t)
      for (int j = 0; j < 2; ++j) {
        const double v = raw.metrics[i](j, t);
        if (std::isnan(v)) EXPECT_EQ(codes(j, t), kMissing);
        else EXPECT_EQ(codes(j, t), recode_ordinal(v, map));
      }
    EXPECT_DOUBLE_EQ(out.panel.covariates.series[0][i][0], 0.0);  // rest day with blank duration
  }
  EXPECT_EQ(out.panel.match_days[0], std::vector<int>{1010});
}

}  // namespace
}  // namespace wdlm
