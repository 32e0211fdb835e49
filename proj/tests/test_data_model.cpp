#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"

namespace wdlm {
namespace {

Panel small_panel(int T, int L) {
  TruthConfig truth = standard_benchmark(3);
  truth.individuals = 2;
  truth.metrics = 2;
  truth.days = T - L;
  truth.lag_depth = L;
  truth.alpha_global = Eigen::MatrixXd::Zero(2, L + 1);
  truth.psi = Eigen::MatrixXd::Constant(2, L + 1, 0.01);
  truth.beta0 = Eigen::MatrixXd::Zero(2, 2);
  truth.beta.assign(1, Eigen::MatrixXd::Ones(2, 2));
  truth.theta = truth.theta.topRows(2).eval();
  return generate_panel(truth).panel;
}

ModelSpec spec_with_lag(int L) {
  ModelSpec s;
  s.lag_depth = L;
  return s;
}

TEST(ValidatePanel, WellFormedPanelIsClean) {
  const Panel p = small_panel(30, 2);
  const auto r = validate_panel(p.ordinal, p.covariates, spec_with_lag(2));
  EXPECT_TRUE(r.ok()) << r.to_string();
}

TEST(ValidatePanel, OutOfRangeCategoryIsLocated) {
  Panel p = small_panel(30, 2);
  p.ordinal.values[1](0, 7) = 6;
  const auto r = validate_panel(p.ordinal, p.covariates, spec_with_lag(2));
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].individual, 1);
  EXPECT_EQ(r.violations[0].metric, 0);
  EXPECT_EQ(r.violations[0].day, 7);
}

TEST(ValidatePanel, NoDaysLeftAfterLagTrimming) {
  const Panel p = small_panel(30, 2);
  Panel q = p;
  // keep only L days for the second individual
  const int L = 4;
  q.ordinal.values[1] = p.ordinal.values[1].leftCols(L).eval();
  q.ordinal.day_index[1].resize(L);
  for (auto& m : q.covariates.series) m[1] = m[1].head(L).eval();
  const auto r = validate_panel(q.ordinal, q.covariates, spec_with_lag(L));
  bool found = false;
  for (const auto& v : r.violations) found |= v.individual == 1 && v.message == "no usable days after lag trimming";
  EXPECT_TRUE(found) << r.to_string();
}

TEST(ValidatePanel, StructuralProblems) {
  Panel p = small_panel(30, 2);
  p.ordinal.day_index[0][5] = p.ordinal.day_index[0][4];
  p.covariates.series[0][1][3] = -1.0;
  ModelSpec s = spec_with_lag(2);
  s.mcmc.iterations = 10;
  s.mcmc.burn_in = 10;
  const auto r = validate_panel(p.ordinal, p.covariates, s);
  EXPECT_GE(r.violations.size(), 3u);
}

TEST(CheckState, DetectsEachInvariant) {
  Rng rng(1);
  const auto d = testing::tiny_data(2, 3, 5, 6, 1, FactorForm::univariate, rng);
  const auto good = testing::random_state(d, rng);
  EXPECT_FALSE(check_state(good, d).has_value());

  auto s = good;
  s.theta(1, 0) = 1e-300;
  EXPECT_TRUE(check_state(s, d).has_value());
  s = good;
  std::swap(s.theta(0, 2), s.theta(0, 3));
  EXPECT_TRUE(check_state(s, d).has_value());
  s = good;
  s.var_simplex[0] += 2e-12;
  EXPECT_TRUE(check_state(s, d).has_value());
  s = good;
  s.beta[0](1, 0) = 1.0 + 1e-15;
  EXPECT_TRUE(check_state(s, d).has_value());
  s = good;
  const int k = d.z[0](2, 3);
  s.ztilde[0](2, 3) = k == 1 ? 0.5 : -1.0;
  EXPECT_TRUE(check_state(s, d).has_value());
}

TEST(Dates, RoundTrip) {
  EXPECT_EQ(parse_date("1970-01-01"), 0);
  EXPECT_EQ(parse_date("2015-02-01"), 16467);
  EXPECT_EQ(format_date(16467), "2015-02-01");
  EXPECT_EQ(format_date(parse_date("2016-02-29")), "2016-02-29");
  EXPECT_THROW(parse_date("2015-02-30"), ParseError);
  EXPECT_THROW(parse_date("2015/02/01"), ParseError);
}

TEST(PanelCsv, RoundTripIsIdentity) {
  Panel p = small_panel(25, 1);
  p.ordinal.values[0](1, 4) = kMissing;
  p.covariates.series[1][1][6] = kNaN;
  std::stringstream buf;
  write_panel_csv(buf, p);
  const Panel q = read_panel_csv(buf, 5);
  ASSERT_EQ(q.ordinal.individuals(), p.ordinal.individuals());
  EXPECT_EQ(q.ordinal.metric_names, p.ordinal.metric_names);
  EXPECT_EQ(q.ordinal.individual_ids, p.ordinal.individual_ids);
  EXPECT_EQ(q.ordinal.day_index, p.ordinal.day_index);
  EXPECT_EQ(q.match_days, p.match_days);
  EXPECT_EQ(q.covariates.names, p.covariates.names);
  for (int i = 0; i < p.ordinal.individuals(); ++i) {
    EXPECT_EQ(q.ordinal.values[i], p.ordinal.values[i]);
    for (int m = 0; m < 2; ++m) {
      const auto& a = p.covariates.series[m][i];
      const auto& b = q.covariates.series[m][i];
      ASSERT_EQ(a.size(), b.size());
      for (int t = 0; t < a.size(); ++t) {
        if (std::isnan(a[t])) EXPECT_TRUE(std::isnan(b[t]));
        else EXPECT_EQ(a[t], b[t]);  // shortest round-trip formatting
      }
    }
  }
  std::stringstream again;
  write_panel_csv(again, q);
  std::stringstream first;
  write_panel_csv(first, p);
  EXPECT_EQ(again.str(), first.str());
}

TEST(PanelCsv, RawRoundTrip) {
  std::stringstream in(
      "athlete_id,date,fatigue,mood,rpe,duration_hours,sleep_hours,sleep_quality,match\n"
      "a,2015-02-01,3,,7,1.5,8,6,0\n"
      "a,2015-02-02,9,4,0,,7.5,5,1\n"
      "\"b,c\",2015-02-01,2,2,,1,6,3,\n");
  const RawPanel raw = read_raw_csv(in);
  ASSERT_EQ(raw.individual_ids, (std::vector<std::string>{"a", "b,c"}));
  EXPECT_EQ(raw.metric_names, (std::vector<std::string>{"fatigue", "mood"}));
  EXPECT_TRUE(std::isnan(raw.metrics[0](1, 0)));
  EXPECT_TRUE(std::isnan(raw.rpe[1][0]));
  EXPECT_EQ(raw.match_days[0], std::vector<int>{parse_date("2015-02-02")});
  std::stringstream out;
  write_raw_csv(out, raw);
  std::stringstream back(out.str());
  const RawPanel again = read_raw_csv(back);
  std::stringstream out2;
  write_raw_csv(out2, again);
  EXPECT_EQ(out.str(), out2.str());
}

TEST(PanelCsv, MalformedInputIsParseError) {
  std::stringstream bad_header("id,date,x,workload,recovery\n");
  EXPECT_THROW(read_panel_csv(bad_header), ParseError);
  std::stringstream bad_cell("athlete_id,date,x,workload,recovery\na,2015-02-01,abc,1,2\n");
  EXPECT_THROW(read_panel_csv(bad_cell), ParseError);
  std::stringstream short_row("athlete_id,date,x,workload,recovery\na,2015-02-01,1,2\n");
  EXPECT_THROW(read_panel_csv(short_row), ParseError);
}

TEST(Archive, RoundTripPreservesDraws) {
  Rng rng(2);
  const auto d = testing::tiny_data(2, 2, 4, 5, 1, FactorForm::bivariate, rng);
  Archive a;
  a.spec.form = FactorForm::bivariate;
  a.spec.lag_depth = 1;
  a.spec.categories = 4;
  a.data = d;
  for (int k = 0; k < 3; ++k) {
    a.draws.states.push_back(testing::random_state(d, rng));
    a.draws.chain.push_back(0);
    a.draws.iteration.push_back(10 + k);
  }
  a.draws.acceptance.resize(1);
  a.draws.acceptance[0].thresholds.resize(2);
  std::stringstream buf;
  write_archive(buf, a);
  const Archive b = read_archive(buf);
  ASSERT_EQ(b.draws.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(b.draws.states[k].theta, a.draws.states[k].theta);
    EXPECT_EQ(b.draws.states[k].var_simplex, a.draws.states[k].var_simplex);
    EXPECT_EQ(b.draws.states[k].ztilde[1], a.draws.states[k].ztilde[1]);
    EXPECT_EQ(b.draws.states[k].beta[1], a.draws.states[k].beta[1]);
  }
  EXPECT_EQ(b.data.z[1], a.data.z[1]);
  EXPECT_EQ(b.data.design[1][0], a.data.design[1][0]);
  std::stringstream again;
  write_archive(again, b);
  std::stringstream first;
  write_archive(first, a);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Archive, GarbageIsParseError) {
  std::stringstream in("{\"format\": \"something-else\"}");
  EXPECT_THROW(read_archive(in), ParseError);
  std::stringstream junk("not json");
  EXPECT_THROW(read_archive(junk), ParseError);
}

}  // namespace
}  // namespace wdlm
