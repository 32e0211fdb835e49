#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "wellness_dlm/data_model.hpp"

namespace wdlm {

struct Violation {
  int individual = -1;  // -1 when not tied to a location
  int metric = -1;
  int day = -1;         // row index within the individual
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  void add(int i, int j, int t, std::string message) {
    violations.push_back({i, j, t, std::move(message)});
  }
  std::string to_string() const {
    std::string out;
    for (const auto& v : violations) {
      out += "(" + std::to_string(v.individual) + ", " + std::to_string(v.metric) + ", " +
             std::to_string(v.day) + ") " + v.message + "\n";
    }
    return out;
  }
};

inline void validate_spec(const ModelSpec& spec, ValidationReport& report) {
  const auto& m = spec.mcmc;
  if (!(m.iterations > m.burn_in)) report.add(-1, -1, -1, "iterations must exceed burn-in");
  if (m.burn_in < 0) report.add(-1, -1, -1, "burn-in must be >= 0");
  if (m.thin < 1) report.add(-1, -1, -1, "thinning must be >= 1");
  if (spec.lag_depth < 0) report.add(-1, -1, -1, "lag depth must be >= 0");
  if (spec.categories < 2) report.add(-1, -1, -1, "category count must be >= 2");
  const auto& p = spec.priors;
  for (double v : {p.alpha_variance, p.loading_variance, p.ig_shape, p.ig_rate,
                   p.simplex_concentration, p.threshold_variance, p.lag_weight_concentration})
    if (!(v > 0.0)) {
      report.add(-1, -1, -1, "prior hyperparameters must be > 0");
      break;
    }
  if (!(m.threshold_step > 0.0 && m.simplex_scale > 0.0 && m.lag_weight_scale > 0.0))
    report.add(-1, -1, -1, "proposal scales must be > 0");
}

/// Every structural problem that would stop a fit, with its (i, j, t) location.
inline ValidationReport validate_panel(const OrdinalPanel& panel, const CovariatePanel& covs,
                                       const ModelSpec& spec) {
  ValidationReport report;
  validate_spec(spec, report);
  const int n = panel.individuals();
  const int J = panel.metrics();
  const int K = panel.categories;
  if (n < 1) report.add(-1, -1, -1, "panel has no individuals");
  if (J < 1) report.add(-1, -1, -1, "panel has no metrics");
  if (K != spec.categories)
    report.add(-1, -1, -1, "panel has " + std::to_string(K) + " categories, model expects " +
                               std::to_string(spec.categories));
  const int M = covs.covariates();
  if (M < 1 || M > 2) report.add(-1, -1, -1, "expected 1 or 2 covariates");
  if (spec.form == FactorForm::bivariate && M != 2)
    report.add(-1, -1, -1, "bivariate factor form needs both workload and recovery");
  for (int m = 0; m < M; ++m)
    if (static_cast<int>(covs.series[m].size()) != n) {
      report.add(-1, -1, -1, "covariate '" + covs.names[m] + "' has wrong individual count");
      return report;
    }

  for (int i = 0; i < n; ++i) {
    const int T = panel.days(i);
    if (T < 1) {
      report.add(i, -1, -1, "individual has no days");
      continue;
    }
    if (panel.values[i].rows() != J) report.add(i, -1, -1, "metric count mismatch");
    if (static_cast<int>(panel.day_index[i].size()) != T) report.add(i, -1, -1, "day index length mismatch");
    for (int t = 1; t < static_cast<int>(panel.day_index[i].size()); ++t)
      if (panel.day_index[i][t] <= panel.day_index[i][t - 1])
        report.add(i, -1, t, "day index not strictly increasing");
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < panel.values[i].rows(); ++j) {
        const int v = panel.values[i](j, t);
        if (v != kMissing && (v < 1 || v > K))
          report.add(i, j, t, "category " + std::to_string(v) + " outside 1.." + std::to_string(K));
      }
    bool shapes_ok = true;
    for (int m = 0; m < M; ++m) {
      const auto& x = covs.series[m][i];
      if (x.size() != T) {
        report.add(i, -1, -1, "covariate '" + covs.names[m] + "' length mismatch");
        shapes_ok = false;
        continue;
      }
      double lo = INFINITY, hi = -INFINITY;
      for (int t = 0; t < T; ++t) {
        if (std::isnan(x[t])) continue;
        if (m == 0 && x[t] < 0.0) report.add(i, -1, t, "negative workload");
        lo = std::min(lo, x[t]);
        hi = std::max(hi, x[t]);
      }
      if (!(hi > lo)) report.add(i, -1, -1, "covariate '" + covs.names[m] + "' has zero variance");
    }
    if (shapes_ok && static_cast<int>(panel.day_index[i].size()) == T &&
        usable_rows(panel.day_index[i], covs, i, spec.lag_depth).empty())
      report.add(i, -1, -1, "no usable days after lag trimming");
  }
  return report;
}

}  // namespace wdlm
