#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wellness_dlm/data_model.hpp"
#include "wellness_dlm/rng.hpp"

namespace wdlm {

// ---------------------------------------------------------------------------
// Ordinal recoding

/// Per-individual map from the raw 1..10 survey scale to 1..K.
struct RecodingMap {
  std::vector<double> centers;     // K ascending cluster centers
  std::vector<double> cut_points;  // K-1 midpoints between adjacent centers
  double objective = 0.0;          // within-cluster sum of squares
};

namespace detail {

// Lloyd iterations on sorted data. Clusters are contiguous ranges, so each
// pass is a boundary search plus prefix-sum means.
inline double lloyd_1d(const std::vector<double>& x, const std::vector<double>& prefix,
                       const std::vector<double>& prefix_sq, std::vector<double>& centers) {
  const int n = static_cast<int>(x.size());
  const int k = static_cast<int>(centers.size());
  std::vector<int> start(k + 1);
  auto range_sse = [&](int a, int b) {  // [a, b)
    const double s = prefix[b] - prefix[a];
    return (prefix_sq[b] - prefix_sq[a]) - s * s / (b - a);
  };
  std::vector<int> previous;
  for (int iter = 0; iter < 1000; ++iter) {
    std::sort(centers.begin(), centers.end());
    start[0] = 0;
    start[k] = n;
    for (int c = 1; c < k; ++c) {
      const double mid = 0.5 * (centers[c - 1] + centers[c]);
      // values equal to the midpoint stay with the lower cluster
      start[c] = static_cast<int>(std::upper_bound(x.begin(), x.end(), mid) - x.begin());
    }
    bool repaired = false;
    for (int c = 0; c < k; ++c) {
      if (start[c + 1] > start[c]) {
        centers[c] = (prefix[start[c + 1]] - prefix[start[c]]) / (start[c + 1] - start[c]);
        continue;
      }
      // Empty cluster: move it to the point farthest from its own center.
      double worst = -1.0;
      int where = 0;
      for (int d = 0; d < k; ++d)
        for (int p = start[d]; p < start[d + 1]; ++p) {
          const double e = (x[p] - centers[d]) * (x[p] - centers[d]);
          if (e > worst) {
            worst = e;
            where = p;
          }
        }
      centers[c] = x[where];
      repaired = true;
    }
    if (!repaired && start == previous) break;
    previous = start;
  }
  double sse = 0.0;
  for (int c = 0; c < k; ++c)
    if (start[c + 1] > start[c]) sse += range_sse(start[c], start[c + 1]);
  return sse;
}

}  // namespace detail

/// 1-D k-means by Lloyd's algorithm with k-means++ seeded restarts. Returns the
/// restart with the smallest within-cluster sum of squares.
inline RecodingMap kmeans_1d(std::span<const double> values, int k, int restarts = 1000,
                             std::uint64_t seed = 20150201) {
  if (k < 1) throw std::invalid_argument("kmeans_1d: k must be >= 1");
  std::vector<double> x;
  for (double v : values)
    if (!std::isnan(v)) x.push_back(v);
  std::sort(x.begin(), x.end());
  std::vector<double> uniq = x;
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (static_cast<int>(uniq.size()) < k)
    throw DegenerateInput("kmeans_1d: " + std::to_string(uniq.size()) + " distinct values, need " +
                          std::to_string(k));

  const int n = static_cast<int>(x.size());
  std::vector<double> prefix(n + 1, 0.0), prefix_sq(n + 1, 0.0);
  for (int p = 0; p < n; ++p) {
    prefix[p + 1] = prefix[p] + x[p];
    prefix_sq[p + 1] = prefix_sq[p] + x[p] * x[p];
  }

  Rng rng(seed);
  RecodingMap best;
  best.objective = INFINITY;
  std::vector<double> d2(n);
  for (int r = 0; r < std::max(1, restarts); ++r) {
    std::vector<double> centers{x[rng.uniform_int(0, n - 1)]};
    while (static_cast<int>(centers.size()) < k) {
      double total = 0.0;
      for (int p = 0; p < n; ++p) {
        double m = INFINITY;
        for (double c : centers) m = std::min(m, (x[p] - c) * (x[p] - c));
        d2[p] = m;
        total += m;
      }
      double u = rng.uniform() * total;
      int pick = n - 1;
      for (int p = 0; p < n; ++p) {
        if (d2[p] <= 0.0) continue;
        u -= d2[p];
        if (u <= 0.0) {
          pick = p;
          break;
        }
      }
      centers.push_back(x[pick]);
    }
    const double sse = detail::lloyd_1d(x, prefix, prefix_sq, centers);
    if (sse < best.objective) {
      best.objective = sse;
      best.centers = centers;
    }
  }
  for (int c = 1; c < k; ++c) {
    if (!(best.centers[c - 1] < best.centers[c])) throw DegenerateInput("kmeans_1d: coincident centers");
    best.cut_points.push_back(0.5 * (best.centers[c - 1] + best.centers[c]));
  }
  return best;
}

/// 1 + number of cut-points strictly below the raw value.
inline int recode_ordinal(double raw, const RecodingMap& map) {
  return 1 + static_cast<int>(std::count_if(map.cut_points.begin(), map.cut_points.end(),
                                            [raw](double c) { return c < raw; }));
}

// ---------------------------------------------------------------------------
// Workload and recovery

inline double compute_workload(double rpe, double duration_hours) {
  if (rpe < 0.0 || duration_hours < 0.0) throw std::domain_error("workload: negative input");
  return rpe * duration_hours;
}

enum class SignConvention {
  both_nonnegative,  // usual case: hours and quality move together
  quality_positive,  // negatively correlated inputs; quality loading kept > 0
};

inline std::string to_string(SignConvention s) {
  return s == SignConvention::both_nonnegative ? "both_nonnegative" : "quality_positive";
}

inline SignConvention sign_convention_from_string(const std::string& s) {
  if (s == "both_nonnegative") return SignConvention::both_nonnegative;
  if (s == "quality_positive") return SignConvention::quality_positive;
  throw std::invalid_argument("unknown sign convention '" + s + "'");
}

struct RecoveryLoading {
  std::array<double, 2> loading{};   // on standardized (sleep hours, sleep quality)
  double variance_explained = 0.0;
  SignConvention convention = SignConvention::both_nonnegative;
  std::array<double, 2> mean{};      // standardization of the inputs
  std::array<double, 2> sd{};
};

struct RecoveryScores {
  Eigen::VectorXd scores;  // NaN where either input is missing
  RecoveryLoading loading;
};

/// First principal component of standardized (sleep hours, sleep quality).
inline RecoveryScores compute_recovery(std::span<const double> hours, std::span<const double> quality) {
  if (hours.size() != quality.size()) throw std::invalid_argument("recovery: length mismatch");
  const int T = static_cast<int>(hours.size());
  std::vector<int> complete;
  for (int t = 0; t < T; ++t)
    if (!std::isnan(hours[t]) && !std::isnan(quality[t])) complete.push_back(t);
  const int n = static_cast<int>(complete.size());
  if (n < 2) throw DegenerateInput("recovery: fewer than two complete days");

  RecoveryLoading out;
  Eigen::MatrixXd z(n, 2);
  for (int c = 0; c < 2; ++c) {
    const auto& v = c == 0 ? hours : quality;
    double mean = 0.0;
    for (int t : complete) mean += v[t];
    mean /= n;
    double ss = 0.0;
    for (int t : complete) ss += (v[t] - mean) * (v[t] - mean);
    const double sd = std::sqrt(ss / (n - 1));
    out.mean[c] = mean;
    out.sd[c] = sd;
    for (int r = 0; r < n; ++r) z(r, c) = sd > 0.0 ? (v[complete[r]] - mean) / sd : 0.0;
  }
  if (out.sd[0] == 0.0 && out.sd[1] == 0.0) throw DegenerateInput("recovery: zero variance in both inputs");

  const Eigen::Matrix2d corr = z.transpose() * z / (n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(corr);
  Eigen::Vector2d v = eig.eigenvectors().col(1);
  out.variance_explained = eig.eigenvalues()[1] / corr.trace();
  if (v[0] * v[1] >= 0.0) {
    if (v[0] < 0.0 || v[1] < 0.0) v = -v;
    out.convention = SignConvention::both_nonnegative;
  } else {
    if (v[1] < 0.0) v = -v;
    out.convention = SignConvention::quality_positive;
  }
  v.normalize();
  out.loading = {v[0], v[1]};

  Eigen::VectorXd scores = Eigen::VectorXd::Constant(T, kNaN);
  for (int r = 0; r < n; ++r) scores[complete[r]] = z.row(r).dot(v);
  return {scores, out};
}

// ---------------------------------------------------------------------------
// Lag design

struct Standardization {
  double mean = 0.0;
  double sd = 1.0;
};

struct LagDesign {
  int lag_depth = 0;
  std::vector<std::vector<int>> rows;                       // [i] usable panel rows
  std::vector<std::vector<Standardization>> transform;      // [m][i]
  std::vector<std::vector<Eigen::VectorXd>> standardized;   // [m][i] full series
  std::vector<std::vector<Eigen::MatrixXd>> lagged;         // [m][i] rows x (L+1)
  std::vector<int> excluded;                                // [i] rows lacking history

  /// Column l of row r holds covariate m at usable row r, lag l.
  double at(int m, int i, int r, int l) const { return lagged[m][i](r, l); }
};

inline Standardization standardization_of(const Eigen::VectorXd& x) {
  double sum = 0.0;
  int count = 0;
  for (double v : x)
    if (!std::isnan(v)) {
      sum += v;
      ++count;
    }
  if (count < 2) throw DegenerateInput("standardization: fewer than two observed values");
  const double mean = sum / count;
  double ss = 0.0;
  for (double v : x)
    if (!std::isnan(v)) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (count - 1));
  if (!(sd > 0.0)) throw DegenerateInput("standardization: constant covariate series");
  return {mean, sd};
}

/// Per-individual standardized covariates and their lagged copies X_{m,i,t-l},
/// l = 0..L, over the days that have L consecutive prior covariate days.
inline LagDesign build_lag_design(const CovariatePanel& covs,
                                  const std::vector<std::vector<int>>& day_index, int lag_depth) {
  if (lag_depth < 0) throw std::invalid_argument("lag depth must be >= 0");
  const int M = covs.covariates();
  const int n = static_cast<int>(day_index.size());
  LagDesign d;
  d.lag_depth = lag_depth;
  d.rows.resize(n);
  d.excluded.resize(n);
  d.transform.assign(M, std::vector<Standardization>(n));
  d.standardized.assign(M, std::vector<Eigen::VectorXd>(n));
  d.lagged.assign(M, std::vector<Eigen::MatrixXd>(n));
  for (int i = 0; i < n; ++i) {
    d.rows[i] = usable_rows(day_index[i], covs, i, lag_depth);
    d.excluded[i] = static_cast<int>(day_index[i].size() - d.rows[i].size());
    for (int m = 0; m < M; ++m) {
      const auto& x = covs.series[m][i];
      const auto s = standardization_of(x);
      d.transform[m][i] = s;
      d.standardized[m][i] = (x.array() - s.mean) / s.sd;
      auto& lag = d.lagged[m][i];
      lag.resize(static_cast<int>(d.rows[i].size()), lag_depth + 1);
      for (int r = 0; r < lag.rows(); ++r)
        for (int l = 0; l <= lag_depth; ++l) lag(r, l) = d.standardized[m][i][d.rows[i][r] - l];
    }
  }
  return d;
}

/// Restrict a panel to its usable days and attach the stacked factor designs.
inline ModelData make_model_data(const Panel& panel, const ModelSpec& spec, LagDesign* out = nullptr) {
  const auto& ord = panel.ordinal;
  LagDesign lag = build_lag_design(panel.covariates, ord.day_index, spec.lag_depth);
  ModelData data;
  data.form = spec.form;
  data.categories = ord.categories;
  data.lag_depth = spec.lag_depth;
  data.covariates = panel.covariates.covariates();
  data.metric_names = ord.metric_names;
  data.individual_ids = ord.individual_ids;
  data.match_days = panel.match_days;
  data.match_days.resize(ord.individuals());
  const int n = ord.individuals();
  const int J = ord.metrics();
  data.days.resize(n);
  data.z.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& rows = lag.rows[i];
    data.z[i].resize(J, static_cast<int>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      data.days[i].push_back(ord.day_index[i][rows[r]]);
      data.z[i].col(static_cast<int>(r)) = ord.values[i].col(rows[r]);
    }
  }
  const int F = data.factors();
  const int P = data.lags();
  data.design.assign(F, std::vector<Eigen::MatrixXd>(n));
  for (int f = 0; f < F; ++f) {
    const auto blocks = data.blocks(f);
    for (int i = 0; i < n; ++i) {
      auto& D = data.design[f][i];
      D.resize(data.days_of(i), P * static_cast<int>(blocks.size()));
      for (std::size_t b = 0; b < blocks.size(); ++b)
        D.middleCols(static_cast<int>(b) * P, P) = lag.lagged[blocks[b]][i];
    }
  }
  if (out) *out = std::move(lag);
  return data;
}

// ---------------------------------------------------------------------------
// Raw survey panels

/// Survey panel as collected: raw 1..10 wellness scores plus training and sleep.
struct RawPanel {
  std::vector<std::string> metric_names;
  std::vector<std::string> individual_ids;
  std::vector<std::vector<int>> day_index;
  std::vector<Eigen::MatrixXd> metrics;  // [i] J x T, NaN missing
  std::vector<Eigen::VectorXd> rpe, duration_hours, sleep_hours, sleep_quality;
  std::vector<std::vector<int>> match_days;
};

struct PreprocessArtifacts {
  int categories = 5;
  std::vector<RecodingMap> recoding;                      // [i]
  std::vector<RecoveryLoading> recovery;                  // [i]
  std::vector<std::array<Standardization, 2>> covariates; // [i] workload, recovery
};

struct PreprocessResult {
  Panel panel;
  PreprocessArtifacts artifacts;
};

/// Workload of one survey row; NaN when it cannot be determined. A recorded
/// RPE of 0 is a rest day even if the duration is blank.
inline double row_workload(double rpe, double duration) {
  if (!std::isnan(rpe) && rpe == 0.0) return 0.0;
  if (std::isnan(rpe) || std::isnan(duration)) return kNaN;
  return compute_workload(rpe, duration);
}

inline PreprocessResult preprocess(const RawPanel& raw, int categories = 5, int restarts = 1000) {
  PreprocessResult out;
  auto& panel = out.panel;
  auto& ord = panel.ordinal;
  ord.categories = categories;
  ord.metric_names = raw.metric_names;
  ord.individual_ids = raw.individual_ids;
  ord.day_index = raw.day_index;
  panel.match_days = raw.match_days;
  panel.covariates.names = {"workload", "recovery"};
  panel.covariates.series.assign(2, {});
  out.artifacts.categories = categories;

  const int n = static_cast<int>(raw.individual_ids.size());
  for (int i = 0; i < n; ++i) {
    const auto& m = raw.metrics[i];
    std::vector<double> pooled;
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        if (!std::isnan(m(r, c))) pooled.push_back(m(r, c));
    RecodingMap map;
    try {
      map = kmeans_1d(pooled, categories, restarts);
    } catch (const DegenerateInput& e) {
      throw DegenerateInput("individual " + raw.individual_ids[i] + ": " + e.what());
    }
    Eigen::MatrixXi codes(m.rows(), m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        codes(r, c) = std::isnan(m(r, c)) ? kMissing : recode_ordinal(m(r, c), map);
    ord.values.push_back(std::move(codes));
    out.artifacts.recoding.push_back(std::move(map));

    const int T = static_cast<int>(m.cols());
    Eigen::VectorXd work(T);
    for (int t = 0; t < T; ++t) work[t] = row_workload(raw.rpe[i][t], raw.duration_hours[i][t]);
    auto rec = compute_recovery({raw.sleep_hours[i].data(), static_cast<std::size_t>(T)},
                                {raw.sleep_quality[i].data(), static_cast<std::size_t>(T)});
    out.artifacts.recovery.push_back(rec.loading);
    out.artifacts.covariates.push_back({standardization_of(work), standardization_of(rec.scores)});
    panel.covariates.series[0].push_back(std::move(work));
    panel.covariates.series[1].push_back(std::move(rec.scores));
  }
  return out;
}

}  // namespace wdlm
