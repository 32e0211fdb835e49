#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "wellness_dlm/data_model.hpp"

namespace wdlm {

// ---------------------------------------------------------------------------
// Small statistics helpers

/// Quantile by linear interpolation between order statistics of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) return kNaN;
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Pearson correlation; nullopt when either vector has zero variance.
inline std::optional<double> pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double saa = da.square().sum(), sbb = db.square().sum();
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return std::clamp((da * db).sum() / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct IntervalSummary {
  double mean = kNaN;
  double lower = kNaN;
  double median = kNaN;
  double upper = kNaN;
  long draws = 0;     // defined draws used
  long excluded = 0;  // undefined (NaN) draws skipped
  bool significant = false;  // central interval excludes zero
};

inline IntervalSummary summarize(std::span<const double> values, double level = 0.95) {
  std::vector<double> v;
  IntervalSummary s;
  for (double x : values) {
    if (std::isnan(x)) ++s.excluded;
    else v.push_back(x);
  }
  s.draws = static_cast<long>(v.size());
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  const double tail = 0.5 * (1.0 - level);
  s.lower = quantile_sorted(v, tail);
  s.median = quantile_sorted(v, 0.5);
  s.upper = quantile_sorted(v, 1.0 - tail);
  s.significant = s.lower > 0.0 || s.upper < 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Correlations and relative importance

/// Per-draw values for every (individual, metric, factor) cell. NaN marks a
/// draw where the quantity is undefined.
struct CellDraws {
  int individuals = 0;
  int metrics = 0;
  int factors = 0;
  std::vector<std::vector<double>> values;

  CellDraws() = default;
  CellDraws(int n, int J, int F, std::size_t draws)
      : individuals(n), metrics(J), factors(F),
        values(static_cast<std::size_t>(n * J * F), std::vector<double>(draws, kNaN)) {}

  std::vector<double>& cell(int i, int j, int f) { return values[(i * metrics + j) * factors + f]; }
  const std::vector<double>& cell(int i, int j, int f) const {
    return values[(i * metrics + j) * factors + f];
  }
  long undefined(int i, int j, int f) const {
    const auto& c = cell(i, j, f);
    return static_cast<long>(std::count_if(c.begin(), c.end(), [](double x) { return std::isnan(x); }));
  }
};

/// corr(Ztilde_ij, Y_fi) over usable days, for every retained draw.
inline CellDraws metric_factor_correlation(const PosteriorDraws& draws, const ModelData& data) {
  const int n = data.individuals(), J = data.metrics(), F = data.factors();
  for (int i = 0; i < n; ++i)
    if (data.days_of(i) < 2)
      throw std::invalid_argument("correlation: individual " + data.individual_ids[i] +
                                  " has fewer than 2 usable days");
  CellDraws out(n, J, F, draws.size());
  for (std::size_t d = 0; d < draws.size(); ++d) {
    const auto& s = draws.states[d];
    for (int i = 0; i < n; ++i)
      for (int f = 0; f < F; ++f) {
        const Eigen::VectorXd y = s.y[i].row(f).transpose();
        for (int j = 0; j < J; ++j)
          if (auto c = pearson(s.ztilde[i].row(j).transpose(), y)) out.cell(i, j, f)[d] = *c;
      }
  }
  return out;
}

/// R_j = |C_j| / sum_j' |C_j'| per draw, per individual and factor. Draws
/// with an undefined or all-zero correlation set are left undefined.
inline CellDraws relative_importance(const CellDraws& corr) {
  const int n = corr.individuals, J = corr.metrics, F = corr.factors;
  const std::size_t D = corr.values.empty() ? 0 : corr.values.front().size();
  CellDraws out(n, J, F, D);
  for (int i = 0; i < n; ++i)
    for (int f = 0; f < F; ++f)
      for (std::size_t d = 0; d < D; ++d) {
        double total = 0.0;
        bool defined = true;
        for (int j = 0; j < J; ++j) {
          const double c = corr.cell(i, j, f)[d];
          if (std::isnan(c)) defined = false;
          else total += std::abs(c);
        }
        if (!defined || !(total > 0.0)) continue;
        for (int j = 0; j < J; ++j) out.cell(i, j, f)[d] = std::abs(corr.cell(i, j, f)[d]) / total;
      }
  return out;
}

// ---------------------------------------------------------------------------
// Lag effects

struct LagEffect {
  int covariate = 0;
  int individual = -1;  // -1 for global coefficients
  int lag = 0;
  IntervalSummary summary;
};

struct LagEffectSummary {
  std::vector<LagEffect> global;
  std::vector<LagEffect> individual;
};

inline LagEffectSummary lag_effect_summary(const PosteriorDraws& draws, double level = 0.95) {
  LagEffectSummary out;
  if (draws.size() == 0) return out;
  const auto& first = draws.states.front();
  const int M = static_cast<int>(first.alpha_global.rows());
  const int P = static_cast<int>(first.alpha_global.cols());
  const int n = static_cast<int>(first.alpha_ind.front().rows());
  std::vector<double> v(draws.size());
  for (int m = 0; m < M; ++m)
    for (int l = 0; l < P; ++l) {
      for (std::size_t d = 0; d < draws.size(); ++d) v[d] = draws.states[d].alpha_global(m, l);
      out.global.push_back({m, -1, l, summarize(v, level)});
    }
  for (int i = 0; i < n; ++i)
    for (int m = 0; m < M; ++m)
      for (int l = 0; l < P; ++l) {
        for (std::size_t d = 0; d < draws.size(); ++d) v[d] = draws.states[d].alpha_ind[m](i, l);
        out.individual.push_back({m, i, l, summarize(v, level)});
      }
  return out;
}

// ---------------------------------------------------------------------------
// Match-day profiles

/// Posterior mean of every latent factor, [i] F x T_i.
inline std::vector<Eigen::MatrixXd> posterior_mean_factors(const PosteriorDraws& draws) {
  std::vector<Eigen::MatrixXd> mean;
  if (draws.size() == 0) return mean;
  mean = draws.states.front().y;
  for (auto& m : mean) m.setZero();
  for (const auto& s : draws.states)
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += s.y[i];
  for (auto& m : mean) m /= static_cast<double>(draws.size());
  return mean;
}

struct MatchWindow {
  int individual = 0;
  int factor = 0;
  int match_day = 0;
  std::vector<double> centered;  // offsets -window..+window
};

struct MatchdayRow {
  int individual = 0;
  int factor = 0;
  int offset = 0;
  long matches = 0;
  double mean = kNaN;
  double q25 = kNaN;
  double median = kNaN;
  double q75 = kNaN;
};

struct MatchdayProfile {
  int window = 3;
  std::vector<MatchWindow> matches;
  std::vector<MatchdayRow> rows;
  long skipped = 0;  // matches without a full window of usable days
};

inline std::string offset_label(int offset) {
  if (offset == 0) return "M";
  return (offset > 0 ? "+" : "") + std::to_string(offset);
}

/// Posterior-mean factors around each match day, centered on the
/// (2 * window + 1)-day window mean, then aggregated per offset.
inline MatchdayProfile matchday_profile(const std::vector<Eigen::MatrixXd>& factor_means,
                                        const ModelData& data, int window) {
  if (window < 0) throw std::invalid_argument("matchday window must be >= 0");
  MatchdayProfile out;
  out.window = window;
  const int n = data.individuals(), F = data.factors(), width = 2 * window + 1;
  for (int i = 0; i < n; ++i) {
    const auto& days = data.days[i];
    const auto& matches = i < static_cast<int>(data.match_days.size()) ? data.match_days[i] : std::vector<int>{};
    std::vector<std::vector<std::vector<double>>> by_offset(F, std::vector<std::vector<double>>(width));
    for (int md : matches) {
      const auto it = std::lower_bound(days.begin(), days.end(), md);
      const int t = static_cast<int>(it - days.begin());
      const bool full = it != days.end() && *it == md && t - window >= 0 &&
                        t + window < static_cast<int>(days.size()) &&
                        days[t + window] - days[t - window] == 2 * window;
      if (!full) {
        ++out.skipped;
        continue;
      }
      for (int f = 0; f < F; ++f) {
        MatchWindow w{i, f, md, std::vector<double>(width)};
        double mean = 0.0;
        for (int o = -window; o <= window; ++o) mean += factor_means[i](f, t + o);
        mean /= width;
        for (int o = -window; o <= window; ++o) {
          w.centered[o + window] = factor_means[i](f, t + o) - mean;
          by_offset[f][o + window].push_back(w.centered[o + window]);
        }
        out.matches.push_back(std::move(w));
      }
    }
    for (int f = 0; f < F; ++f)
      for (int o = -window; o <= window; ++o) {
        auto v = by_offset[f][o + window];
        MatchdayRow row{i, f, o, static_cast<long>(v.size())};
        if (!v.empty()) {
          std::sort(v.begin(), v.end());
          double sum = 0.0;
          for (double x : v) sum += x;
          row.mean = sum / static_cast<double>(v.size());
          row.q25 = quantile_sorted(v, 0.25);
          row.median = quantile_sorted(v, 0.5);
          row.q75 = quantile_sorted(v, 0.75);
        }
        out.rows.push_back(row);
      }
  }
  return out;
}

inline MatchdayProfile matchday_profile(const PosteriorDraws& draws, const ModelData& data, int window) {
  return matchday_profile(posterior_mean_factors(draws), data, window);
}

}  // namespace wdlm
