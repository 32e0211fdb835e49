#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wellness_dlm/data_model.hpp"
#include "wellness_dlm/gauss_hermite.hpp"
#include "wellness_dlm/normal.hpp"
#include "wellness_dlm/preprocess.hpp"
#include "wellness_dlm/rng.hpp"

namespace wdlm {

struct WorkloadLaw {
  double rest_probability = 0.4;  // share of zero-workload days
  double shape = 2.0;             // gamma law of the non-rest days
  double scale = 4.0;
};

/// Every parameter of the generative model plus the panel dimensions.
struct TruthConfig {
  int individuals = 5;
  int metrics = 4;
  int categories = 5;
  int days = 200;  // modeled days per individual; L history days are prepended
  int lag_depth = 5;
  FactorForm form = FactorForm::univariate;
  bool constrained_lags = false;

  Eigen::MatrixXd alpha_global;      // 2 x (L+1); rows are weights if constrained
  Eigen::MatrixXd psi;               // 2 x (L+1)
  Eigen::MatrixXd beta0;             // n x J
  std::vector<Eigen::MatrixXd> beta; // [f] n x J, column 0 fixed at 1
  Eigen::MatrixXd theta;             // J x (K-1), theta(j,0) = 0
  Eigen::VectorXd var_simplex;       // sigma^2, tau^2_f

  WorkloadLaw workload;
  double missing_probability = 0.0;
  int match_every = 7;
  int start_day = 16467;  // 2015-02-01
  std::uint64_t seed = 1;

  int factors() const { return form == FactorForm::univariate ? 1 : 2; }

  /// Throws std::invalid_argument unless every chain-state constraint holds.
  void validate() const {
    const int P = lag_depth + 1, F = factors();
    auto fail = [](const std::string& m) { throw std::invalid_argument("truth config: " + m); };
    if (individuals < 1 || metrics < 1 || days < 1 || lag_depth < 0 || categories < 2) fail("bad dimensions");
    if (alpha_global.rows() != 2 || alpha_global.cols() != P) fail("alpha_global must be 2 x (L+1)");
    if (psi.rows() != 2 || psi.cols() != P || (psi.array() < 0.0).any()) fail("psi must be 2 x (L+1), >= 0");
    if (beta0.rows() != individuals || beta0.cols() != metrics) fail("beta0 must be n x J");
    if (static_cast<int>(beta.size()) != F) fail("need one loading matrix per factor");
    for (const auto& b : beta) {
      if (b.rows() != individuals || b.cols() != metrics) fail("loadings must be n x J");
      if ((b.col(0).array() != 1.0).any()) fail("anchored loadings must equal 1");
    }
    if (theta.rows() != metrics || theta.cols() != categories - 1) fail("theta must be J x (K-1)");
    for (int j = 0; j < metrics; ++j) {
      if (theta(j, 0) != 0.0) fail("first threshold must be 0");
      for (int k = 1; k < theta.cols(); ++k)
        if (!(theta(j, k - 1) < theta(j, k))) fail("thresholds must increase");
    }
    if (var_simplex.size() != F + 1 || (var_simplex.array() <= 0.0).any() ||
        std::abs(var_simplex.sum() - 1.0) > kSimplexTolerance)
      fail("variance simplex must be positive and sum to 1");
    if (constrained_lags)
      for (int m = 0; m < 2; ++m)
        if ((alpha_global.row(m).array() < 0.0).any() || std::abs(alpha_global.row(m).sum() - 1.0) > 1e-12)
          fail("constrained lag weights must be nonnegative and sum to 1");
    if (missing_probability < 0.0 || missing_probability >= 1.0) fail("missing probability in [0,1)");
  }

  ModelSpec model_spec() const {
    ModelSpec s;
    s.form = form;
    s.lag_depth = lag_depth;
    s.categories = categories;
    s.constrained_lags = constrained_lags;
    return s;
  }
};

/// Standard synthetic benchmark: n=5, J=4, K=5, T=200, L=5.
inline TruthConfig standard_benchmark(std::uint64_t seed = 1) {
  TruthConfig t;
  t.seed = seed;
  const int P = t.lag_depth + 1;
  t.alpha_global.resize(2, P);
  t.alpha_global << 0.0, -0.5, -0.25, 0.0, 0.1, 0.0,
                    0.1, 0.45, 0.35, 0.25, 0.1, 0.0;
  t.psi = Eigen::MatrixXd::Constant(2, P, 0.01);
  t.beta0.resize(t.individuals, t.metrics);
  t.beta.assign(1, Eigen::MatrixXd(t.individuals, t.metrics));
  for (int i = 0; i < t.individuals; ++i)
    for (int j = 0; j < t.metrics; ++j) {
      t.beta0(i, j) = 1.0 + 0.15 * ((i + 2 * j) % 5 - 2);
      t.beta[0](i, j) = j == 0 ? 1.0 : 0.6 + 0.2 * ((i + j) % 4);
    }
  t.theta.resize(t.metrics, t.categories - 1);
  for (int j = 0; j < t.metrics; ++j)
    for (int k = 0; k < t.categories - 1; ++k) t.theta(j, k) = k * (0.6 + 0.1 * j);
  t.var_simplex = Eigen::Vector2d(0.5, 0.5);
  return t;
}

/// Panel plus the hidden values that generated it.
struct SyntheticPanel {
  Panel panel;
  ModelData data;    // panel restricted to usable days
  ChainState truth;  // full parameter and latent record on usable days
};

/// Forward simulation of the generative model: covariates, individual lag
/// coefficients from the hierarchy, factors, latent responses, categories.
inline SyntheticPanel generate_panel(const TruthConfig& truth) {
  truth.validate();
  Rng rng(truth.seed);
  const int n = truth.individuals, J = truth.metrics, K = truth.categories;
  const int L = truth.lag_depth, P = L + 1, total = truth.days + L;

  SyntheticPanel out;
  Panel& panel = out.panel;
  auto& ord = panel.ordinal;
  ord.categories = K;
  for (int j = 0; j < J; ++j) ord.metric_names.push_back("metric_" + std::to_string(j + 1));
  panel.covariates.names = {"workload", "recovery"};
  panel.covariates.series.assign(2, {});
  panel.match_days.resize(n);
  for (int i = 0; i < n; ++i) {
    ord.individual_ids.push_back("athlete_" + std::to_string(i + 1));
    std::vector<int> days(total);
    Eigen::VectorXd work(total), rec(total);
    for (int t = 0; t < total; ++t) {
      days[t] = truth.start_day + t;
      work[t] = rng.uniform() < truth.workload.rest_probability
                    ? 0.0
                    : truth.workload.scale * rng.gamma(truth.workload.shape);
      rec[t] = rng.normal();
      if (truth.match_every > 0 && t % truth.match_every == truth.match_every - 1)
        panel.match_days[i].push_back(days[t]);
    }
    ord.day_index.push_back(std::move(days));
    panel.covariates.series[0].push_back(std::move(work));
    panel.covariates.series[1].push_back(std::move(rec));
    ord.values.push_back(Eigen::MatrixXi::Constant(J, total, kMissing));
  }

  ModelSpec spec = truth.model_spec();
  LagDesign lag;
  ModelData data = make_model_data(panel, spec, &lag);

  ChainState& s = out.truth;
  s.alpha_global = truth.alpha_global;
  s.psi = truth.psi;
  s.beta0 = truth.beta0;
  s.beta = truth.beta;
  s.theta = truth.theta;
  s.var_simplex = truth.var_simplex;
  s.alpha_ind.assign(2, Eigen::MatrixXd(n, P));
  for (int m = 0; m < 2; ++m)
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < P; ++l)
        s.alpha_ind[m](i, l) = truth.constrained_lags
                                   ? truth.alpha_global(m, l)
                                   : rng.normal(truth.alpha_global(m, l), std::sqrt(truth.psi(m, l)));

  const int F = data.factors();
  const double sd = std::sqrt(s.sigma2());
  s.y.resize(n);
  s.ztilde.resize(n);
  for (int i = 0; i < n; ++i) {
    const int T = data.days_of(i);
    s.y[i].resize(F, T);
    for (int f = 0; f < F; ++f) {
      const Eigen::VectorXd mean = data.design[f][i] * s.factor_coefficients(data, f, i);
      for (int t = 0; t < T; ++t) s.y[i](f, t) = rng.normal(mean[t], std::sqrt(s.tau2(f)));
    }
    s.ztilde[i].resize(J, T);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < J; ++j) {
        double mu = s.beta0(i, j);
        for (int f = 0; f < F; ++f) mu += s.beta[f](i, j) * s.y[i](f, t);
        const double z = rng.normal(mu, sd);
        s.ztilde[i](j, t) = z;
        int k = 1;
        while (k < K && s.theta(j, k - 1) < z) ++k;
        const bool missing = truth.missing_probability > 0.0 && rng.uniform() < truth.missing_probability;
        const int code = missing ? kMissing : k;
        data.z[i](j, t) = code;
        ord.values[i](j, lag.rows[i][t]) = code;
      }
  }
  out.data = std::move(data);
  return out;
}

/// Draw every model parameter from the prior of `spec` (for calibration).
inline TruthConfig draw_truth_from_prior(TruthConfig dims, const ModelSpec& spec, Rng& rng) {
  const auto& p = spec.priors;
  const int n = dims.individuals, J = dims.metrics, K = dims.categories, P = dims.lag_depth + 1;
  dims.form = spec.form;
  dims.constrained_lags = false;
  const int F = dims.factors();
  dims.alpha_global.resize(2, P);
  dims.psi.resize(2, P);
  for (int m = 0; m < 2; ++m)
    for (int l = 0; l < P; ++l) {
      dims.alpha_global(m, l) = rng.normal(0.0, std::sqrt(p.alpha_variance));
      dims.psi(m, l) = rng.inverse_gamma(p.ig_shape, p.ig_rate);
    }
  dims.beta0.resize(n, J);
  dims.beta.assign(F, Eigen::MatrixXd(n, J));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < J; ++j) {
      dims.beta0(i, j) = rng.normal(0.0, std::sqrt(p.loading_variance));
      for (int f = 0; f < F; ++f)
        dims.beta[f](i, j) = j == 0 ? 1.0 : rng.normal(0.0, std::sqrt(p.loading_variance));
    }
  dims.theta.resize(J, K - 1);
  for (int j = 0; j < J; ++j) {
    dims.theta(j, 0) = 0.0;
    for (int k = 1; k < K - 1; ++k)
      dims.theta(j, k) = dims.theta(j, k - 1) + std::exp(rng.normal(0.0, std::sqrt(p.threshold_variance)));
  }
  dims.var_simplex = rng.dirichlet(Eigen::VectorXd::Constant(F + 1, p.simplex_concentration));
  return dims;
}

// ---------------------------------------------------------------------------
// Oracles

/// Exact ordinal log-likelihood of a tiny univariate panel with the latent
/// factor integrated out day by day. Each day uses a Gauss-Hermite rule
/// centred at the mode of the integrand and scaled by its curvature, so a
/// modest node count resolves peaked integrands. Uses the individual lag
/// coefficients, loadings, thresholds and variances of `params`.
inline double oracle_marginal_likelihood(const ModelData& data, const ChainState& params, int nodes) {
  if (data.form != FactorForm::univariate) throw std::invalid_argument("oracle: univariate form only");
  if (data.metrics() > 3) throw std::invalid_argument("oracle: at most 3 metrics");
  for (int i = 0; i < data.individuals(); ++i)
    if (data.days_of(i) > 5) throw std::invalid_argument("oracle: at most 5 days per individual");
  const auto rule = gauss_hermite(nodes);
  const int K = data.categories;
  const double sd = std::sqrt(params.sigma2()), tau = std::sqrt(params.tau2(0));
  double total = 0.0;
  for (int i = 0; i < data.individuals(); ++i) {
    const Eigen::VectorXd mean = data.design[0][i] * params.factor_coefficients(data, 0, i);
    for (int t = 0; t < data.days_of(i); ++t) {
      // Log of prior density times likelihood, up to the prior's constant.
      auto log_integrand = [&](double y) {
        const double u = (y - mean[t]) / tau;
        double out = -0.5 * u * u;
        for (int j = 0; j < data.metrics(); ++j) {
          const int k = data.z[i](j, t);
          if (k == kMissing) continue;
          const double mu = params.beta0(i, j) + params.beta[0](i, j) * y;
          const double lo = k == 1 ? -normal::kInf : (params.theta(j, k - 2) - mu) / sd;
          const double hi = k == K ? normal::kInf : (params.theta(j, k - 1) - mu) / sd;
          out += normal::log_interval_probability(lo, hi);
        }
        return out;
      };
      // The integrand is log-concave with curvature at least 1 / tau^2.
      const double h = 1e-3 * tau;
      double centre = mean[t], curvature = 1.0 / (tau * tau);
      for (int it = 0; it < 100; ++it) {
        const double gm = log_integrand(centre - h), g0 = log_integrand(centre), gp = log_integrand(centre + h);
        curvature = std::max((2.0 * g0 - gm - gp) / (h * h), 1.0 / (tau * tau));
        const double step = std::clamp((gp - gm) / (2.0 * h) / curvature, -tau, tau);
        centre += step;
        if (std::abs(step) < 1e-10 * tau) break;
      }
      const double scale = std::sqrt(2.0 / curvature);
      std::vector<double> terms;
      for (Eigen::Index k = 0; k < rule.nodes.size(); ++k) {
        if (rule.weights[k] <= 0.0) continue;
        const double x = rule.nodes[k];
        terms.push_back(std::log(rule.weights[k]) + x * x + log_integrand(centre + scale * x));
      }
      const double top = *std::max_element(terms.begin(), terms.end());
      double sum = 0.0;
      for (const double v : terms) sum += std::exp(v - top);
      total += top + std::log(sum) + std::log(scale) - std::log(std::sqrt(2.0 * std::numbers::pi) * tau);
    }
  }
  return total;
}

struct KMeansSolution {
  std::vector<double> centers;
  std::vector<int> sizes;
  double objective = 0.0;
};

/// Globally optimal 1-D k-means by dynamic programming over sorted values.
inline KMeansSolution kmeans_dp_oracle(std::span<const double> values, int k) {
  std::vector<double> x(values.begin(), values.end());
  const int n = static_cast<int>(x.size());
  if (n > 200) throw std::invalid_argument("kmeans oracle: at most 200 points");
  if (k < 1 || k > n) throw std::invalid_argument("kmeans oracle: need 1 <= k <= points");
  std::sort(x.begin(), x.end());
  std::vector<double> s(n + 1, 0.0), s2(n + 1, 0.0);
  for (int p = 0; p < n; ++p) {
    s[p + 1] = s[p] + x[p];
    s2[p + 1] = s2[p] + x[p] * x[p];
  }
  auto cost = [&](int a, int b) {  // points [a, b)
    const double m = s[b] - s[a];
    return std::max(0.0, (s2[b] - s2[a]) - m * m / (b - a));
  };
  const double inf = std::numeric_limits<double>::infinity();
  // best[c][b]: c+1 clusters over the first b points
  std::vector<std::vector<double>> best(k, std::vector<double>(n + 1, inf));
  std::vector<std::vector<int>> split(k, std::vector<int>(n + 1, 0));
  for (int b = 1; b <= n; ++b) best[0][b] = cost(0, b);
  for (int c = 1; c < k; ++c)
    for (int b = c + 1; b <= n; ++b)
      for (int a = c; a < b; ++a) {
        const double v = best[c - 1][a] + cost(a, b);
        if (v < best[c][b]) {
          best[c][b] = v;
          split[c][b] = a;
        }
      }
  KMeansSolution out;
  out.objective = best[k - 1][n];
  int b = n;
  for (int c = k - 1; c >= 0; --c) {
    const int a = c == 0 ? 0 : split[c][b];
    out.centers.push_back((s[b] - s[a]) / (b - a));
    out.sizes.push_back(b - a);
    b = a;
  }
  std::reverse(out.centers.begin(), out.centers.end());
  std::reverse(out.sizes.begin(), out.sizes.end());
  return out;
}

}  // namespace wdlm
