#pragma once

// Shared fixtures for the unit tests and the acceptance runner: tiny
// hand-built model data, random valid chain states and the Kolmogorov
// distribution.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "wellness_dlm/wellness_dlm.hpp"

namespace wdlm::testing {

/// Random model data with two covariates and arbitrary design entries.
inline ModelData tiny_data(int n, int J, int K, int T, int L, FactorForm form, Rng& rng) {
  ModelData d;
  d.form = form;
  d.categories = K;
  d.lag_depth = L;
  d.covariates = 2;
  for (int j = 0; j < J; ++j) d.metric_names.push_back("m" + std::to_string(j + 1));
  std::vector<std::vector<Eigen::MatrixXd>> lagged(2, std::vector<Eigen::MatrixXd>(n));
  for (int i = 0; i < n; ++i) {
    d.individual_ids.push_back("a" + std::to_string(i + 1));
    std::vector<int> days(T);
    for (int t = 0; t < T; ++t) days[t] = 100 + t;
    d.days.push_back(days);
    Eigen::MatrixXi z(J, T);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < J; ++j) z(j, t) = rng.uniform_int(1, K);
    d.z.push_back(z);
    for (int m = 0; m < 2; ++m) {
      lagged[m][i].resize(T, L + 1);
      for (int t = 0; t < T; ++t)
        for (int l = 0; l <= L; ++l) lagged[m][i](t, l) = rng.normal();
    }
  }
  d.match_days.resize(n);
  const int F = d.factors(), P = L + 1;
  d.design.assign(F, std::vector<Eigen::MatrixXd>(n));
  for (int f = 0; f < F; ++f)
    for (int i = 0; i < n; ++i) {
      const auto blocks = d.blocks(f);
      d.design[f][i].resize(T, P * static_cast<int>(blocks.size()));
      for (std::size_t b = 0; b < blocks.size(); ++b)
        d.design[f][i].middleCols(static_cast<int>(b) * P, P) = lagged[blocks[b]][i];
    }
  return d;
}

/// A random state satisfying every invariant for `d`.
inline ChainState random_state(const ModelData& d, Rng& rng) {
  const int n = d.individuals(), J = d.metrics(), K = d.categories, F = d.factors(), P = d.lags();
  ChainState s;
  s.theta.resize(J, K - 1);
  for (int j = 0; j < J; ++j) {
    s.theta(j, 0) = 0.0;
    for (int k = 1; k < K - 1; ++k) s.theta(j, k) = s.theta(j, k - 1) + 0.3 + rng.uniform();
  }
  s.var_simplex = rng.dirichlet(Eigen::VectorXd::Constant(F + 1, 5.0));
  s.beta0.resize(n, J);
  s.beta.assign(F, Eigen::MatrixXd(n, J));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < J; ++j) {
      s.beta0(i, j) = rng.normal();
      for (int f = 0; f < F; ++f) s.beta[f](i, j) = j == 0 ? 1.0 : rng.normal();
    }
  s.alpha_ind.assign(2, Eigen::MatrixXd(n, P));
  s.alpha_global.resize(2, P);
  s.psi.resize(2, P);
  for (int m = 0; m < 2; ++m)
    for (int l = 0; l < P; ++l) {
      s.alpha_global(m, l) = rng.normal(0.0, 0.5);
      s.psi(m, l) = 0.05 + rng.uniform();
      for (int i = 0; i < n; ++i) s.alpha_ind[m](i, l) = rng.normal(s.alpha_global(m, l), 0.3);
    }
  s.y.resize(n);
  s.ztilde.resize(n);
  for (int i = 0; i < n; ++i) {
    const int T = d.days_of(i);
    s.y[i].resize(F, T);
    for (int f = 0; f < F; ++f)
      for (int t = 0; t < T; ++t) s.y[i](f, t) = rng.normal();
    s.ztilde[i].resize(J, T);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < J; ++j) {
        double mu = s.beta0(i, j);
        for (int f = 0; f < F; ++f) mu += s.beta[f](i, j) * s.y[i](f, t);
        const int k = d.z[i](j, t);
        if (k == kMissing) {
          s.ztilde[i](j, t) = mu;
        } else {
          const auto [lo, hi] = s.interval(j, k);
          s.ztilde[i](j, t) = sample_truncated_normal(mu, std::sqrt(s.sigma2()), lo, hi, rng);
        }
      }
  }
  return s;
}

/// Tiny panel simulated from the model with one lag, moderate loadings and
/// well separated thresholds.
inline SyntheticPanel tiny_truth(std::uint64_t seed, int individuals, int days, int metrics) {
  TruthConfig t = standard_benchmark(seed);
  t.individuals = individuals;
  t.metrics = metrics;
  t.days = days;
  t.lag_depth = 1;
  t.alpha_global = Eigen::MatrixXd(2, 2);
  t.alpha_global << -0.4, 0.2, 0.3, 0.1;
  t.psi = Eigen::MatrixXd::Constant(2, 2, 0.05);
  t.beta0 = Eigen::MatrixXd::Constant(individuals, metrics, 0.8);
  t.beta.assign(1, Eigen::MatrixXd::Ones(individuals, metrics));
  t.beta[0].rightCols(metrics - 1).setConstant(0.7);
  t.theta = t.theta.topRows(metrics).eval();
  t.var_simplex = Eigen::Vector2d(0.6, 0.4);
  return generate_panel(t);
}

/// Small priors for the one-observation conditional checks.
inline ModelSpec tiny_spec(int L, int K, FactorForm form = FactorForm::univariate) {
  ModelSpec s;
  s.form = form;
  s.lag_depth = L;
  s.categories = K;
  s.priors.alpha_variance = 2.0;
  s.priors.loading_variance = 3.0;
  s.priors.ig_shape = 1.5;
  s.priors.ig_rate = 0.7;
  return s;
}

// Each oracle below returns the largest absolute difference between the
// sampler's conditional moments and a closed form over `instances` random
// one-observation problems.

inline double factor_oracle_error(int instances) {
  double worst = 0.0;
  for (int rep = 0; rep < instances; ++rep) {
    Rng rng(100 + rep);
    const auto form = rep % 2 ? FactorForm::bivariate : FactorForm::univariate;
    const auto d = tiny_data(1, 2, 4, 1, 1, form, rng);
    Sampler s(d, tiny_spec(1, 4, form), random_state(d, rng), Rng(1));
    const auto& st = s.state();
    for (int f = 0; f < d.factors(); ++f) {
      // (Y, Z1, Z2) jointly Gaussian with the other factors held fixed.
      const double m = s.factor_mean(0, f)[0], tau2 = st.tau2(f), s2 = st.sigma2();
      Eigen::Vector2d b, offset, z;
      for (int j = 0; j < 2; ++j) {
        b[j] = st.beta[f](0, j);
        offset[j] = st.beta0(0, j);
        for (int g = 0; g < d.factors(); ++g)
          if (g != f) offset[j] += st.beta[g](0, j) * st.y[0](g, 0);
        z[j] = st.ztilde[0](j, 0);
      }
      const Eigen::Matrix2d szz = tau2 * b * b.transpose() + s2 * Eigen::Matrix2d::Identity();
      const Eigen::Vector2d syz = tau2 * b;
      const Eigen::Vector2d w = szz.inverse() * syz;
      const auto c = s.factor_conditional(0, 0, f);
      worst = std::max({worst, std::abs(c.mean - (m + w.dot(z - offset - b * m))),
                        std::abs(c.variance - (tau2 - syz.dot(w)))});
    }
  }
  return worst;
}

inline double loading_oracle_error(int instances) {
  double worst = 0.0;
  for (int rep = 0; rep < instances; ++rep) {
    Rng rng(200 + rep);
    const auto form = rep % 2 ? FactorForm::bivariate : FactorForm::univariate;
    const auto d = tiny_data(1, 3, 4, 1, 1, form, rng);
    const auto spec = tiny_spec(1, 4, form);
    Sampler s(d, spec, random_state(d, rng), Rng(1));
    const auto& st = s.state();
    const double v = spec.priors.loading_variance, s2 = st.sigma2();
    const int F = d.factors();
    for (int j = 0; j < 3; ++j) {
      const auto c = s.loading_conditional(0, j);
      const Eigen::MatrixXd cov = c.covariance();
      if (j == 0) {
        // z - sum_f y_f = beta0 + e
        const double r = st.ztilde[0](0, 0) - st.y[0].col(0).sum();
        worst = std::max({worst, std::abs(c.mean[0] - v * r / (v + s2)), std::abs(cov(0, 0) - v * s2 / (v + s2))});
        continue;
      }
      // prior N(0, vI), z = x'b + e: posterior by rank-one conditioning
      Eigen::VectorXd x(F + 1);
      x[0] = 1.0;
      x.tail(F) = st.y[0].col(0);
      const double denom = v * x.squaredNorm() + s2;
      const Eigen::VectorXd mean = v * x * st.ztilde[0](j, 0) / denom;
      const Eigen::MatrixXd var = v * Eigen::MatrixXd::Identity(F + 1, F + 1) - v * v * x * x.transpose() / denom;
      worst = std::max({worst, (c.mean - mean).cwiseAbs().maxCoeff(), (cov - var).cwiseAbs().maxCoeff()});
    }
  }
  return worst;
}

inline double lag_oracle_error(int instances) {
  double worst = 0.0;
  for (int rep = 0; rep < instances; ++rep) {
    Rng rng(300 + rep);
    const auto form = rep % 2 ? FactorForm::bivariate : FactorForm::univariate;
    const auto d = tiny_data(2, 2, 4, 1, 2, form, rng);
    Sampler s(d, tiny_spec(2, 4, form), random_state(d, rng), Rng(1));
    const auto& st = s.state();
    for (int i = 0; i < 2; ++i)
      for (int f = 0; f < d.factors(); ++f) {
        const auto blocks = d.blocks(f);
        const int dim = 3 * static_cast<int>(blocks.size());
        Eigen::VectorXd g(dim), psi(dim);
        for (std::size_t b = 0; b < blocks.size(); ++b)
          for (int l = 0; l < 3; ++l) {
            g[b * 3 + l] = st.alpha_global(blocks[b], l);
            psi[b * 3 + l] = st.psi(blocks[b], l);
          }
        const Eigen::VectorXd x = d.design[f][i].row(0).transpose();
        const double tau2 = st.tau2(f), y = st.y[i](f, 0);
        const Eigen::VectorXd px = psi.cwiseProduct(x);
        const double denom = x.dot(px) + tau2;
        const Eigen::VectorXd mean = g + px * (y - x.dot(g)) / denom;
        Eigen::MatrixXd var = -px * px.transpose() / denom;
        var.diagonal() += psi;
        const auto c = s.lag_conditional(i, f);
        worst = std::max({worst, (c.mean - mean).cwiseAbs().maxCoeff(),
                          (c.covariance() - var).cwiseAbs().maxCoeff()});
      }
  }
  return worst;
}

inline double global_lag_oracle_error(int instances) {
  double worst = 0.0;
  for (int rep = 0; rep < instances; ++rep) {
    Rng rng(400 + rep);
    const int n = rep % 2 ? 1 : 5;
    const auto d = tiny_data(n, 2, 4, 3, 1, FactorForm::univariate, rng);
    const auto spec = tiny_spec(1, 4);
    Sampler s(d, spec, random_state(d, rng), Rng(1));
    const auto& st = s.state();
    const double V = spec.priors.alpha_variance;
    for (int m = 0; m < 2; ++m)
      for (int l = 0; l < 2; ++l) {
        // n iid observations of alpha with variance psi, prior N(0, V)
        const double var_mean = st.psi(m, l) / n, mean_i = st.alpha_ind[m].col(l).mean();
        const auto a = s.global_lag_conditional(m, l);
        double ss = 0.0;
        for (int i = 0; i < n; ++i) ss += std::pow(st.alpha_ind[m](i, l) - st.alpha_global(m, l), 2);
        const auto p = s.psi_conditional(m, l);
        worst = std::max({worst, std::abs(a.mean - V * mean_i / (V + var_mean)),
                          std::abs(a.variance - V * var_mean / (V + var_mean)),
                          std::abs(p.shape - (spec.priors.ig_shape + n / 2.0)),
                          std::abs(p.rate - (spec.priors.ig_rate + ss / 2.0))});
      }
  }
  return worst;
}

/// sqrt(n) * sup |F_n - F|.
template <class Cdf>
double ks_statistic(std::vector<double> x, Cdf cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double F = cdf(x[k]);
    d = std::max({d, F - static_cast<double>(k) / n, static_cast<double>(k + 1) / n - F});
  }
  return d * std::sqrt(n);
}

/// Asymptotic Kolmogorov survival function P(K > lambda).
inline double kolmogorov_p_value(double lambda) {
  if (lambda < 0.2) return 1.0;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

/// Small calibration priors: proper and concentrated enough that short chains
/// mix over the prior's support.
inline ModelSpec calibration_spec(int lag_depth, int categories) {
  ModelSpec spec;
  spec.lag_depth = lag_depth;
  spec.categories = categories;
  spec.priors.alpha_variance = 0.5;
  spec.priors.ig_shape = 3.0;
  spec.priors.ig_rate = 0.2;
  spec.priors.loading_variance = 1.0;
  spec.priors.threshold_variance = 0.25;
  return spec;
}

}  // namespace wdlm::testing
