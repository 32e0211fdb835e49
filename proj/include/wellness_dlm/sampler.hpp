#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "wellness_dlm/data_model.hpp"
#include "wellness_dlm/normal.hpp"
#include "wellness_dlm/preprocess.hpp"
#include "wellness_dlm/rng.hpp"
#include "wellness_dlm/truncated_normal.hpp"
#include "wellness_dlm/validation.hpp"

namespace wdlm {

/// Gaussian full conditional in precision form.
struct GaussianConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;

  Eigen::MatrixXd covariance() const {
    return precision.llt().solve(Eigen::MatrixXd::Identity(precision.rows(), precision.cols()));
  }
  Eigen::VectorXd draw(Rng& rng) const {
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    return mean + llt.matrixU().solve(rng.normal_vector(mean.size()));
  }
};

struct ScalarConditional {
  double mean;
  double variance;
};

struct InverseGammaConditional {
  double shape;
  double rate;
};

inline double log_dirichlet_density(const Eigen::VectorXd& x, const Eigen::VectorXd& concentration) {
  double out = std::lgamma(concentration.sum());
  for (Eigen::Index k = 0; k < x.size(); ++k)
    out += (concentration[k] - 1.0) * std::log(x[k]) - std::lgamma(concentration[k]);
  return out;
}

struct SamplerOptions {
  /// false turns the ordinal data off: every cell is treated as missing, so
  /// the chain targets the prior (used for calibration tests).
  bool use_ordinal_data = true;
  bool check_invariants = true;
  long progress_every = 0;  // log to stderr every this many sweeps; 0 = quiet
};

/// Smallest simplex component a Metropolis proposal may carry.
inline constexpr double kSimplexFloor = 1e-12;

/// Starting state inside the typical set: thresholds at unit increments,
/// probit-quantile intercepts, zero lags, Dirichlet-mean variances and
/// latent responses at interval midpoints.
inline ChainState initial_state(const ModelData& data, const ModelSpec& spec) {
  const int n = data.individuals(), J = data.metrics(), K = data.categories;
  const int F = data.factors(), M = data.covariates, P = data.lags();
  ChainState s;
  s.theta.resize(J, K - 1);
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < K - 1; ++k) s.theta(j, k) = k;
  s.var_simplex = Eigen::VectorXd::Constant(F + 1, 1.0 / (F + 1));

  s.beta0.resize(n, J);
  for (int j = 0; j < J; ++j) {
    long pooled_first = 0, pooled_total = 0;
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < data.days_of(i); ++t)
        if (data.z[i](j, t) != kMissing) {
          ++pooled_total;
          pooled_first += data.z[i](j, t) == 1;
        }
    for (int i = 0; i < n; ++i) {
      long first = 0, total = 0;
      for (int t = 0; t < data.days_of(i); ++t)
        if (data.z[i](j, t) != kMissing) {
          ++total;
          first += data.z[i](j, t) == 1;
        }
      double p = total > 0 ? static_cast<double>(first) / total
                 : pooled_total > 0 ? static_cast<double>(pooled_first) / pooled_total : 0.5;
      p = std::clamp(p, 0.02, 0.98);
      s.beta0(i, j) = -normal::quantile(p);
    }
  }
  s.beta.assign(F, Eigen::MatrixXd::Ones(n, J));
  const double w0 = spec.constrained_lags ? 1.0 / P : 0.0;
  s.alpha_ind.assign(M, Eigen::MatrixXd::Constant(n, P, w0));
  s.alpha_global = Eigen::MatrixXd::Constant(M, P, w0);
  s.psi = Eigen::MatrixXd::Ones(M, P);

  s.y.resize(n);
  s.ztilde.resize(n);
  for (int i = 0; i < n; ++i) {
    const int T = data.days_of(i);
    s.y[i].resize(F, T);
    for (int f = 0; f < F; ++f)
      s.y[i].row(f) = (data.design[f][i] * s.factor_coefficients(data, f, i)).transpose();
    s.ztilde[i].resize(J, T);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < J; ++j) {
        const int k = data.z[i](j, t);
        if (k == kMissing) {
          double mu = s.beta0(i, j);
          for (int f = 0; f < F; ++f) mu += s.beta[f](i, j) * s.y[i](f, t);
          s.ztilde[i](j, t) = mu;
          continue;
        }
        const auto [lo, hi] = s.interval(j, k);
        if (std::isinf(lo)) s.ztilde[i](j, t) = hi - 0.5;
        else if (std::isinf(hi)) s.ztilde[i](j, t) = lo + 0.5;
        else s.ztilde[i](j, t) = 0.5 * (lo + hi);
      }
  }
  return s;
}

/// Metropolis-within-Gibbs sampler for the latent-factor distributed-lag
/// ordinal probit model. Holds the chain state, the (possibly masked) data,
/// the random stream and the adaptive proposal scales.
class Sampler {
 public:
  Sampler(const ModelData& data, const ModelSpec& spec, Rng rng, SamplerOptions options = {})
      : Sampler(data, spec, ChainState{}, std::move(rng), options) {
    state_ = initial_state(data_, spec_);
  }

  Sampler(const ModelData& data, const ModelSpec& spec, ChainState initial, Rng rng,
          SamplerOptions options = {})
      : data_(data), spec_(spec), options_(options), rng_(std::move(rng)), state_(std::move(initial)) {
    if (!options_.use_ordinal_data)
      for (auto& z : data_.z) z.setConstant(kMissing);
    const int F = data_.factors(), n = data_.individuals();
    gram_.assign(F, std::vector<Eigen::MatrixXd>(n));
    for (int f = 0; f < F; ++f)
      for (int i = 0; i < n; ++i) gram_[f][i] = data_.design[f][i].transpose() * data_.design[f][i];
    log_threshold_step_.assign(data_.metrics(), std::log(spec_.mcmc.threshold_step));
    log_simplex_scale_ = std::log(spec_.mcmc.simplex_scale);
    log_collapsed_scale_ = log_simplex_scale_;
    log_factor_scale_step_ = std::log(0.05);
    log_lag_weight_scale_ = std::log(spec_.mcmc.lag_weight_scale);
    reset_acceptance();
  }

  const ModelData& data() const { return data_; }
  const ModelSpec& spec() const { return spec_; }
  const ChainState& state() const { return state_; }
  ChainState& mutable_state() { return state_; }
  /// Replace the observed categories (the state must already be consistent).
  void set_observations(std::vector<Eigen::MatrixXi> z) { data_.z = std::move(z); }
  Rng& rng() { return rng_; }

  double mu(int i, int j, int t) const {
    double m = state_.beta0(i, j);
    for (int f = 0; f < data_.factors(); ++f) m += state_.beta[f](i, j) * state_.y[i](f, t);
    return m;
  }

  /// DLM mean of factor f for every usable day of individual i.
  Eigen::VectorXd factor_mean(int i, int f) const {
    return data_.design[f][i] * state_.factor_coefficients(data_, f, i);
  }

  // -------------------------------------------------------------------------
  // Latent responses

  void sample_ztilde() {
    const double sd = std::sqrt(state_.sigma2());
    for (int i = 0; i < data_.individuals(); ++i)
      for (int t = 0; t < data_.days_of(i); ++t)
        for (int j = 0; j < data_.metrics(); ++j) draw_ztilde(i, j, t, sd);
  }

  // -------------------------------------------------------------------------
  // Latent factors

  ScalarConditional factor_conditional(int i, int t, int f) const {
    return factor_conditional(i, t, f, factor_mean(i, f)[t]);
  }

  void sample_factors() {
    const int F = data_.factors();
    for (int i = 0; i < data_.individuals(); ++i) {
      std::vector<Eigen::VectorXd> prior(F);
      for (int f = 0; f < F; ++f) prior[f] = factor_mean(i, f);
      for (int t = 0; t < data_.days_of(i); ++t)
        for (int f = 0; f < F; ++f) {
          const auto c = factor_conditional(i, t, f, prior[f][t]);
          state_.y[i](f, t) = rng_.normal(c.mean, std::sqrt(c.variance));
        }
    }
  }

  // -------------------------------------------------------------------------
  // Intercepts and loadings

  /// Coefficients are (beta0, beta_1, .., beta_F) or just beta0 for the
  /// anchored metric.
  GaussianConditional loading_conditional(int i, int j) const {
    const int F = data_.factors(), T = data_.days_of(i);
    const double s2 = state_.sigma2();
    const double prior_precision = 1.0 / spec_.priors.loading_variance;
    if (j == 0) {
      double r = 0.0;
      for (int t = 0; t < T; ++t) r += state_.ztilde[i](0, t) - state_.y[i].col(t).sum();
      GaussianConditional c;
      c.precision = Eigen::MatrixXd::Constant(1, 1, prior_precision + T / s2);
      c.mean = Eigen::VectorXd::Constant(1, (r / s2) / c.precision(0, 0));
      return c;
    }
    Eigen::MatrixXd X(T, F + 1);
    X.col(0).setOnes();
    X.rightCols(F) = state_.y[i].transpose();
    GaussianConditional c;
    c.precision = X.transpose() * X / s2;
    c.precision.diagonal().array() += prior_precision;
    const Eigen::VectorXd rhs = X.transpose() * state_.ztilde[i].row(j).transpose() / s2;
    c.mean = c.precision.llt().solve(rhs);
    return c;
  }

  void sample_loadings() {
    for (int i = 0; i < data_.individuals(); ++i)
      for (int j = 0; j < data_.metrics(); ++j) {
        const Eigen::VectorXd b = loading_conditional(i, j).draw(rng_);
        state_.beta0(i, j) = b[0];
        if (j == 0) continue;
        for (int f = 0; f < data_.factors(); ++f) state_.beta[f](i, j) = b[f + 1];
      }
  }

  // -------------------------------------------------------------------------
  // Individual lag coefficients (unconstrained model)

  GaussianConditional lag_conditional(int i, int f) const {
    const auto blocks = data_.blocks(f);
    const int P = data_.lags();
    const int dim = P * static_cast<int>(blocks.size());
    Eigen::VectorXd prior_mean(dim), prior_precision(dim);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      prior_mean.segment(static_cast<int>(b) * P, P) = state_.alpha_global.row(blocks[b]).transpose();
      prior_precision.segment(static_cast<int>(b) * P, P) =
          state_.psi.row(blocks[b]).transpose().cwiseInverse();
    }
    const double tau2 = state_.tau2(f);
    GaussianConditional c;
    c.precision = gram_[f][i] / tau2;
    c.precision.diagonal() += prior_precision;
    const Eigen::VectorXd rhs = prior_precision.cwiseProduct(prior_mean) +
                                data_.design[f][i].transpose() * state_.y[i].row(f).transpose() / tau2;
    c.mean = c.precision.llt().solve(rhs);
    return c;
  }

  void sample_lag_coefficients() {
    const int P = data_.lags();
    for (int i = 0; i < data_.individuals(); ++i)
      for (int f = 0; f < data_.factors(); ++f) {
        const Eigen::VectorXd a = lag_conditional(i, f).draw(rng_);
        const auto blocks = data_.blocks(f);
        for (std::size_t b = 0; b < blocks.size(); ++b)
          state_.alpha_ind[blocks[b]].row(i) = a.segment(static_cast<int>(b) * P, P).transpose();
      }
  }

  // -------------------------------------------------------------------------
  // Global lag means and pooling variances

  ScalarConditional global_lag_conditional(int m, int l) const {
    const int n = data_.individuals();
    const double psi = state_.psi(m, l);
    const double precision = 1.0 / spec_.priors.alpha_variance + n / psi;
    return {state_.alpha_ind[m].col(l).sum() / psi / precision, 1.0 / precision};
  }

  InverseGammaConditional psi_conditional(int m, int l) const {
    const int n = data_.individuals();
    const double ss = (state_.alpha_ind[m].col(l).array() - state_.alpha_global(m, l)).square().sum();
    return {spec_.priors.ig_shape + 0.5 * n, spec_.priors.ig_rate + 0.5 * ss};
  }

  void sample_global_lag() {
    for (int m = 0; m < data_.covariates; ++m)
      for (int l = 0; l < data_.lags(); ++l) {
        const auto a = global_lag_conditional(m, l);
        state_.alpha_global(m, l) = rng_.normal(a.mean, std::sqrt(a.variance));
        const auto p = psi_conditional(m, l);
        state_.psi(m, l) = rng_.inverse_gamma(p.shape, p.rate);
      }
  }

  // -------------------------------------------------------------------------
  // Thresholds

  /// log(theta_k - theta_{k-1}) for the free thresholds of metric j.
  Eigen::VectorXd threshold_log_increments(int j) const {
    const int free = static_cast<int>(state_.theta.cols()) - 1;
    Eigen::VectorXd out(std::max(free, 0));
    for (int k = 0; k < free; ++k) out[k] = std::log(state_.theta(j, k + 1) - state_.theta(j, k));
    return out;
  }

  static Eigen::RowVectorXd thresholds_from_log_increments(const Eigen::VectorXd& inc) {
    Eigen::RowVectorXd theta(inc.size() + 1);
    theta[0] = 0.0;
    for (Eigen::Index k = 0; k < inc.size(); ++k) theta[k + 1] = theta[k] + std::exp(inc[k]);
    return theta;
  }

  /// Ordinal log-likelihood of metric j with the latent responses integrated
  /// out, plus the log prior of the increments.
  double threshold_log_target(int j, const Eigen::VectorXd& log_increments) const {
    const Eigen::RowVectorXd theta = thresholds_from_log_increments(log_increments);
    const int K = data_.categories;
    const double sd = std::sqrt(state_.sigma2());
    double ll = 0.0;
    for (int i = 0; i < data_.individuals(); ++i)
      for (int t = 0; t < data_.days_of(i); ++t) {
        const int k = data_.z[i](j, t);
        if (k == kMissing) continue;
        const double m = mu(i, j, t);
        const double lo = k == 1 ? -normal::kInf : (theta[k - 2] - m) / sd;
        const double hi = k == K ? normal::kInf : (theta[k - 1] - m) / sd;
        ll += normal::log_interval_probability(lo, hi);
      }
    const double v = spec_.priors.threshold_variance;
    return ll - 0.5 * log_increments.squaredNorm() / v;
  }

  /// log Metropolis ratio for moving metric j's increments to `proposal`.
  /// The prior sits on the log increments themselves, so no Jacobian enters.
  double threshold_log_acceptance(int j, const Eigen::VectorXd& proposal) const {
    return threshold_log_target(j, proposal) - threshold_log_target(j, threshold_log_increments(j));
  }

  void sample_thresholds(bool adapting) {
    if (data_.categories <= 2) return;
    const double sd = std::sqrt(state_.sigma2());
    for (int j = 0; j < data_.metrics(); ++j) {
      const Eigen::VectorXd current = threshold_log_increments(j);
      const Eigen::VectorXd proposal =
          current + std::exp(log_threshold_step_[j]) * rng_.normal_vector(current.size());
      const double log_r = threshold_log_target(j, proposal) - threshold_log_target(j, current);
      const bool accept = std::log(rng_.uniform()) < log_r;
      if (accept) {
        state_.theta.row(j) = thresholds_from_log_increments(proposal);
        // Joint move: redraw this metric's latent responses under the new cut-points.
        for (int i = 0; i < data_.individuals(); ++i)
          for (int t = 0; t < data_.days_of(i); ++t)
            if (data_.z[i](j, t) != kMissing) draw_ztilde(i, j, t, sd);
      }
      acceptance_.thresholds[j].record(accept);
      if (adapting) adapt(log_threshold_step_[j], accept, +1.0);
    }
  }

  // -------------------------------------------------------------------------
  // Variance simplex (sigma^2, tau^2_1, ...)

  /// Residual sums of squares and counts the simplex full conditional needs.
  struct SimplexStats {
    double rss_z = 0.0;
    long count_z = 0;
    std::vector<double> rss_factor;
    std::vector<long> count_factor;
  };

  SimplexStats simplex_stats() const {
    SimplexStats st;
    for (int i = 0; i < data_.individuals(); ++i)
      for (int t = 0; t < data_.days_of(i); ++t)
        for (int j = 0; j < data_.metrics(); ++j) {
          const double r = state_.ztilde[i](j, t) - mu(i, j, t);
          st.rss_z += r * r;
          ++st.count_z;
        }
    for (int f = 0; f < data_.factors(); ++f) {
      double rss = 0.0;
      long count = 0;
      for (int i = 0; i < data_.individuals(); ++i) {
        rss += (state_.y[i].row(f).transpose() - factor_mean(i, f)).squaredNorm();
        count += data_.days_of(i);
      }
      st.rss_factor.push_back(rss);
      st.count_factor.push_back(count);
    }
    return st;
  }

  double simplex_log_target(const Eigen::VectorXd& s, const SimplexStats& st) const {
    double out = -0.5 * st.count_z * std::log(s[0]) - 0.5 * st.rss_z / s[0];
    for (int f = 0; f < data_.factors(); ++f)
      out += -0.5 * st.count_factor[f] * std::log(s[f + 1]) - 0.5 * st.rss_factor[f] / s[f + 1];
    const double a = spec_.priors.simplex_concentration;
    return out + (a - 1.0) * s.array().log().sum();
  }

  double simplex_log_target(const Eigen::VectorXd& s) const { return simplex_log_target(s, simplex_stats()); }

  /// log Metropolis-Hastings ratio for a Dirichlet(scale * current) proposal.
  double simplex_log_acceptance(const Eigen::VectorXd& current, const Eigen::VectorXd& proposal,
                                double scale) const {
    return simplex_log_acceptance(current, proposal, scale, simplex_stats());
  }

  double simplex_log_acceptance(const Eigen::VectorXd& current, const Eigen::VectorXd& proposal,
                                double scale, const SimplexStats& st) const {
    return simplex_log_target(proposal, st) - simplex_log_target(current, st) +
           log_dirichlet_density(current, scale * proposal) -
           log_dirichlet_density(proposal, scale * current);
  }

  void sample_variance_simplex(bool adapting) {
    const double scale = std::exp(log_simplex_scale_);
    const Eigen::VectorXd current = state_.var_simplex;
    const Eigen::VectorXd proposal = rng_.dirichlet(scale * current);
    bool accept = false;
    if ((proposal.array() > kSimplexFloor).all()) {
      const double log_r = simplex_log_acceptance(current, proposal, scale, simplex_stats());
      accept = std::log(rng_.uniform()) < log_r;
    }
    if (accept) state_.var_simplex = proposal / proposal.sum();
    acceptance_.simplex.record(accept);
    if (adapting) adapt(log_simplex_scale_, accept, -1.0);
  }

  /// Per-individual statistics of r_t = Ztilde_t - beta0 - B m_t (m_t the DLM
  /// means) for the simplex move with the factors integrated out.
  struct CollapsedStats {
    std::vector<double> rss;            // sum_t r't r_t
    std::vector<Eigen::MatrixXd> cross; // sum_t (B'r_t)(B'r_t)'
    std::vector<Eigen::MatrixXd> gram;  // B'B
    std::vector<long> days;
  };

  CollapsedStats collapsed_stats() const {
    const int n = data_.individuals(), J = data_.metrics(), F = data_.factors();
    CollapsedStats st;
    for (int i = 0; i < n; ++i) {
      Eigen::MatrixXd B(J, F);
      for (int f = 0; f < F; ++f) B.col(f) = state_.beta[f].row(i).transpose();
      Eigen::MatrixXd means(F, data_.days_of(i));
      for (int f = 0; f < F; ++f) means.row(f) = factor_mean(i, f).transpose();
      const Eigen::MatrixXd r =
          (state_.ztilde[i] - B * means).colwise() - state_.beta0.row(i).transpose();
      const Eigen::MatrixXd br = B.transpose() * r;
      st.rss.push_back(r.squaredNorm());
      st.cross.push_back(br * br.transpose());
      st.gram.push_back(B.transpose() * B);
      st.days.push_back(data_.days_of(i));
    }
    return st;
  }

  /// log p(Ztilde | s, rest) with every factor integrated out, plus the
  /// Dirichlet prior. Per day Ztilde ~ N(beta0 + B m, sigma^2 I + B diag(tau^2) B').
  double collapsed_simplex_log_target(const Eigen::VectorXd& s, const CollapsedStats& st) const {
    const int J = data_.metrics(), F = data_.factors();
    const double s2 = s[0];
    const Eigen::VectorXd tau2 = s.tail(F);
    double out = 0.0;
    for (std::size_t i = 0; i < st.rss.size(); ++i) {
      Eigen::MatrixXd A = st.gram[i] / s2;
      A.diagonal() += tau2.cwiseInverse();
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      const double log_det_a = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      const double log_det = J * std::log(s2) + tau2.array().log().sum() + log_det_a;
      const double quad = st.rss[i] / s2 - llt.solve(st.cross[i]).trace() / (s2 * s2);
      out += -0.5 * (st.days[i] * log_det + quad);
    }
    const double a = spec_.priors.simplex_concentration;
    return out + (a - 1.0) * s.array().log().sum();
  }

  /// Second simplex move with the factors integrated out; on acceptance the
  /// factors are redrawn under the new variances. Breaks the strong coupling
  /// between sigma^2 and the sampled factors.
  void sample_variance_simplex_collapsed(bool adapting) {
    const double scale = std::exp(log_collapsed_scale_);
    const Eigen::VectorXd current = state_.var_simplex;
    const Eigen::VectorXd proposal = rng_.dirichlet(scale * current);
    bool accept = false;
    if ((proposal.array() > kSimplexFloor).all()) {
      const auto st = collapsed_stats();
      const double log_r = collapsed_simplex_log_target(proposal, st) -
                           collapsed_simplex_log_target(current, st) +
                           log_dirichlet_density(current, scale * proposal) -
                           log_dirichlet_density(proposal, scale * current);
      accept = std::log(rng_.uniform()) < log_r;
    }
    if (accept) {
      state_.var_simplex = proposal / proposal.sum();
      sample_factors();
    }
    acceptance_.simplex_collapsed.record(accept);
    if (adapting) adapt(log_collapsed_scale_, accept, -1.0);
  }

  /// log target change and log Jacobian of rescaling factor f by c: Y_f, its
  /// lag coefficients and global means times c, psi and tau_f^2 times c^2,
  /// non-anchored loadings divided by c. Non-anchored metrics keep their means,
  /// so the move travels along the tau^2 / loading ridge. -inf if sigma^2
  /// would leave the simplex.
  double factor_scale_log_ratio(int f, double c) const {
    const int n = data_.individuals(), J = data_.metrics();
    const double log_c = std::log(c);
    const double tau2 = state_.tau2(f), tau2_new = c * c * tau2;
    const double s2 = state_.sigma2(), s2_new = s2 - (tau2_new - tau2);
    if (!(s2_new > kSimplexFloor)) return -std::numeric_limits<double>::infinity();

    double out = 0.0;
    // Latent responses: only the anchored metric's mean moves, but sigma^2 moves for all.
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < data_.days_of(i); ++t)
        for (int j = 0; j < J; ++j) {
          const double z = state_.ztilde[i](j, t);
          const double m = mu(i, j, t);
          const double m_new = j == 0 ? m + (c - 1.0) * state_.y[i](f, t) : m;
          out += normal::log_pdf(z, m_new, s2_new) - normal::log_pdf(z, m, s2);
        }
    // Global lag means and pooling variances of the covariates feeding f.
    const auto& p = spec_.priors;
    int coefficients = 0;
    for (int m : data_.blocks(f))
      for (int l = 0; l < data_.lags(); ++l) {
        ++coefficients;
        const double a = state_.alpha_global(m, l), psi = state_.psi(m, l);
        out += normal::log_pdf(c * a, 0.0, p.alpha_variance) - normal::log_pdf(a, 0.0, p.alpha_variance);
        // inverse gamma: -(shape+1) log psi - rate / psi
        out += -(p.ig_shape + 1.0) * 2.0 * log_c - p.ig_rate / (c * c * psi) + p.ig_rate / psi;
      }
    for (int i = 0; i < n; ++i)
      for (int j = 1; j < J; ++j) {
        const double b = state_.beta[f](i, j);
        out += normal::log_pdf(b / c, 0.0, p.loading_variance) - normal::log_pdf(b, 0.0, p.loading_variance);
      }
    const double a = p.simplex_concentration;
    out += (a - 1.0) * (std::log(tau2_new) - std::log(tau2) + std::log(s2_new) - std::log(s2));
    // Factor and individual-coefficient densities are scale invariant apart
    // from their normalizers, which cancel against the matching Jacobian terms.
    const double log_jacobian = (2.0 + 3.0 * coefficients - n * (J - 1.0)) * log_c;
    return out + log_jacobian;
  }

  void apply_factor_scale(int f, double c) {
    const double tau2_new = c * c * state_.tau2(f);
    state_.var_simplex[0] -= tau2_new - state_.tau2(f);
    state_.var_simplex[f + 1] = tau2_new;
    state_.var_simplex /= state_.var_simplex.sum();
    for (auto& y : state_.y) y.row(f) *= c;
    for (int m : data_.blocks(f)) {
      state_.alpha_ind[m] *= c;
      state_.alpha_global.row(m) *= c;
      state_.psi.row(m) *= c * c;
    }
    state_.beta[f].rightCols(data_.metrics() - 1) /= c;
  }

  /// Random-walk Metropolis on log c for the rescaling move above.
  void sample_factor_scale(bool adapting) {
    if (spec_.constrained_lags) return;
    for (int f = 0; f < data_.factors(); ++f) {
      const double c = std::exp(std::exp(log_factor_scale_step_) * rng_.normal());
      const double log_r = factor_scale_log_ratio(f, c);
      const bool accept = std::log(rng_.uniform()) < log_r;
      if (accept) apply_factor_scale(f, c);
      acceptance_.factor_scale.record(accept);
      if (adapting) adapt(log_factor_scale_step_, accept, 1.0);
    }
  }

  /// log target change from negating factor f of individual i (all
  /// individuals if i < 0) together with its non-anchored loadings and lag
  /// coefficients. Only the anchored metric's mean changes; a single-individual
  /// flip also moves its coefficients against the pooled mean.
  double reflection_log_ratio(int f, int i) const {
    const double s2 = state_.sigma2();
    double out = 0.0;
    const int first = i < 0 ? 0 : i, last = i < 0 ? data_.individuals() : i + 1;
    for (int r = first; r < last; ++r) {
      for (int t = 0; t < data_.days_of(r); ++t) {
        const double z = state_.ztilde[r](0, t);
        const double m = mu(r, 0, t);
        out += normal::log_pdf(z, m - 2.0 * state_.y[r](f, t), s2) - normal::log_pdf(z, m, s2);
      }
      if (i < 0) continue;
      for (int m : data_.blocks(f))
        for (int l = 0; l < data_.lags(); ++l) {
          const double a = state_.alpha_ind[m](r, l), g = state_.alpha_global(m, l), v = state_.psi(m, l);
          out += normal::log_pdf(-a, g, v) - normal::log_pdf(a, g, v);
        }
    }
    return out;
  }

  void apply_reflection(int f, int i) {
    const int first = i < 0 ? 0 : i, last = i < 0 ? data_.individuals() : i + 1;
    const int J = data_.metrics();
    for (int r = first; r < last; ++r) {
      state_.y[r].row(f) *= -1.0;
      state_.beta[f].row(r).tail(J - 1) *= -1.0;
      for (int m : data_.blocks(f)) state_.alpha_ind[m].row(r) *= -1.0;
    }
    if (i < 0)
      for (int m : data_.blocks(f)) state_.alpha_global.row(m) *= -1.0;
  }

  /// Deterministic sign-flip proposals (self-inverse, unit Jacobian): one for
  /// the whole factor, then one per individual.
  void sample_reflections() {
    if (spec_.constrained_lags) return;
    for (int f = 0; f < data_.factors(); ++f)
      for (int i = -1; i < data_.individuals(); ++i) {
        const bool accept = std::log(rng_.uniform()) < reflection_log_ratio(f, i);
        if (accept) apply_reflection(f, i);
      }
  }

  // -------------------------------------------------------------------------
  // Constrained lags: nonnegative weights summing to one per (m, i)

  double lag_weight_log_target(int m, int i, const Eigen::VectorXd& w) const {
    const int f = data_.factor_of(m);
    const int P = data_.lags();
    const auto blocks = data_.blocks(f);
    const int offset = static_cast<int>(std::find(blocks.begin(), blocks.end(), m) - blocks.begin()) * P;
    Eigen::VectorXd a = state_.factor_coefficients(data_, f, i);
    a.segment(offset, P) = w;
    const double rss = (state_.y[i].row(f).transpose() - data_.design[f][i] * a).squaredNorm();
    const double c = spec_.priors.lag_weight_concentration;
    return -0.5 * rss / state_.tau2(f) + (c - 1.0) * w.array().log().sum();
  }

  void sample_constrained_lags(bool adapting) {
    if (data_.lags() < 2) return;
    const double scale = std::exp(log_lag_weight_scale_);
    for (int m = 0; m < data_.covariates; ++m)
      for (int i = 0; i < data_.individuals(); ++i) {
        const Eigen::VectorXd current = state_.alpha_ind[m].row(i).transpose();
        const Eigen::VectorXd proposal = rng_.dirichlet(scale * current);
        bool accept = false;
        if ((proposal.array() > kSimplexFloor).all()) {
          const double log_r = lag_weight_log_target(m, i, proposal) -
                               lag_weight_log_target(m, i, current) +
                               log_dirichlet_density(current, scale * proposal) -
                               log_dirichlet_density(proposal, scale * current);
          accept = std::log(rng_.uniform()) < log_r;
        }
        if (accept) state_.alpha_ind[m].row(i) = (proposal / proposal.sum()).transpose();
        acceptance_.lag_weights.record(accept);
        if (adapting) adapt(log_lag_weight_scale_, accept, -1.0);
      }
    // No pooling layer here; the global row reports the cross-individual mean.
    for (int m = 0; m < data_.covariates; ++m)
      state_.alpha_global.row(m) = state_.alpha_ind[m].colwise().mean();
  }

  // -------------------------------------------------------------------------

  /// One full sweep in the fixed order: latent responses, factors, loadings,
  /// lag coefficients, global lags, thresholds, variance simplex.
  void sweep(long iteration, bool adapting) {
    iteration_ = iteration;
    sample_ztilde();
    sample_factors();
    sample_loadings();
    if (spec_.constrained_lags) {
      sample_constrained_lags(adapting);
    } else {
      sample_lag_coefficients();
      sample_global_lag();
    }
    sample_thresholds(adapting);
    sample_variance_simplex(adapting);
    sample_variance_simplex_collapsed(adapting);
    sample_factor_scale(adapting);
    sample_reflections();
    if (options_.check_invariants) {
      if (auto bad = check_state(state_, data_)) throw InvariantViolation(iteration, *bad);
    }
  }

  const AcceptanceReport& acceptance() const { return acceptance_; }

  AcceptanceReport acceptance_with_scales() const {
    AcceptanceReport r = acceptance_;
    r.threshold_steps.clear();
    for (double s : log_threshold_step_) r.threshold_steps.push_back(std::exp(s));
    r.simplex_scale = std::exp(log_simplex_scale_);
    r.collapsed_scale = std::exp(log_collapsed_scale_);
    r.factor_scale_step = std::exp(log_factor_scale_step_);
    r.lag_weight_scale = std::exp(log_lag_weight_scale_);
    return r;
  }

  void reset_acceptance() {
    acceptance_ = AcceptanceReport{};
    acceptance_.thresholds.assign(data_.metrics(), {});
  }

 private:
  void draw_ztilde(int i, int j, int t, double sd) {
    const double m = mu(i, j, t);
    const int k = data_.z[i](j, t);
    if (k == kMissing) {
      state_.ztilde[i](j, t) = rng_.normal(m, sd);
      return;
    }
    const auto [lo, hi] = state_.interval(j, k);
    state_.ztilde[i](j, t) = sample_truncated_normal(m, sd, lo, hi, rng_);
  }

  ScalarConditional factor_conditional(int i, int t, int f, double prior_mean) const {
    const int F = data_.factors();
    const double s2 = state_.sigma2(), tau2 = state_.tau2(f);
    double precision = 1.0 / tau2;
    double num = prior_mean / tau2;
    for (int j = 0; j < data_.metrics(); ++j) {
      const double b = state_.beta[f](i, j);
      double r = state_.ztilde[i](j, t) - state_.beta0(i, j);
      for (int g = 0; g < F; ++g)
        if (g != f) r -= state_.beta[g](i, j) * state_.y[i](g, t);
      precision += b * b / s2;
      num += b * r / s2;
    }
    return {num / precision, 1.0 / precision};
  }

  // Robbins-Monro step on a log proposal scale during burn-in. direction +1
  // widens the proposal when accepting too often (random-walk step size),
  // -1 for concentration-type scales.
  void adapt(double& log_scale, bool accepted, double direction) {
    const double gain = std::pow(static_cast<double>(iteration_) + 1.0, -0.6);
    log_scale += direction * gain * ((accepted ? 1.0 : 0.0) - spec_.mcmc.target_acceptance);
    log_scale = std::clamp(log_scale, -12.0, 12.0);
  }

  ModelData data_;
  ModelSpec spec_;
  SamplerOptions options_;
  Rng rng_;
  ChainState state_;
  std::vector<std::vector<Eigen::MatrixXd>> gram_;  // [f][i] D'D
  std::vector<double> log_threshold_step_;
  double log_simplex_scale_ = 0.0;
  double log_collapsed_scale_ = 0.0;
  double log_factor_scale_step_ = 0.0;
  double log_lag_weight_scale_ = 0.0;
  AcceptanceReport acceptance_;
  long iteration_ = 0;
};

// ---------------------------------------------------------------------------

/// Stable fingerprint of a model specification.
inline std::string spec_fingerprint(const ModelSpec& s) {
  std::ostringstream text;
  text.precision(17);
  const auto& p = s.priors;
  const auto& m = s.mcmc;
  text << to_string(s.form) << '|' << s.lag_depth << '|' << s.categories << '|' << s.constrained_lags
       << '|' << p.alpha_variance << '|' << p.loading_variance << '|' << p.ig_shape << '|' << p.ig_rate
       << '|' << p.simplex_concentration << '|' << p.threshold_variance << '|'
       << p.lag_weight_concentration << '|' << m.iterations << '|' << m.burn_in << '|' << m.thin << '|'
       << m.threshold_step << '|' << m.simplex_scale << '|' << m.lag_weight_scale << '|'
       << m.target_acceptance << '|' << m.adapt << '|' << m.seed;
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : text.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream hex;
  hex << std::hex;
  hex.width(16);
  hex.fill('0');
  hex << h;
  return hex.str();
}

/// Run one chain: burn-in with adaptation, then frozen proposals, keeping every
/// `thin`-th state.
inline PosteriorDraws run_single_chain(const ModelData& data, const ModelSpec& spec, int chain,
                                       const SamplerOptions& options = {}) {
  Sampler sampler(data, spec, Rng::split(spec.mcmc.seed, chain), options);
  PosteriorDraws out;
  const auto& mc = spec.mcmc;
  for (long it = 0; it < mc.iterations; ++it) {
    const bool burning = it < mc.burn_in;
    if (it == mc.burn_in) sampler.reset_acceptance();
    sampler.sweep(it, burning && mc.adapt);
    if (!burning && (it - mc.burn_in) % mc.thin == mc.thin - 1) {
      out.states.push_back(sampler.state());
      out.chain.push_back(chain);
      out.iteration.push_back(it);
    }
    if (options.progress_every > 0 && (it + 1) % options.progress_every == 0) {
      const auto& a = sampler.acceptance();
      double thr = 0.0;
      for (const auto& c : a.thresholds) thr += c.rate();
      if (!a.thresholds.empty()) thr /= static_cast<double>(a.thresholds.size());
      std::cerr << "chain " << chain << " iteration " << it + 1 << "/" << mc.iterations
                << (burning ? " (burn-in)" : "") << " accept thresholds=" << thr
                << " simplex=" << a.simplex.rate() << "\n";
    }
  }
  out.acceptance.push_back(sampler.acceptance_with_scales());
  out.spec_hash = spec_fingerprint(spec);
  out.seed = spec.mcmc.seed;
  return out;
}

/// Run `chains` independent chains (in parallel threads) and pool their draws
/// in chain order. Deterministic given the seed.
inline PosteriorDraws run_chain(const ModelData& data, const ModelSpec& spec, int chains = 1,
                                const SamplerOptions& options = {}) {
  if (chains < 1) throw std::invalid_argument("run_chain: need at least one chain");
  std::vector<PosteriorDraws> parts(chains);
  std::vector<std::exception_ptr> errors(chains);
  {
    std::vector<std::jthread> workers;
    for (int c = 0; c < chains; ++c)
      workers.emplace_back([&, c] {
        try {
          parts[c] = run_single_chain(data, spec, c, options);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  PosteriorDraws out;
  out.spec_hash = spec_fingerprint(spec);
  out.seed = spec.mcmc.seed;
  for (auto& p : parts) {
    out.states.insert(out.states.end(), std::make_move_iterator(p.states.begin()),
                      std::make_move_iterator(p.states.end()));
    out.chain.insert(out.chain.end(), p.chain.begin(), p.chain.end());
    out.iteration.insert(out.iteration.end(), p.iteration.begin(), p.iteration.end());
    out.acceptance.insert(out.acceptance.end(), p.acceptance.begin(), p.acceptance.end());
  }
  return out;
}

/// Validate, assemble the lag design and sample.
inline PosteriorDraws run_chain(const Panel& panel, const ModelSpec& spec, int chains = 1,
                                const SamplerOptions& options = {}) {
  const auto report = validate_panel(panel.ordinal, panel.covariates, spec);
  if (!report.ok()) throw std::invalid_argument("panel failed validation:\n" + report.to_string());
  return run_chain(make_model_data(panel, spec), spec, chains, options);
}

}  // namespace wdlm
