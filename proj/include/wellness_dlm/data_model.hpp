#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace wdlm {

// ---------------------------------------------------------------------------
// Errors

struct DegenerateInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised by the sampler when a chain state breaks an identifiability or
/// support constraint.
struct InvariantViolation : std::runtime_error {
  InvariantViolation(long iteration, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what),
        iteration(iteration) {}
  long iteration;
};

inline constexpr int kMissing = 0;
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Model specification

enum class FactorForm { univariate, bivariate };

inline std::string to_string(FactorForm f) {
  return f == FactorForm::univariate ? "univariate" : "bivariate";
}

inline FactorForm factor_form_from_string(const std::string& s) {
  if (s == "univariate") return FactorForm::univariate;
  if (s == "bivariate") return FactorForm::bivariate;
  throw std::invalid_argument("unknown factor form '" + s + "'");
}

struct Priors {
  double alpha_variance = 10.0;    // global lag means
  double loading_variance = 10.0;  // intercepts and factor loadings
  double ig_shape = 0.01;          // pooling variances psi
  double ig_rate = 0.01;
  double simplex_concentration = 10.0;
  double threshold_variance = 1.0;  // log threshold increments
  double lag_weight_concentration = 1.0;  // constrained-lag Dirichlet
};

struct McmcControls {
  long iterations = 100000;
  long burn_in = 20000;
  long thin = 80;
  double threshold_step = 0.1;
  double simplex_scale = 500.0;
  double lag_weight_scale = 500.0;
  double target_acceptance = 0.3;
  bool adapt = true;
  std::uint64_t seed = 1;
};

struct ModelSpec {
  FactorForm form = FactorForm::univariate;
  int lag_depth = 10;
  int categories = 5;
  bool constrained_lags = false;
  Priors priors;
  McmcControls mcmc;

  int factor_count(int covariates) const { return form == FactorForm::univariate ? 1 : covariates; }
};

// ---------------------------------------------------------------------------
// Panels

/// Observed ordinal responses. values[i] is J x T_i; kMissing marks a missing cell.
struct OrdinalPanel {
  int categories = 5;
  std::vector<std::string> metric_names;
  std::vector<std::string> individual_ids;
  std::vector<std::vector<int>> day_index;
  std::vector<Eigen::MatrixXi> values;

  int individuals() const { return static_cast<int>(values.size()); }
  int metrics() const { return static_cast<int>(metric_names.size()); }
  int days(int i) const { return static_cast<int>(values[i].cols()); }
};

/// Daily covariates on the same rows as the ordinal panel. NaN marks missing.
struct CovariatePanel {
  std::vector<std::string> names;                   // M entries: workload, recovery
  std::vector<std::vector<Eigen::VectorXd>> series; // [m][i], length T_i

  int covariates() const { return static_cast<int>(names.size()); }
};

/// Everything read from a model panel file.
struct Panel {
  OrdinalPanel ordinal;
  CovariatePanel covariates;
  std::vector<std::vector<int>> match_days;  // calendar days, per individual
};

/// Row indices t of individual i whose previous `lag_depth` calendar days are
/// all present with every covariate observed.
inline std::vector<int> usable_rows(const std::vector<int>& days, const CovariatePanel& covs,
                                    int i, int lag_depth) {
  const int T = static_cast<int>(days.size());
  auto complete = [&](int t) {
    for (const auto& m : covs.series)
      if (std::isnan(m[i][t])) return false;
    return true;
  };
  std::vector<int> rows;
  int run = 0;  // consecutive complete days ending at t
  for (int t = 0; t < T; ++t) {
    const bool contiguous = t > 0 && days[t] == days[t - 1] + 1;
    run = complete(t) ? (contiguous ? run + 1 : 1) : 0;
    if (run >= lag_depth + 1) rows.push_back(t);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Model data: the panel restricted to usable days with the lag design attached.

struct ModelData {
  FactorForm form = FactorForm::univariate;
  int categories = 5;
  int lag_depth = 0;
  int covariates = 2;
  std::vector<std::string> metric_names;
  std::vector<std::string> individual_ids;
  std::vector<std::vector<int>> days;               // [i] calendar day per usable t
  std::vector<Eigen::MatrixXi> z;                   // [i] J x T_i
  std::vector<std::vector<Eigen::MatrixXd>> design; // [f][i] T_i x P_f
  std::vector<std::vector<int>> match_days;

  int individuals() const { return static_cast<int>(z.size()); }
  int metrics() const { return static_cast<int>(metric_names.size()); }
  int days_of(int i) const { return static_cast<int>(z[i].cols()); }
  int factors() const { return form == FactorForm::univariate ? 1 : covariates; }
  int lags() const { return lag_depth + 1; }
  /// Covariates entering factor f, in stacking order.
  std::vector<int> blocks(int f) const {
    if (form == FactorForm::bivariate) return {f};
    std::vector<int> all(covariates);
    for (int m = 0; m < covariates; ++m) all[m] = m;
    return all;
  }
  int factor_of(int covariate) const { return form == FactorForm::univariate ? 0 : covariate; }
};

// ---------------------------------------------------------------------------
// Chain state

struct ChainState {
  std::vector<Eigen::MatrixXd> ztilde;    // [i] J x T_i latent responses
  std::vector<Eigen::MatrixXd> y;         // [i] F x T_i latent factors
  Eigen::MatrixXd beta0;                  // n x J intercepts
  std::vector<Eigen::MatrixXd> beta;      // [f] n x J loadings
  std::vector<Eigen::MatrixXd> alpha_ind; // [m] n x (L+1)
  Eigen::MatrixXd alpha_global;           // M x (L+1)
  Eigen::MatrixXd psi;                    // M x (L+1)
  Eigen::MatrixXd theta;                  // J x (K-1), theta(j, 0) == 0
  Eigen::VectorXd var_simplex;            // sigma^2, tau_1^2, ...

  double sigma2() const { return var_simplex[0]; }
  double tau2(int f) const { return var_simplex[f + 1]; }

  /// Stacked lag coefficients feeding factor f of individual i.
  Eigen::VectorXd factor_coefficients(const ModelData& data, int f, int i) const {
    const auto blocks = data.blocks(f);
    const int P = data.lags();
    Eigen::VectorXd a(P * static_cast<int>(blocks.size()));
    for (std::size_t b = 0; b < blocks.size(); ++b)
      a.segment(static_cast<int>(b) * P, P) = alpha_ind[blocks[b]].row(i).transpose();
    return a;
  }

  /// Lower and upper threshold of category k (1-based) of metric j.
  std::pair<double, double> interval(int j, int k) const {
    const int K = static_cast<int>(theta.cols()) + 1;
    const double lo = k == 1 ? -std::numeric_limits<double>::infinity() : theta(j, k - 2);
    const double hi = k == K ? std::numeric_limits<double>::infinity() : theta(j, k - 1);
    return {lo, hi};
  }
};

inline constexpr double kSimplexTolerance = 1e-12;

/// First violated invariant of a chain state, if any.
inline std::optional<std::string> check_state(const ChainState& s, const ModelData& data) {
  std::ostringstream msg;
  const int J = data.metrics();
  for (int j = 0; j < J; ++j) {
    if (s.theta(j, 0) != 0.0) {
      msg << "theta[" << j << "][0] = " << s.theta(j, 0) << " (must be 0)";
      return msg.str();
    }
    for (int k = 1; k < s.theta.cols(); ++k)
      if (!(s.theta(j, k - 1) < s.theta(j, k))) {
        msg << "theta[" << j << "] not strictly increasing at " << k;
        return msg.str();
      }
  }
  if ((s.var_simplex.array() <= 0.0).any() || !s.var_simplex.allFinite()) return "variance simplex entry <= 0";
  if (std::abs(s.var_simplex.sum() - 1.0) > kSimplexTolerance) {
    msg.precision(17);
    msg << "variance simplex sums to " << s.var_simplex.sum();
    return msg.str();
  }
  for (int f = 0; f < data.factors(); ++f)
    for (int i = 0; i < data.individuals(); ++i)
      if (s.beta[f](i, 0) != 1.0) {
        msg << "anchored loading beta[" << f << "](" << i << ",0) = " << s.beta[f](i, 0);
        return msg.str();
      }
  for (int i = 0; i < data.individuals(); ++i)
    for (int t = 0; t < data.days_of(i); ++t)
      for (int j = 0; j < J; ++j) {
        const int k = data.z[i](j, t);
        const double v = s.ztilde[i](j, t);
        if (!std::isfinite(v)) {
          msg << "ztilde(" << i << "," << j << "," << t << ") not finite";
          return msg.str();
        }
        if (k == kMissing) continue;
        const auto [lo, hi] = s.interval(j, k);
        if (!(v > lo && v <= hi)) {
          msg << "ztilde(" << i << "," << j << "," << t << ") = " << v << " outside category " << k;
          return msg.str();
        }
      }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Posterior draws

struct AcceptanceCounter {
  long attempts = 0;
  long accepts = 0;
  double rate() const { return attempts == 0 ? 0.0 : static_cast<double>(accepts) / attempts; }
  void record(bool accepted) {
    ++attempts;
    if (accepted) ++accepts;
  }
};

/// Post burn-in acceptance of each Metropolis block of one chain.
struct AcceptanceReport {
  std::vector<AcceptanceCounter> thresholds;  // per metric
  AcceptanceCounter simplex;
  AcceptanceCounter simplex_collapsed;
  AcceptanceCounter factor_scale;
  AcceptanceCounter lag_weights;
  std::vector<double> threshold_steps;  // frozen proposal scales
  double simplex_scale = 0.0;
  double collapsed_scale = 0.0;
  double factor_scale_step = 0.0;
  double lag_weight_scale = 0.0;
};

struct PosteriorDraws {
  std::vector<ChainState> states;
  std::vector<int> chain;
  std::vector<long> iteration;
  std::vector<AcceptanceReport> acceptance;  // per chain
  std::string spec_hash;
  std::uint64_t seed = 0;

  std::size_t size() const { return states.size(); }
};

}  // namespace wdlm
