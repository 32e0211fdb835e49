#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace wdlm::normal {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

inline double log_pdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + r * r / var);
}

inline double cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Upper tail 1 - cdf(x), without cancellation for large x.
inline double survival(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

inline double quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

namespace detail {

// log of the upper tail for x beyond the range where erfc underflows.
inline double log_survival_asymptotic(double x) {
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(x * std::sqrt(2.0 * std::numbers::pi)) + std::log(series);
}

inline double log_survival(double x) {
  if (x < 30.0) return std::log(survival(x));
  return log_survival_asymptotic(x);
}

}  // namespace detail

/// log P(a < X <= b) for X standard normal, a < b, either end may be infinite.
inline double log_interval_probability(double a, double b) {
  if (a >= b) return -kInf;
  // Work in whichever tail keeps the two terms away from 1.
  if (a > 0.0) {
    const double la = detail::log_survival(a);
    if (b == kInf) return la;
    const double lb = detail::log_survival(b);
    return la + std::log1p(-std::exp(lb - la));
  }
  if (b < 0.0) return log_interval_probability(-b, -a);
  return std::log(cdf(b) - cdf(a));
}

}  // namespace wdlm::normal
