#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wellness_dlm/normal.hpp"
#include "wellness_dlm/rng.hpp"

namespace wdlm {

namespace detail {

// Beyond this many standard deviations the inverse-CDF route loses precision
// and a rejection sampler takes over.
inline constexpr double kTailCutoff = 5.0;

// Standard normal restricted to [a, b] with a >= kTailCutoff (Robert, 1995).
inline double sample_right_tail(double a, double b, Rng& rng) {
  if (b - a <= 1.0 / a) {
    for (;;) {
      const double x = a + (b - a) * rng.uniform();
      if (rng.uniform() <= std::exp(-0.5 * (x * x - a * a))) return x;
    }
  }
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double x = a - std::log(rng.uniform()) / rate;
    if (x > b) continue;
    const double d = x - rate;
    if (rng.uniform() <= std::exp(-0.5 * d * d)) return x;
  }
}

}  // namespace detail

/// Draw from the standard normal restricted to (a, b].
inline double sample_standard_truncated_normal(double a, double b, Rng& rng) {
  if (!(a < b)) throw std::invalid_argument("truncated normal: empty interval");
  if (a >= detail::kTailCutoff) return detail::sample_right_tail(a, b, rng);
  if (b <= -detail::kTailCutoff) return -detail::sample_right_tail(-b, -a, rng);

  const double u = rng.uniform();
  double x;
  if (a >= 0.0) {
    const double qa = normal::survival(a);
    const double qb = normal::survival(b);
    x = -normal::quantile(qb + u * (qa - qb));
  } else {
    const double pa = normal::cdf(a);
    const double pb = normal::cdf(b);
    x = normal::quantile(pa + u * (pb - pa));
  }
  return std::clamp(x, a, b);
}

/// Draw from N(mean, sd^2) restricted to (lower, upper].
inline double sample_truncated_normal(double mean, double sd, double lower, double upper,
                                      Rng& rng) {
  return mean + sd * sample_standard_truncated_normal((lower - mean) / sd, (upper - mean) / sd, rng);
}

/// Analytic mean and variance of a truncated normal.
struct TruncatedMoments {
  double mean;
  double variance;
};

inline TruncatedMoments truncated_normal_moments(double mean, double sd, double lower,
                                                 double upper) {
  const double a = (lower - mean) / sd;
  const double b = (upper - mean) / sd;
  const double log_z = normal::log_interval_probability(a, b);
  // phi(x)/Z evaluated in log space so deep tails stay finite.
  auto ratio = [&](double x) {
    if (std::isinf(x)) return 0.0;
    return std::exp(-0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi) - log_z);
  };
  auto times = [](double x, double r) { return std::isinf(x) ? 0.0 : x * r; };
  const double ra = ratio(a), rb = ratio(b);
  const double m = ra - rb;
  const double v = 1.0 + times(a, ra) - times(b, rb) - m * m;
  return {mean + sd * m, sd * sd * v};
}

}  // namespace wdlm
