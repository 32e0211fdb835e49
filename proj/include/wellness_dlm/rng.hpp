#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace wdlm {

/// Seeded random stream. Every random draw in the library goes through one of
/// these so a run is reproducible from its root seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      0x9e3779b9u};
    engine_.seed(seq);
    normal_.reset();
  }

  /// Independent stream for a child (chain, replicate, ...) of a root seed.
  static Rng split(std::uint64_t root, std::uint64_t child) { return Rng(mix(root, child)); }

  static std::uint64_t mix(std::uint64_t root, std::uint64_t child) {
    std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (child + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    double u;
    do {
      u = std::generate_canonical<double, 53>(engine_);
    } while (u <= 0.0);
    return u;
  }

  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index k = 0; k < n; ++k) v[k] = normal();
    return v;
  }

  /// Gamma with shape and unit scale.
  double gamma(double shape) {
    std::gamma_distribution<double> g(shape, 1.0);
    return g(engine_);
  }

  /// Inverse-gamma with the shape/rate convention (mean rate/(shape-1)).
  double inverse_gamma(double shape, double rate) { return rate / gamma(shape); }

  Eigen::VectorXd dirichlet(const Eigen::VectorXd& concentration) {
    Eigen::VectorXd x(concentration.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = gamma(concentration[k]);
    return x / x.sum();
  }

  int uniform_int(int lo, int hi) {
    std::uniform_int_distribution<int> d(lo, hi);
    return d(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace wdlm
