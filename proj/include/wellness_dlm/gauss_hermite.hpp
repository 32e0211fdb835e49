#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

namespace wdlm {

/// Nodes and weights for integrals of the form int f(x) exp(-x^2) dx.
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

// Golub-Welsch: eigen-decomposition of the Hermite Jacobi matrix.
inline GaussHermiteRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: need at least one node");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double off = std::sqrt(0.5 * k);
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  GaussHermiteRule rule;
  rule.nodes = eig.eigenvalues();
  rule.weights = std::sqrt(std::numbers::pi) * eig.eigenvectors().row(0).array().square().transpose();
  return rule;
}

/// E[f(X)] for X ~ N(mean, sd^2).
template <class F>
double gauss_hermite_expectation(const GaussHermiteRule& rule, double mean, double sd, F&& f) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < rule.nodes.size(); ++k)
    total += rule.weights[k] * f(mean + std::numbers::sqrt2 * sd * rule.nodes[k]);
  return total / std::sqrt(std::numbers::pi);
}

}  // namespace wdlm
