#pragma once

// Composite Gauss-Legendre quadrature on [0,1] and a modal grid that moves
// fields between sine coefficients and point values at the quadrature nodes.

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sfburgers/spectral.hpp"

namespace sfburgers {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const noexcept { return nodes.size(); }

  template <class F>
  double integrate(F&& f) const {
    double acc = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) acc += weights[q] * f(nodes[q]);
    return acc;
  }
};

namespace detail {
// P_n(z) and P_n'(z) by the three-term recurrence, n >= 1.
inline std::pair<double, double> legendre_with_derivative(std::size_t n, double z) {
  double p0 = 1.0;
  double p1 = z;
  for (std::size_t k = 2; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    const double p2 = ((2.0 * kk - 1.0) * z * p1 - (kk - 1.0) * p0) / kk;
    p0 = p1;
    p1 = p2;
  }
  const double dp = static_cast<double>(n) * (z * p1 - p0) / (z * z - 1.0);
  return {p1, dp};
}
}  // namespace detail

/// n-point Gauss-Legendre rule on [-1,1] (Newton iteration on P_n).
inline QuadratureRule gauss_legendre(std::size_t n) {
  if (n == 0) throw std::domain_error("gauss_legendre: need at least one node");
  QuadratureRule rule;
  if (n == 1) {
    rule.nodes = {0.0};
    rule.weights = {2.0};
    return rule;
  }
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double z = std::cos(pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    for (int iter = 0; iter < 100; ++iter) {
      const auto [p, dp] = detail::legendre_with_derivative(n, z);
      const double dz = p / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double dp = detail::legendre_with_derivative(n, z).second;
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

/// `panels` equal panels on [0,1], each with an n-point Gauss-Legendre rule.
inline QuadratureRule composite_gauss_legendre(std::size_t panels, std::size_t nodes_per_panel) {
  if (panels == 0) throw std::domain_error("composite_gauss_legendre: need at least one panel");
  const QuadratureRule base = gauss_legendre(nodes_per_panel);
  QuadratureRule rule;
  rule.nodes.reserve(panels * nodes_per_panel);
  rule.weights.reserve(panels * nodes_per_panel);
  const double width = 1.0 / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const double left = width * static_cast<double>(p);
    for (std::size_t q = 0; q < base.size(); ++q) {
      rule.nodes.push_back(left + 0.5 * width * (base.nodes[q] + 1.0));
      rule.weights.push_back(0.5 * width * base.weights[q]);
    }
  }
  return rule;
}

/// Panel count that keeps 16-node panels spectrally accurate for products of
/// three sine series of degree n (highest frequency 3n half-waves).
inline std::size_t panels_for_degree(std::size_t n) {
  const std::size_t needed = (3 * n + 3) / 4;
  return needed < 8 ? 8 : needed;
}

/// Basis values e_k(xi_q) on a composite Gauss-Legendre rule.
class ModalGrid {
 public:
  ModalGrid(std::size_t n, QuadratureRule rule) : n_(n), rule_(std::move(rule)) {
    if (n == 0) throw std::domain_error("ModalGrid: truncation level must be >= 1");
    basis_.resize(rule_.size() * n_);
    for (std::size_t q = 0; q < rule_.size(); ++q)
      for (std::size_t k = 0; k < n_; ++k) basis_[q * n_ + k] = basis_function(k + 1, rule_.nodes[q]);
  }

  std::size_t modes() const noexcept { return n_; }
  const QuadratureRule& rule() const noexcept { return rule_; }

  /// Point values of x at the nodes.
  void synthesize(std::span<const double> coeffs, std::span<double> values) const {
    for (std::size_t q = 0; q < rule_.size(); ++q) {
      const double* row = &basis_[q * n_];
      double acc = 0.0;
      for (std::size_t k = 0; k < n_; ++k) acc += coeffs[k] * row[k];
      values[q] = acc;
    }
  }

  /// Galerkin projection of point values onto H_N.
  void analyze(std::span<const double> values, std::span<double> coeffs) const {
    for (std::size_t k = 0; k < n_; ++k) coeffs[k] = 0.0;
    for (std::size_t q = 0; q < rule_.size(); ++q) {
      const double wv = rule_.weights[q] * values[q];
      const double* row = &basis_[q * n_];
      for (std::size_t k = 0; k < n_; ++k) coeffs[k] += wv * row[k];
    }
  }

  /// Shared grid with panels_for_degree(n) panels of 16 nodes.
  static std::shared_ptr<const ModalGrid> shared(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, std::shared_ptr<const ModalGrid>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[n];
    if (!slot) slot = std::make_shared<const ModalGrid>(n, composite_gauss_legendre(panels_for_degree(n), 16));
    return slot;
  }

 private:
  std::size_t n_;
  QuadratureRule rule_;
  std::vector<double> basis_;
};

}  // namespace sfburgers
