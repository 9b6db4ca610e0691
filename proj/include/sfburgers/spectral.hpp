#pragma once

// Sine eigenbasis of the Dirichlet Laplacian on (0,1).
//
// A field in H_N is stored as its coefficient vector over
// e_k(xi) = sqrt(2) sin(k pi xi), k = 1..N. Storage is 0-based: coefficient i
// belongs to mode k = i + 1. The Laplacian acts as -lambda_k on e_k with
// lambda_k = k^2 pi^2 > 0.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfburgers {

inline constexpr double pi = std::numbers::pi;

/// Positive magnitude k^2 pi^2 of the k-th Dirichlet eigenvalue.
inline double eigenvalue(std::size_t k) {
  if (k == 0) throw std::domain_error("eigenvalue: mode index must be >= 1");
  const double kk = static_cast<double>(k);
  return kk * kk * pi * pi;
}

/// e_k(xi) = sqrt(2) sin(k pi xi).
inline double basis_function(std::size_t k, double xi) {
  if (k == 0) throw std::domain_error("basis_function: mode index must be >= 1");
  return std::numbers::sqrt2 * std::sin(static_cast<double>(k) * pi * xi);
}

class SpectralField {
 public:
  SpectralField() = default;

  explicit SpectralField(std::size_t n) : coeffs_(n, 0.0) {
    if (n == 0) throw std::domain_error("SpectralField: truncation level must be >= 1");
  }

  explicit SpectralField(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
    if (coeffs_.empty()) throw std::domain_error("SpectralField: truncation level must be >= 1");
  }

  /// e_k embedded in H_n.
  static SpectralField unit(std::size_t n, std::size_t k) {
    if (k == 0 || k > n) throw std::domain_error("SpectralField::unit: mode out of range");
    SpectralField out(n);
    out.coeffs_[k - 1] = 1.0;
    return out;
  }

  std::size_t size() const noexcept { return coeffs_.size(); }

  double& operator[](std::size_t i) { return coeffs_[i]; }
  double operator[](std::size_t i) const { return coeffs_[i]; }

  /// Coefficient of e_k, 1-based.
  double mode(std::size_t k) const {
    if (k == 0 || k > size()) throw std::domain_error("SpectralField::mode: mode out of range");
    return coeffs_[k - 1];
  }

  std::span<double> coeffs() noexcept { return coeffs_; }
  std::span<const double> coeffs() const noexcept { return coeffs_; }
  const std::vector<double>& vector() const noexcept { return coeffs_; }

  bool all_finite() const noexcept {
    for (double c : coeffs_)
      if (!std::isfinite(c)) return false;
    return true;
  }

  /// Value of the truncated series at xi.
  double evaluate(double xi) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < size(); ++i) acc += coeffs_[i] * basis_function(i + 1, xi);
    return acc;
  }

  /// Value of d/dxi of the truncated series at xi.
  double evaluate_derivative(double xi) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      const double kpi = static_cast<double>(i + 1) * pi;
      acc += coeffs_[i] * std::numbers::sqrt2 * kpi * std::cos(kpi * xi);
    }
    return acc;
  }

  SpectralField& operator+=(const SpectralField& o) {
    require_same_size(o, "operator+=");
    for (std::size_t i = 0; i < size(); ++i) coeffs_[i] += o.coeffs_[i];
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    require_same_size(o, "operator-=");
    for (std::size_t i = 0; i < size(); ++i) coeffs_[i] -= o.coeffs_[i];
    return *this;
  }
  SpectralField& operator*=(double s) noexcept {
    for (double& c : coeffs_) c *= s;
    return *this;
  }

  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }
  friend SpectralField operator*(SpectralField a, double s) { return a *= s; }

  friend bool operator==(const SpectralField&, const SpectralField&) = default;

  void require_same_size(const SpectralField& o, const char* where) const {
    if (o.size() != size())
      throw std::domain_error(std::string(where) + ": truncation levels differ (" +
                              std::to_string(size()) + " vs " + std::to_string(o.size()) + ")");
  }

 private:
  std::vector<double> coeffs_;
};

/// L^2 inner product (Parseval).
inline double inner(const SpectralField& a, const SpectralField& b) {
  a.require_same_size(b, "inner");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm(const SpectralField& x) { return std::sqrt(inner(x, x)); }

/// (sum a_k^2 lambda_k^s)^{1/2}; s = 0 is the L^2 norm, negative s gives dual norms.
inline double sobolev_norm(const SpectralField& x, double s) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * x[i] * std::pow(eigenvalue(i + 1), s);
  return std::sqrt(acc);
}

/// Truncate (m < N) or zero-pad (m > N).
inline SpectralField project(const SpectralField& x, std::size_t m) {
  if (m == 0) throw std::domain_error("project: target truncation level must be >= 1");
  SpectralField out(m);
  const std::size_t n = std::min(m, x.size());
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i];
  return out;
}

/// Dirichlet Laplacian on H_N, optionally shifted: rate(k) = lambda_k + shift.
///
/// The shift absorbs a linear damping term -c y into the propagator so that
/// linear fast drifts are integrated exactly.
class SpectralOperator {
 public:
  explicit SpectralOperator(std::size_t n, double shift = 0.0) : shift_(shift), eig_(n) {
    if (n == 0) throw std::domain_error("SpectralOperator: truncation level must be >= 1");
    for (std::size_t i = 0; i < n; ++i) eig_[i] = sfburgers::eigenvalue(i + 1);
    if (eig_[0] + shift_ <= 0.0)
      throw std::domain_error("SpectralOperator: shifted rates must stay positive");
  }

  std::size_t size() const noexcept { return eig_.size(); }
  double shift() const noexcept { return shift_; }

  /// Unshifted magnitude lambda_k, 1-based.
  double eigenvalue(std::size_t k) const {
    if (k == 0 || k > size()) throw std::domain_error("SpectralOperator::eigenvalue: mode out of range");
    return eig_[k - 1];
  }

  /// lambda_{i+1} + shift, 0-based.
  double rate(std::size_t i) const { return eig_[i] + shift_; }

  SpectralOperator shifted(double extra) const { return SpectralOperator(size(), shift_ + extra); }

  /// e^{tA} x, mode-wise e^{-rate_k t}.
  SpectralField apply_semigroup(const SpectralField& x, double t) const {
    if (t < 0.0) throw std::domain_error("apply_semigroup: time must be nonnegative");
    if (x.size() != size()) throw std::domain_error("apply_semigroup: truncation levels differ");
    SpectralField out(x);
    for (std::size_t i = 0; i < size(); ++i) out[i] *= std::exp(-rate(i) * t);
    return out;
  }

  /// Mode-wise decay factors e^{-rate_k t}.
  std::vector<double> decay_factors(double t) const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = std::exp(-rate(i) * t);
    return out;
  }

  /// Mode-wise int_0^t e^{-rate_k s} ds = (1 - e^{-rate_k t}) / rate_k.
  std::vector<double> integrated_decay(double t) const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = -std::expm1(-rate(i) * t) / rate(i);
    return out;
  }

 private:
  double shift_;
  std::vector<double> eig_;
};

inline SpectralField apply_semigroup(const SpectralField& x, double t) {
  return SpectralOperator(x.size()).apply_semigroup(x, t);
}

namespace detail {
// Coupling int_0^1 e_i (e_j)' e_l dxi = (j pi / sqrt 2) [ [|i-l| = j] - [i+l = j] ].
inline constexpr double coupling_scale = pi / std::numbers::sqrt2;
}  // namespace detail

/// b(x,y,z) = int_0^1 x (d/dxi y) z dxi, exact for truncated sine series. O(N^2).
inline double trilinear_b(const SpectralField& x, const SpectralField& y, const SpectralField& z) {
  x.require_same_size(y, "trilinear_b");
  x.require_same_size(z, "trilinear_b");
  const std::size_t n = x.size();
  double acc = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const double xi = x[i - 1];
    if (xi == 0.0) continue;
    double row = 0.0;
    for (std::size_t l = 1; l <= n; ++l) {
      const double zl = z[l - 1];
      if (zl == 0.0) continue;
      const std::size_t diff = i > l ? i - l : l - i;
      const std::size_t sum = i + l;
      double c = 0.0;
      if (diff >= 1) c += static_cast<double>(diff) * y[diff - 1];
      if (sum <= n) c -= static_cast<double>(sum) * y[sum - 1];
      row += zl * c;
    }
    acc += xi * row;
  }
  return detail::coupling_scale * acc;
}

/// out = P_N (x d/dxi x), written into a preallocated span of length N.
inline void burgers_nonlinearity_into(std::span<const double> x, std::span<double> out) {
  const std::size_t n = x.size();
  for (std::size_t m = 1; m <= n; ++m) {
    double acc = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      const double xi = x[i - 1];
      const std::size_t diff = i > m ? i - m : m - i;
      const std::size_t sum = i + m;
      double c = 0.0;
      if (diff >= 1) c += static_cast<double>(diff) * x[diff - 1];
      if (sum <= n) c -= static_cast<double>(sum) * x[sum - 1];
      acc += xi * c;
    }
    out[m - 1] = detail::coupling_scale * acc;
  }
}

/// P_N B(x) with B(x) = x d/dxi x.
inline SpectralField burgers_nonlinearity(const SpectralField& x) {
  SpectralField out(x.size());
  burgers_nonlinearity_into(x.coeffs(), out.coeffs());
  return out;
}

}  // namespace sfburgers
