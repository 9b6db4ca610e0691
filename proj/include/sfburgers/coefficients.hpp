#pragma once

// Closed family of reaction pairs (f, g) for the slow-fast Burgers system.
//
// f kinds:
//   Zero                    f = 0
//   LinearInY{kf}           f(x,y) = kf y
//   PointwiseBoundedNonlin  f(x,y) = P_N[a sin(x(.)) + b sin(y(.))] + kf y
// g kinds:
//   Zero                    g = 0
//   LinearCoupled{kg, cg}   g(x,y) = kg x - cg y
//
// Every kind is globally Lipschitz with a declared constant, and every f is
// separable, f(x,y) = f_x(x) + f_y(y). The fast drift g(x,y) + cg y does not
// depend on y, so the fast equation is linear in y with damping shift cg.

#include <algorithm>
#include <cmath>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sfburgers/quadrature.hpp"
#include "sfburgers/spectral.hpp"

namespace sfburgers {

struct Zero {};

struct LinearInY {
  double kappa_f = 1.0;
};

struct PointwiseBoundedNonlin {
  double a = 1.0;
  double kappa_f = 0.0;
  double b = 0.0;  // amplitude of sin(y); nonzero makes f nonlinear in y
};

struct LinearCoupled {
  double kappa_g = 1.0;
  double c_g = 0.0;
};

using FKind = std::variant<Zero, LinearInY, PointwiseBoundedNonlin>;
using GKind = std::variant<Zero, LinearCoupled>;

struct DissipativityDiagnostic {
  double eta = 0.0;
  bool pass = false;
};

class CoefficientPair {
 public:
  CoefficientPair() : CoefficientPair(Zero{}, Zero{}) {}

  CoefficientPair(FKind f, GKind g) : f_(f), g_(g) {
    l_f_ = std::visit(
        [](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Zero>) {
            return 0.0;
          } else if constexpr (std::is_same_v<K, LinearInY>) {
            return std::abs(k.kappa_f);
          } else {
            return std::max(std::abs(k.a), std::abs(k.kappa_f) + std::abs(k.b));
          }
        },
        f_);
    l_g_ = std::visit(
        [](const auto& k) -> double {
          if constexpr (std::is_same_v<std::decay_t<decltype(k)>, Zero>) {
            return 0.0;
          } else {
            return std::max(std::abs(k.kappa_g), std::abs(k.c_g));
          }
        },
        g_);
    if (!std::isfinite(l_f_) || !std::isfinite(l_g_))
      throw std::invalid_argument("CoefficientPair: non-finite coefficient parameter");
    validate_lipschitz_probe();
  }

  const FKind& f_kind() const noexcept { return f_; }
  const GKind& g_kind() const noexcept { return g_; }

  double lipschitz_f() const noexcept { return l_f_; }
  double lipschitz_g() const noexcept { return l_g_; }

  /// f affine in y, which makes the averaged drift available in closed form.
  bool linear_in_y() const noexcept {
    if (const auto* k = std::get_if<PointwiseBoundedNonlin>(&f_)) return k->b == 0.0;
    return true;
  }

  bool f_depends_on_y() const noexcept {
    return std::visit(
        [](const auto& k) -> bool {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Zero>) {
            return false;
          } else if constexpr (std::is_same_v<K, LinearInY>) {
            return k.kappa_f != 0.0;
          } else {
            return k.kappa_f != 0.0 || k.b != 0.0;
          }
        },
        f_);
  }

  bool f_depends_on_x() const noexcept {
    const auto* k = std::get_if<PointwiseBoundedNonlin>(&f_);
    return k != nullptr && k->a != 0.0;
  }

  /// Coefficient of y inside f (the affine part).
  double f_linear_y_coefficient() const noexcept {
    if (const auto* k = std::get_if<LinearInY>(&f_)) return k->kappa_f;
    if (const auto* k = std::get_if<PointwiseBoundedNonlin>(&f_)) return k->kappa_f;
    return 0.0;
  }

  /// c_g: g(x,y) = kappa_g x - c_g y.
  double g_damping() const noexcept {
    if (const auto* k = std::get_if<LinearCoupled>(&g_)) return k->c_g;
    return 0.0;
  }

  double g_coupling() const noexcept {
    if (const auto* k = std::get_if<LinearCoupled>(&g_)) return k->kappa_g;
    return 0.0;
  }

  /// out = f_x(x); zero unless f has a sin(x) part.
  void f_x_part_into(std::span<const double> x, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    if (const auto* k = std::get_if<PointwiseBoundedNonlin>(&f_); k && k->a != 0.0)
      nemytskii_sin_into(x, k->a, out, false);
  }

  /// out = f_y(y).
  void f_y_part_into(std::span<const double> y, std::span<double> out) const {
    const double kf = f_linear_y_coefficient();
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = kf * y[i];
    if (const auto* k = std::get_if<PointwiseBoundedNonlin>(&f_); k && k->b != 0.0)
      nemytskii_sin_into(y, k->b, out, true);
  }

  /// out = g(x,y) + c_g y = kappa_g x, the y-free part of the fast drift.
  void g_forcing_into(std::span<const double> x, std::span<double> out) const {
    const double kg = g_coupling();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = kg * x[i];
  }

  SpectralField evaluate_f(const SpectralField& x, const SpectralField& y) const {
    x.require_same_size(y, "evaluate_f");
    SpectralField out(x.size());
    SpectralField tmp(x.size());
    f_x_part_into(x.coeffs(), out.coeffs());
    f_y_part_into(y.coeffs(), tmp.coeffs());
    out += tmp;
    return out;
  }

  SpectralField evaluate_g(const SpectralField& x, const SpectralField& y) const {
    x.require_same_size(y, "evaluate_g");
    SpectralField out(x.size());
    g_forcing_into(x.coeffs(), out.coeffs());
    const double c = g_damping();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c * y[i];
    return out;
  }

  /// Human-readable key, stable across runs; used for cache keys and metadata.
  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "f=";
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Zero>) {
            os << "Zero";
          } else if constexpr (std::is_same_v<K, LinearInY>) {
            os << "LinearInY(kappa_f=" << k.kappa_f << ")";
          } else {
            os << "PointwiseBoundedNonlin(a=" << k.a << ",kappa_f=" << k.kappa_f << ",b=" << k.b << ")";
          }
        },
        f_);
    os << ";g=";
    std::visit(
        [&](const auto& k) {
          if constexpr (std::is_same_v<std::decay_t<decltype(k)>, Zero>) {
            os << "Zero";
          } else {
            os << "LinearCoupled(kappa_g=" << k.kappa_g << ",c_g=" << k.c_g << ")";
          }
        },
        g_);
    return os.str();
  }

 private:
  // out (+)= P_N[amp * sin(u(.))], by quadrature projection.
  static void nemytskii_sin_into(std::span<const double> u, double amp, std::span<double> out, bool accumulate) {
    const auto grid = ModalGrid::shared(u.size());
    thread_local std::vector<double> values;
    thread_local std::vector<double> coeffs;
    values.resize(grid->rule().size());
    coeffs.resize(u.size());
    grid->synthesize(u, values);
    for (double& v : values) v = amp * std::sin(v);
    grid->analyze(values, coeffs);
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = accumulate ? out[i] + coeffs[i] : coeffs[i];
  }

  // Pointwise maps behind each kind, for the slope probe.
  double f_pointwise(double u, double v) const {
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Zero>) {
            return 0.0;
          } else if constexpr (std::is_same_v<K, LinearInY>) {
            return k.kappa_f * v;
          } else {
            return k.a * std::sin(u) + k.b * std::sin(v) + k.kappa_f * v;
          }
        },
        f_);
  }

  double g_pointwise(double u, double v) const { return g_coupling() * u - g_damping() * v; }

  // Declared constants must dominate |phi(u1,v1) - phi(u2,v2)| / (|du| + |dv|).
  void validate_lipschitz_probe() const {
    constexpr int steps = 41;
    constexpr double lo = -6.0;
    constexpr double hi = 6.0;
    constexpr double d = 1e-3;
    for (int i = 0; i < steps; ++i) {
      const double u = lo + (hi - lo) * i / (steps - 1);
      for (int j = 0; j < steps; ++j) {
        const double v = lo + (hi - lo) * j / (steps - 1);
        const double su_f = std::abs(f_pointwise(u + d, v) - f_pointwise(u, v)) / d;
        const double sv_f = std::abs(f_pointwise(u, v + d) - f_pointwise(u, v)) / d;
        const double su_g = std::abs(g_pointwise(u + d, v) - g_pointwise(u, v)) / d;
        const double sv_g = std::abs(g_pointwise(u, v + d) - g_pointwise(u, v)) / d;
        if (std::max(su_f, sv_f) > l_f_ * (1.0 + 1e-9) + 1e-9 || std::max(su_g, sv_g) > l_g_ * (1.0 + 1e-9) + 1e-9)
          throw std::logic_error("CoefficientPair: declared Lipschitz constant violated on probe grid");
      }
    }
  }

  FKind f_;
  GKind g_;
  double l_f_ = 0.0;
  double l_g_ = 0.0;
};

/// eta = lambda_1 - L_g; the frozen fast equation is exponentially mixing iff eta > 0.
inline DissipativityDiagnostic check_dissipativity(const CoefficientPair& pair) {
  const double eta = eigenvalue(1) - pair.lipschitz_g();
  return {eta, eta > 0.0};
}

/// Structural certificate for the second-derivative and weak-dissipativity bounds.
struct SmoothnessCertificate {
  bool second_derivatives_bounded = true;
  bool weak_dissipativity = true;
  bool weak_dissipativity_uniform_in_y = true;
  std::string evidence;
};

inline SmoothnessCertificate certify_smoothness(const CoefficientPair& pair) {
  SmoothnessCertificate cert;
  std::ostringstream os;
  os << "D2_xx f bounded: " << (pair.f_depends_on_x() ? "sin has bounded derivatives of all orders" : "f affine in x")
     << "; D_y g, D2_yy g bounded: g affine in y (D2_yy g = 0)";
  if (!pair.f_depends_on_y()) {
    os << "; |<f(x,y),x>| <= L_f ||x|| <= L_f (1 + ||x||^2)";
  } else {
    cert.weak_dissipativity_uniform_in_y = false;
    os << "; |<f(x,y),x>| <= C(1 + ||x||^2 + ||y||^2): constant depends on the fast moment bound";
  }
  cert.evidence = os.str();
  return cert;
}

}  // namespace sfburgers
