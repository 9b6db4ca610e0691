#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "sfburgers/spectral.hpp"

namespace testutil {

inline sfburgers::SpectralField random_field(std::size_t n, std::mt19937_64& gen, double decay = 1.0) {
  std::normal_distribution<double> z(0.0, 1.0);
  sfburgers::SpectralField f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = z(gen) / std::pow(static_cast<double>(i + 1), decay);
  return f;
}

// Panelled 30-point Gauss-Legendre on [0,1], independent of the library's rule.
inline double integrate01(const std::function<double(double)>& f, std::size_t panels) {
  double acc = 0.0;
  const double w = 1.0 / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const double a = w * static_cast<double>(p);
    acc += boost::math::quadrature::gauss<double, 30>::integrate(f, a, a + w);
  }
  return acc;
}

inline double basis(std::size_t k, double xi) { return std::numbers::sqrt2 * std::sin(static_cast<double>(k) * std::numbers::pi * xi); }

// Direct series evaluation, deliberately not using SpectralField::evaluate.
inline double series(const sfburgers::SpectralField& x, double xi) {
  double acc = 0.0;
  for (std::size_t k = 1; k <= x.size(); ++k) acc += x[k - 1] * basis(k, xi);
  return acc;
}

inline double series_dx(const sfburgers::SpectralField& x, double xi) {
  double acc = 0.0;
  for (std::size_t k = 1; k <= x.size(); ++k) {
    const double kpi = static_cast<double>(k) * std::numbers::pi;
    acc += x[k - 1] * std::numbers::sqrt2 * kpi * std::cos(kpi * xi);
  }
  return acc;
}

inline std::size_t oracle_panels(std::size_t n) { return std::max<std::size_t>(8, n); }

/// int_0^1 x y' z by quadrature.
inline double trilinear_oracle(const sfburgers::SpectralField& x, const sfburgers::SpectralField& y,
                               const sfburgers::SpectralField& z) {
  return integrate01([&](double s) { return series(x, s) * series_dx(y, s) * series(z, s); }, oracle_panels(x.size()));
}

/// Coefficients of P_N (x x') by quadrature.
inline sfburgers::SpectralField burgers_oracle(const sfburgers::SpectralField& x) {
  const std::size_t n = x.size();
  const std::size_t panels = oracle_panels(n);
  const double w = 1.0 / static_cast<double>(panels);
  sfburgers::SpectralField out(n);
  // Tabulate u u' once per panel node, then project onto every mode.
  for (std::size_t p = 0; p < panels; ++p) {
    const double a = w * static_cast<double>(p);
    const auto& nodes = boost::math::quadrature::gauss<double, 30>::abscissa();
    const auto& weights = boost::math::quadrature::gauss<double, 30>::weights();
    auto accumulate = [&](double t, double wt) {
      const double s = a + 0.5 * w * (t + 1.0);
      const double v = series(x, s) * series_dx(x, s) * wt * 0.5 * w;
      for (std::size_t m = 1; m <= n; ++m) out[m - 1] += v * basis(m, s);
    };
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i] == 0.0) {
        accumulate(0.0, weights[i]);
      } else {
        accumulate(nodes[i], weights[i]);
        accumulate(-nodes[i], weights[i]);
      }
    }
  }
  return out;
}

inline double rel_l2(const sfburgers::SpectralField& a, const sfburgers::SpectralField& b) {
  const double d = sfburgers::norm(a - b);
  const double s = sfburgers::norm(b);
  return s == 0.0 ? d : d / s;
}

}  // namespace testutil
