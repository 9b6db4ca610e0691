#pragma once

// Exponential-Euler integration of the Galerkin slow-fast Burgers system,
// the frozen fast equation, the averaged equation and the Khasminskii
// auxiliary pair.
//
// Slow macro step h:
//   X <- e^{hA} X + phi(h) [B(X) + f_x(X)] + S + W_A
// where phi(h) = int_0^h e^{sA} ds mode-wise, W_A is the exact stochastic
// convolution of Q1, and S = sum_j e^{(h - s_{j+1})A} phi(h_f) f_y(Y_j) collects
// f_y along the fast micro path of the same macro step. X is frozen for the
// fast sub-cycle. Fast micro step h_f = h / ceil(h / (c eps)):
//   Y <- e^{-(lambda + c_g) h_f/eps} Y + (1 - e^{-(lambda + c_g) h_f/eps}) / (lambda + c_g) kappa_g X + W_A^eps
// which is exact for the linear fast drift given the frozen X.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "sfburgers/coefficients.hpp"
#include "sfburgers/noise.hpp"
#include "sfburgers/spectral.hpp"

namespace sfburgers {

struct StepperConfig {
  double h = 1e-2;                   // slow macro step
  double fast_substep_ratio = 0.5;   // fast micro step <= c * eps
  double blowup_threshold = 1e6;     // L^2 guard
  double T = 1.0;                    // horizon
  std::size_t slow_noise_substeps = 1;
  std::size_t fast_noise_substeps = 1;
  bool burgers = true;               // include B(X)

  void validate() const {
    if (!(h > 0.0)) throw std::domain_error("StepperConfig: h must be > 0");
    if (!(fast_substep_ratio > 0.0)) throw std::domain_error("StepperConfig: fast_substep_ratio must be > 0");
    if (!(blowup_threshold > 0.0)) throw std::domain_error("StepperConfig: blowup_threshold must be > 0");
    if (!(T >= 0.0)) throw std::domain_error("StepperConfig: horizon must be >= 0");
    if (slow_noise_substeps == 0 || fast_noise_substeps == 0)
      throw std::domain_error("StepperConfig: noise substeps must be >= 1");
  }

  /// Number of macro steps in [0, T]; T must be a multiple of h.
  std::size_t steps() const { return steps_for(T); }

  std::size_t steps_for(double horizon) const {
    validate();
    const double ratio = horizon / h;
    const auto n = static_cast<std::size_t>(std::llround(ratio));
    if (std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, ratio))
      throw std::domain_error("StepperConfig: horizon must be a multiple of h");
    return n;
  }
};

struct SlowFastState {
  SpectralField X;
  SpectralField Y;
  double t = 0.0;
  double eps = 1.0;
  std::uint64_t step = 0;  // macro step index; selects the noise draws
};

struct BlowUp {
  double time = 0.0;
  double norm_x = 0.0;
  double norm_y = 0.0;
};

/// Independent driving streams for the slow (Q1) and fast (Q2) noise.
struct NoisePair {
  RngStream slow;
  RngStream fast;

  static NoisePair for_replica(std::uint64_t seed, std::uint64_t replica, bool antithetic = false) {
    return {RngStream(seed, replica, StreamRole::Q1, antithetic), RngStream(seed, replica, StreamRole::Q2, antithetic)};
  }
};

/// floor(s / delta) * delta, the block start preceding s.
inline double block_start(double s, double delta) {
  if (!(delta > 0.0)) throw std::domain_error("block_start: delta must be > 0");
  return std::floor(s / delta) * delta;
}

struct AuxiliaryState {
  SpectralField Xhat;
  SpectralField Yhat;
  double delta = 0.0;
  SpectralField frozen_X;  // X^eps at the start of the current block
};

namespace detail {
inline bool escaped(std::span<const double> v, double threshold, double& norm_out) {
  double acc = 0.0;
  for (double c : v) acc += c * c;
  norm_out = std::sqrt(acc);
  return !(norm_out <= threshold);
}
}  // namespace detail

/// One-step map of the coupled system at fixed eps.
class SlowFastStepper {
 public:
  SlowFastStepper(const CoefficientPair& pair, const NoiseSpec& q1, const NoiseSpec& q2, const StepperConfig& cfg,
                  double eps)
      : pair_(pair),
        cfg_(cfg),
        eps_(eps),
        n_(q1.size()),
        slow_op_(q1.size()),
        fast_op_(q1.size(), pair.g_damping()),
        slow_conv_(q1, slow_op_, cfg.h, 1.0, cfg.slow_noise_substeps),
        fast_conv_(q2, fast_op_, cfg.h / micro_count(cfg, eps), eps, cfg.fast_noise_substeps) {
    cfg.validate();
    if (!(eps > 0.0)) throw std::domain_error("SlowFastStepper: eps must be > 0");
    if (q2.size() != n_) throw std::domain_error("SlowFastStepper: Q1 and Q2 truncation levels differ");
    micro_ = micro_count(cfg, eps);
    h_fast_ = cfg.h / static_cast<double>(micro_);
    slow_decay_ = slow_op_.decay_factors(cfg.h);
    slow_phi_ = slow_op_.integrated_decay(cfg.h);
    micro_slow_decay_ = slow_op_.decay_factors(h_fast_);
    micro_slow_phi_ = slow_op_.integrated_decay(h_fast_);
    fast_decay_ = fast_op_.decay_factors(h_fast_ / eps);
    // (1/eps) int_0^{h_f} e^{-r s/eps} ds = (1 - e^{-r h_f/eps}) / r
    fast_phi_ = fast_op_.integrated_decay(h_fast_ / eps);
    f_uses_y_ = pair.f_depends_on_y();
    f_uses_x_ = pair.f_depends_on_x();
    g_active_ = pair.g_coupling() != 0.0;
    drift_.resize(n_);
    tmp_.resize(n_);
    forcing_.resize(n_);
    acc_.resize(n_);
  }

  static std::size_t micro_count(const StepperConfig& cfg, double eps) {
    const double target = cfg.fast_substep_ratio * eps;
    if (!(target > 0.0)) throw std::domain_error("SlowFastStepper: fast micro step must be > 0");
    const double ratio = cfg.h / target;
    auto m = static_cast<std::size_t>(std::ceil(ratio * (1.0 - 1e-12)));
    return m == 0 ? 1 : m;
  }

  std::size_t micro_steps() const noexcept { return micro_; }
  double fast_step() const noexcept { return h_fast_; }
  double eps() const noexcept { return eps_; }
  const StepperConfig& config() const noexcept { return cfg_; }

  /// Advance one macro step; the state's step index selects the noise draws.
  std::optional<BlowUp> step(SlowFastState& s, const NoisePair& rng) {
    if (s.X.size() != n_ || s.Y.size() != n_) throw std::domain_error("step_slow_fast: state truncation level mismatch");
    advance(s.X.coeffs(), s.X.coeffs(), s.Y.coeffs(), s.step, rng);
    s.t = static_cast<double>(++s.step) * cfg_.h;
    return guard(s.X.coeffs(), s.Y.coeffs(), s.t);
  }

  /// Advance the auxiliary pair over the macro step that starts at `driving`.
  /// Must be called with the driving state before it is stepped.
  std::optional<BlowUp> step_auxiliary(AuxiliaryState& aux, const SlowFastState& driving, const NoisePair& rng) {
    if (!(aux.delta > 0.0)) throw std::domain_error("step_auxiliary: delta must be > 0");
    if (driving.X.size() != n_ || driving.Y.size() != n_ || aux.Xhat.size() != n_)
      throw std::invalid_argument("step_auxiliary: missing or mismatched driving data");
    const std::size_t block = block_steps(aux.delta);
    if (driving.step % block == 0 || aux.frozen_X.size() != n_) {
      aux.Yhat = driving.Y;
      aux.frozen_X = driving.X;
    }
    advance(aux.Xhat.coeffs(), aux.frozen_X.coeffs(), aux.Yhat.coeffs(), driving.step, rng);
    return guard(aux.Xhat.coeffs(), aux.Yhat.coeffs(), static_cast<double>(driving.step + 1) * cfg_.h);
  }

  /// Macro steps per Khasminskii block; delta is rounded to a whole number of steps.
  std::size_t block_steps(double delta) const {
    const auto b = static_cast<std::size_t>(std::llround(delta / cfg_.h));
    if (b == 0) throw std::domain_error("step_auxiliary: delta must be at least one macro step");
    return b;
  }

 private:
  // x_out <- e^{hA} x_lin + phi(h)[B(x_drive) + f_x(x_drive)] + S(y path) + W_A,
  // with y sub-cycled under the forcing g(x_drive, .). x_out may alias x_lin.
  void advance(std::span<double> x_lin, std::span<const double> x_drive, std::span<double> y, std::uint64_t macro,
               const NoisePair& rng) {
    // Slow drift at the frozen input.
    if (cfg_.burgers) {
      burgers_nonlinearity_into(x_drive, drift_);
    } else {
      std::fill(drift_.begin(), drift_.end(), 0.0);
    }
    if (f_uses_x_) {
      pair_.f_x_part_into(x_drive, tmp_);
      for (std::size_t i = 0; i < n_; ++i) drift_[i] += tmp_[i];
    }
    if (g_active_) {
      pair_.g_forcing_into(x_drive, forcing_);
    } else {
      std::fill(forcing_.begin(), forcing_.end(), 0.0);
    }

    // Fast sub-cycle, accumulating the y-dependent part of f.
    std::fill(acc_.begin(), acc_.end(), 0.0);
    const std::uint64_t first_micro = macro * micro_;
    for (std::size_t j = 0; j < micro_; ++j) {
      if (f_uses_y_) {
        pair_.f_y_part_into(y, tmp_);
        for (std::size_t i = 0; i < n_; ++i) acc_[i] = micro_slow_decay_[i] * acc_[i] + micro_slow_phi_[i] * tmp_[i];
      }
      for (std::size_t i = 0; i < n_; ++i) y[i] = fast_decay_[i] * y[i] + fast_phi_[i] * forcing_[i];
      fast_conv_.add_step(rng.fast, first_micro + j, y);
    }

    for (std::size_t i = 0; i < n_; ++i) x_lin[i] = slow_decay_[i] * x_lin[i] + slow_phi_[i] * drift_[i] + acc_[i];
    slow_conv_.add_step(rng.slow, macro, x_lin);
  }

  std::optional<BlowUp> guard(std::span<const double> x, std::span<const double> y, double t) const {
    BlowUp b{t, 0.0, 0.0};
    const bool bx = detail::escaped(x, cfg_.blowup_threshold, b.norm_x);
    const bool by = detail::escaped(y, cfg_.blowup_threshold, b.norm_y);
    if (bx || by) return b;
    return std::nullopt;
  }

  CoefficientPair pair_;
  StepperConfig cfg_;
  double eps_;
  std::size_t n_;
  SpectralOperator slow_op_;
  SpectralOperator fast_op_;
  OuConvolutionSampler slow_conv_;
  OuConvolutionSampler fast_conv_;
  std::size_t micro_ = 1;
  double h_fast_ = 0.0;
  std::vector<double> slow_decay_, slow_phi_, micro_slow_decay_, micro_slow_phi_, fast_decay_, fast_phi_;
  bool f_uses_y_ = false;
  bool f_uses_x_ = false;
  bool g_active_ = false;
  std::vector<double> drift_, tmp_, forcing_, acc_;
};

/// Convenience wrapper: one macro step of the coupled system.
inline std::optional<BlowUp> step_slow_fast(SlowFastState& state, const CoefficientPair& pair, const NoiseSpec& q1,
                                            const NoiseSpec& q2, const StepperConfig& cfg, const NoisePair& rng) {
  SlowFastStepper stepper(pair, q1, q2, cfg, state.eps);
  return stepper.step(state, rng);
}

struct Snapshot {
  double t = 0.0;
  SpectralField X;
  SpectralField Y;  // empty for single-component trajectories
};

struct Trajectory {
  std::vector<Snapshot> snapshots;
  std::optional<BlowUp> failure;

  bool ok() const noexcept { return !failure.has_value(); }
  const Snapshot& back() const { return snapshots.back(); }
};

/// Snapshots every `record_stride` macro steps, always including t = 0 and t = T.
inline Trajectory simulate_slow_fast(const SpectralField& x0, const SpectralField& y0, double eps,
                                     const CoefficientPair& pair, const NoiseSpec& q1, const NoiseSpec& q2,
                                     const StepperConfig& cfg, const NoisePair& rng, std::size_t record_stride = 1) {
  if (record_stride == 0) throw std::domain_error("simulate_slow_fast: record_stride must be >= 1");
  SlowFastStepper stepper(pair, q1, q2, cfg, eps);
  SlowFastState s{x0, y0, 0.0, eps, 0};
  Trajectory out;
  out.snapshots.push_back({0.0, s.X, s.Y});
  const std::size_t steps = cfg.steps();
  for (std::size_t n = 0; n < steps; ++n) {
    if (auto fail = stepper.step(s, rng)) {
      out.failure = fail;
      out.snapshots.push_back({s.t, s.X, s.Y});
      return out;
    }
    if (s.step % record_stride == 0 || s.step == steps) out.snapshots.push_back({s.t, s.X, s.Y});
  }
  return out;
}

/// Exact-in-y stepper for the frozen equation dY = [AY + g(x, Y)] dt + dW^{Q2}.
class FrozenStepper {
 public:
  FrozenStepper(const CoefficientPair& pair, const NoiseSpec& q2, const StepperConfig& cfg, const SpectralField& x)
      : n_(q2.size()),
        op_(q2.size(), pair.g_damping()),
        conv_(q2, op_, cfg.h, 1.0, cfg.fast_noise_substeps),
        decay_(op_.decay_factors(cfg.h)),
        phi_(op_.integrated_decay(cfg.h)),
        forcing_(q2.size()),
        threshold_(cfg.blowup_threshold),
        h_(cfg.h) {
    cfg.validate();
    if (x.size() != n_) throw std::domain_error("FrozenStepper: x and Q2 truncation levels differ");
    pair.g_forcing_into(x.coeffs(), forcing_);
  }

  /// Advance Y over step `step` of length h.
  std::optional<BlowUp> step(std::span<double> y, std::uint64_t step, const RngStream& rng) const {
    for (std::size_t i = 0; i < n_; ++i) y[i] = decay_[i] * y[i] + phi_[i] * forcing_[i];
    conv_.add_step(rng, step, y);
    BlowUp b{static_cast<double>(step + 1) * h_, 0.0, 0.0};
    if (detail::escaped(y, threshold_, b.norm_y)) return b;
    return std::nullopt;
  }

  double h() const noexcept { return h_; }

 private:
  std::size_t n_;
  SpectralOperator op_;
  OuConvolutionSampler conv_;
  std::vector<double> decay_, phi_, forcing_;
  double threshold_;
  double h_;
};

/// Frozen-equation trajectory over [0, cfg.T] in its own time (no 1/eps).
inline Trajectory simulate_frozen(const SpectralField& x, const SpectralField& y0, const CoefficientPair& pair,
                                  const NoiseSpec& q2, const StepperConfig& cfg, const RngStream& rng,
                                  std::size_t record_stride = 1) {
  if (record_stride == 0) throw std::domain_error("simulate_frozen: record_stride must be >= 1");
  FrozenStepper stepper(pair, q2, cfg, x);
  SpectralField y = y0;
  Trajectory out;
  out.snapshots.push_back({0.0, y, {}});
  const std::size_t steps = cfg.steps();
  for (std::size_t n = 0; n < steps; ++n) {
    const double t = static_cast<double>(n + 1) * cfg.h;
    if (auto fail = stepper.step(y.coeffs(), n, rng)) {
      out.failure = fail;
      out.snapshots.push_back({t, y, {}});
      return out;
    }
    if ((n + 1) % record_stride == 0 || n + 1 == steps) out.snapshots.push_back({t, y, {}});
  }
  return out;
}

/// Averaged drift provider: x -> fbar(x).
using FbarProvider = std::function<SpectralField(const SpectralField&)>;

/// Exponential Euler for dXbar = [A Xbar + B(Xbar) + fbar(Xbar)] dt + dW^{Q1}.
class AveragedStepper {
 public:
  AveragedStepper(const NoiseSpec& q1, const StepperConfig& cfg)
      : cfg_(cfg),
        n_(q1.size()),
        op_(q1.size()),
        conv_(q1, op_, cfg.h, 1.0, cfg.slow_noise_substeps),
        decay_(op_.decay_factors(cfg.h)),
        phi_(op_.integrated_decay(cfg.h)),
        drift_(q1.size()) {
    cfg.validate();
  }

  std::optional<BlowUp> step(SpectralField& x, std::uint64_t step, const FbarProvider& fbar, const RngStream& rng) {
    if (x.size() != n_) throw std::domain_error("AveragedStepper: truncation level mismatch");
    if (cfg_.burgers) {
      burgers_nonlinearity_into(x.coeffs(), drift_);
    } else {
      std::fill(drift_.begin(), drift_.end(), 0.0);
    }
    const SpectralField fb = fbar(x);
    for (std::size_t i = 0; i < n_; ++i) x[i] = decay_[i] * x[i] + phi_[i] * (drift_[i] + fb[i]);
    conv_.add_step(rng, step, x.coeffs());
    BlowUp b{static_cast<double>(step + 1) * cfg_.h, 0.0, 0.0};
    if (detail::escaped(x.coeffs(), cfg_.blowup_threshold, b.norm_x)) return b;
    return std::nullopt;
  }

 private:
  StepperConfig cfg_;
  std::size_t n_;
  SpectralOperator op_;
  OuConvolutionSampler conv_;
  std::vector<double> decay_, phi_, drift_;
};

inline Trajectory solve_averaged(const SpectralField& x0, const FbarProvider& fbar, const NoiseSpec& q1,
                                 const StepperConfig& cfg, const RngStream& rng, std::size_t record_stride = 1) {
  if (record_stride == 0) throw std::domain_error("solve_averaged: record_stride must be >= 1");
  AveragedStepper stepper(q1, cfg);
  SpectralField x = x0;
  Trajectory out;
  out.snapshots.push_back({0.0, x, {}});
  const std::size_t steps = cfg.steps();
  for (std::size_t n = 0; n < steps; ++n) {
    const double t = static_cast<double>(n + 1) * cfg.h;
    if (auto fail = stepper.step(x, n, fbar, rng)) {
      out.failure = fail;
      out.snapshots.push_back({t, x, {}});
      return out;
    }
    if ((n + 1) % record_stride == 0 || n + 1 == steps) out.snapshots.push_back({t, x, {}});
  }
  return out;
}

/// CSV: t, X_1..X_N, Y_1..Y_N at 17 significant digits.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  if (traj.snapshots.empty()) return;
  const std::size_t nx = traj.snapshots.front().X.size();
  const std::size_t ny = traj.snapshots.front().Y.size();
  os << "t";
  for (std::size_t k = 1; k <= nx; ++k) os << ",X" << k;
  for (std::size_t k = 1; k <= ny; ++k) os << ",Y" << k;
  os << '\n';
  const auto old = os.precision(17);
  for (const auto& s : traj.snapshots) {
    os << s.t;
    for (std::size_t i = 0; i < s.X.size(); ++i) os << ',' << s.X[i];
    for (std::size_t i = 0; i < s.Y.size(); ++i) os << ',' << s.Y[i];
    os << '\n';
  }
  os.precision(old);
}

}  // namespace sfburgers
