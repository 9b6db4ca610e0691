#pragma once

// Invariant-measure sampling for the frozen fast equation and estimation of
// the averaged drift fbar(x) = int f(x, y) mu^x(dy).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sfburgers/coefficients.hpp"
#include "sfburgers/dynamics.hpp"
#include "sfburgers/noise.hpp"
#include "sfburgers/spectral.hpp"

namespace sfburgers {

class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mean of mu^x for the linear frozen equation: m_k = kappa_g x_k / (lambda_k + c_g).
inline SpectralField stationary_mean(const CoefficientPair& pair, const SpectralField& x) {
  SpectralOperator op(x.size(), pair.g_damping());
  SpectralField m(x.size());
  pair.g_forcing_into(x.coeffs(), m.coeffs());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] /= op.rate(i);
  return m;
}

/// Per-mode variance of mu^x: alpha_k / (2 (lambda_k + c_g)).
inline std::vector<double> stationary_variance(const CoefficientPair& pair, const NoiseSpec& q2) {
  SpectralOperator op(q2.size(), pair.g_damping());
  std::vector<double> v(q2.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = q2.alpha(i) / (2.0 * op.rate(i));
  return v;
}

/// Closed-form fbar, available when f is affine in y (or y-free).
inline bool analytic_fbar_available(const CoefficientPair& pair) { return pair.linear_in_y() || !pair.f_depends_on_y(); }

inline SpectralField analytic_fbar(const CoefficientPair& pair, const SpectralField& x) {
  if (!pair.f_depends_on_y()) return pair.evaluate_f(x, SpectralField(x.size()));
  if (!pair.linear_in_y()) throw ConfigurationError("analytic fbar requires f affine in y: " + pair.describe());
  return pair.evaluate_f(x, stationary_mean(pair, x));
}

struct TimeAverageSettings {
  double burn_in = 0.0;
  double horizon = 0.0;   // sampling window after burn-in
  double thinning = 0.0;  // time between retained samples
  std::size_t batches = 20;
};

/// Defaults 5/eta, 50/eta, 1/(10 eta) from the mixing rate.
inline TimeAverageSettings default_time_average(const CoefficientPair& pair) {
  const auto diss = check_dissipativity(pair);
  if (!diss.pass) throw ConfigurationError("time averaging requires eta = lambda_1 - L_g > 0");
  return {5.0 / diss.eta, 50.0 / diss.eta, 1.0 / (10.0 * diss.eta), 20};
}

struct AnalyticMode {};
using FbarMode = std::variant<AnalyticMode, TimeAverageSettings>;

struct FbarEstimate {
  SpectralField value;
  double std_error = 0.0;              // L^2 norm of the per-mode standard errors
  std::vector<double> mode_stderr;  // batch-means standard error per mode
};

class FbarEstimator {
 public:
  FbarEstimator(FbarMode mode, CoefficientPair pair, NoiseSpec q2, StepperConfig cfg)
      : mode_(std::move(mode)), pair_(std::move(pair)), q2_(std::move(q2)), cfg_(cfg) {
    cfg_.validate();
    if (std::holds_alternative<AnalyticMode>(mode_)) {
      if (!analytic_fbar_available(pair_))
        throw ConfigurationError("Analytic fbar requested for a coefficient pair nonlinear in y: " + pair_.describe());
    } else {
      const auto& s = std::get<TimeAverageSettings>(mode_);
      const auto diss = check_dissipativity(pair_);
      if (!diss.pass) throw ConfigurationError("TimeAverage fbar requires eta = lambda_1 - L_g > 0");
      if (s.burn_in < 5.0 / diss.eta * (1.0 - 1e-12))
        throw ConfigurationError("TimeAverage burn_in must be >= 5/eta = " + std::to_string(5.0 / diss.eta));
      if (!(s.horizon > 0.0) || !(s.thinning > 0.0) || s.batches < 2)
        throw ConfigurationError("TimeAverage needs horizon > 0, thinning > 0 and >= 2 batches");
    }
  }

  const FbarMode& mode() const noexcept { return mode_; }
  const CoefficientPair& pair() const noexcept { return pair_; }
  const NoiseSpec& q2() const noexcept { return q2_; }
  const StepperConfig& stepper() const noexcept { return cfg_; }

  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << pair_.describe() << '|' << q2_.describe() << "|h=" << cfg_.h;
    if (const auto* s = std::get_if<TimeAverageSettings>(&mode_))
      os << "|TimeAverage(" << s->burn_in << ',' << s->horizon << ',' << s->thinning << ',' << s->batches << ')';
    else
      os << "|Analytic";
    return os.str();
  }

 private:
  FbarMode mode_;
  CoefficientPair pair_;
  NoiseSpec q2_;
  StepperConfig cfg_;
};

namespace detail {
// Batch-means mean and standard error of a scalar series.
struct BatchMeans {
  double mean = 0.0;
  double std_error = 0.0;
};

inline BatchMeans batch_means(std::span<const double> series, std::size_t batches) {
  BatchMeans r;
  const std::size_t n = series.size();
  if (n == 0) return r;
  double total = 0.0;
  for (double v : series) total += v;
  r.mean = total / static_cast<double>(n);
  const std::size_t b = std::min(batches, n);
  const std::size_t len = n / b;
  if (b < 2 || len == 0) return r;
  std::vector<double> means(b, 0.0);
  for (std::size_t j = 0; j < b; ++j) {
    double s = 0.0;
    for (std::size_t i = j * len; i < (j + 1) * len; ++i) s += series[i];
    means[j] = s / static_cast<double>(len);
  }
  double mbar = 0.0;
  for (double m : means) mbar += m;
  mbar /= static_cast<double>(b);
  double ss = 0.0;
  for (double m : means) ss += (m - mbar) * (m - mbar);
  r.std_error = std::sqrt(ss / static_cast<double>(b - 1) / static_cast<double>(b));
  return r;
}

inline std::size_t steps_for_time(double t, double h, const char* what) {
  const double ratio = t / h;
  const auto n = static_cast<std::size_t>(std::llround(ratio));
  if (n == 0 && t > 0.0) throw ConfigurationError(std::string(what) + " is shorter than one step");
  return n;
}
}  // namespace detail

/// Retained frozen-chain states after burn-in, one per thinning interval.
struct InvariantSample {
  std::vector<SpectralField> samples;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> mean_stderr;  // batch means
  std::vector<double> variance_stderr;  // batch means of (y - mean)^2
  std::optional<BlowUp> failure;
};

/// Burn-in and thinning of one frozen chain started at y0.
inline InvariantSample sample_invariant_measure(const CoefficientPair& pair, const NoiseSpec& q2, const SpectralField& x,
                                                std::size_t n_samples, const StepperConfig& cfg, const RngStream& rng,
                                                std::optional<TimeAverageSettings> settings = std::nullopt,
                                                std::optional<SpectralField> y0 = std::nullopt) {
  const auto diss = check_dissipativity(pair);
  if (!diss.pass)
    throw ConfigurationError("sample_invariant_measure: eta = lambda_1 - L_g = " + std::to_string(diss.eta) +
                             " <= 0, no ergodicity guarantee");
  if (n_samples < 2) throw std::domain_error("sample_invariant_measure: need at least two samples");
  const TimeAverageSettings s = settings.value_or(default_time_average(pair));
  const std::size_t n = x.size();
  FrozenStepper stepper(pair, q2, cfg, x);
  const std::size_t burn = detail::steps_for_time(s.burn_in, cfg.h, "burn_in");
  const std::size_t thin = std::max<std::size_t>(1, detail::steps_for_time(s.thinning, cfg.h, "thinning"));

  InvariantSample out;
  SpectralField y = y0.value_or(SpectralField(n));
  std::uint64_t step = 0;
  for (; step < burn; ++step) {
    if (auto fail = stepper.step(y.coeffs(), step, rng)) {
      out.failure = fail;
      return out;
    }
  }
  out.samples.reserve(n_samples);
  while (out.samples.size() < n_samples) {
    for (std::size_t j = 0; j < thin; ++j, ++step) {
      if (auto fail = stepper.step(y.coeffs(), step, rng)) {
        out.failure = fail;
        return out;
      }
    }
    out.samples.push_back(y);
  }

  out.mean.resize(n);
  out.variance.resize(n);
  out.mean_stderr.resize(n);
  out.variance_stderr.resize(n);
  std::vector<double> series(n_samples);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n_samples; ++j) series[j] = out.samples[j][i];
    const auto bm = detail::batch_means(series, s.batches);
    out.mean[i] = bm.mean;
    out.mean_stderr[i] = bm.std_error;
    for (std::size_t j = 0; j < n_samples; ++j) series[j] = (series[j] - bm.mean) * (series[j] - bm.mean);
    const auto bv = detail::batch_means(series, s.batches);
    out.variance[i] = bv.mean * static_cast<double>(n_samples) / static_cast<double>(n_samples - 1);
    out.variance_stderr[i] = bv.std_error;
  }
  return out;
}

/// fbar(x): closed form, or a time average of f(x, Y_t) along one frozen chain from y0 = 0.
inline FbarEstimate estimate_fbar(const FbarEstimator& est, const SpectralField& x, const RngStream& rng) {
  if (!x.all_finite()) throw std::domain_error("estimate_fbar: x must be finite");
  const auto& pair = est.pair();
  if (!pair.f_depends_on_y()) return {pair.evaluate_f(x, SpectralField(x.size())), 0.0, std::vector<double>(x.size(), 0.0)};
  if (std::holds_alternative<AnalyticMode>(est.mode()))
    return {analytic_fbar(pair, x), 0.0, std::vector<double>(x.size(), 0.0)};

  const auto& s = std::get<TimeAverageSettings>(est.mode());
  const auto& cfg = est.stepper();
  const std::size_t n = x.size();
  const std::size_t thin = std::max<std::size_t>(1, detail::steps_for_time(s.thinning, cfg.h, "thinning"));
  const std::size_t n_samples = std::max<std::size_t>(
      2 * s.batches, static_cast<std::size_t>(std::llround(s.horizon / (static_cast<double>(thin) * cfg.h))));
  const auto chain = sample_invariant_measure(pair, est.q2(), x, n_samples, cfg, rng, s);
  if (chain.failure) throw std::runtime_error("estimate_fbar: frozen chain escaped the blow-up guard");

  // f is separable: f(x, y) = f_x(x) + f_y(y); only f_y needs averaging.
  SpectralField fx(n);
  pair.f_x_part_into(x.coeffs(), fx.coeffs());
  std::vector<std::vector<double>> series(n, std::vector<double>(n_samples));
  SpectralField fy(n);
  for (std::size_t j = 0; j < n_samples; ++j) {
    pair.f_y_part_into(chain.samples[j].coeffs(), fy.coeffs());
    for (std::size_t i = 0; i < n; ++i) series[i][j] = fy[i];
  }
  FbarEstimate out{fx, 0.0, std::vector<double>(n)};
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto bm = detail::batch_means(series[i], s.batches);
    out.value[i] += bm.mean;
    out.mode_stderr[i] = bm.std_error;
    ss += bm.std_error * bm.std_error;
  }
  out.std_error = std::sqrt(ss);
  return out;
}

struct MixingReport {
  std::vector<double> times;
  std::vector<double> mean_gap;  // E ||Y^{x,y1}_t - Y^{x,y2}_t||
  std::vector<double> log_gap;
  double fitted_rate = 0.0;  // least-squares slope of log_gap against t
  double eta = 0.0;
  bool identical_starts = false;
  bool pass = false;  // fitted_rate <= -eta (to 1e-6 relative)
};

/// Couples two frozen chains on the same noise and fits the decay rate of their gap.
inline MixingReport mixing_diagnostic(const CoefficientPair& pair, const NoiseSpec& q2, const SpectralField& x,
                                      const SpectralField& y1, const SpectralField& y2, double horizon,
                                      const StepperConfig& cfg, std::uint64_t seed, std::size_t replicas = 1) {
  const auto diss = check_dissipativity(pair);
  if (!diss.pass) throw ConfigurationError("mixing_diagnostic requires eta > 0");
  if (replicas == 0) throw std::domain_error("mixing_diagnostic: need at least one replica");
  MixingReport rep;
  rep.eta = diss.eta;
  const std::size_t steps = detail::steps_for_time(horizon, cfg.h, "horizon");
  FrozenStepper stepper(pair, q2, cfg, x);
  rep.times.resize(steps + 1);
  rep.mean_gap.assign(steps + 1, 0.0);
  for (std::size_t n = 0; n <= steps; ++n) rep.times[n] = static_cast<double>(n) * cfg.h;
  for (std::size_t r = 0; r < replicas; ++r) {
    const RngStream rng(seed, r, StreamRole::Q2);
    SpectralField a = y1;
    SpectralField b = y2;
    rep.mean_gap[0] += norm(a - b);
    for (std::size_t n = 0; n < steps; ++n) {
      if (stepper.step(a.coeffs(), n, rng) || stepper.step(b.coeffs(), n, rng))
        throw std::runtime_error("mixing_diagnostic: chain escaped the blow-up guard");
      rep.mean_gap[n + 1] += norm(a - b);
    }
  }
  for (double& g : rep.mean_gap) g /= static_cast<double>(replicas);

  rep.identical_starts = rep.mean_gap[0] == 0.0;
  if (rep.identical_starts) {
    rep.fitted_rate = -std::numeric_limits<double>::infinity();
    rep.pass = true;
    return rep;
  }
  // Fit over points whose gap is still resolved above rounding.
  double st = 0, sl = 0, stt = 0, stl = 0;
  std::size_t used = 0;
  rep.log_gap.resize(rep.mean_gap.size());
  for (std::size_t n = 0; n < rep.mean_gap.size(); ++n) {
    rep.log_gap[n] = std::log(rep.mean_gap[n]);
    if (rep.mean_gap[n] < 1e-12 * rep.mean_gap[0]) continue;
    st += rep.times[n];
    sl += rep.log_gap[n];
    stt += rep.times[n] * rep.times[n];
    stl += rep.times[n] * rep.log_gap[n];
    ++used;
  }
  if (used >= 2) {
    const double u = static_cast<double>(used);
    rep.fitted_rate = (u * stl - st * sl) / (u * stt - st * st);
  }
  rep.pass = rep.fitted_rate <= -rep.eta * (1.0 - 1e-6);
  return rep;
}

/// fbar lookups memoized by (estimator key, x). Persisted as CSV records
/// `key_hash,x_hash,N,x_1..x_N,fbar_1..fbar_N,std_error`.
class FbarCache {
 public:
  static std::uint64_t hash_bytes(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
    return h;
  }
  static std::uint64_t hash_string(const std::string& s) { return hash_bytes(s.data(), s.size()); }
  static std::uint64_t hash_field(const SpectralField& x) { return hash_bytes(x.vector().data(), x.size() * sizeof(double)); }

  std::optional<FbarEstimate> find(std::uint64_t key, const SpectralField& x) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find({key, hash_field(x)});
    if (it == entries_.end() || !(it->second.x == x)) return std::nullopt;
    return it->second.estimate;
  }

  void insert(std::uint64_t key, const SpectralField& x, const FbarEstimate& e) {
    std::lock_guard lock(mutex_);
    entries_[{key, hash_field(x)}] = Entry{x, e};
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

  void save(const std::string& path) const {
    std::lock_guard lock(mutex_);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("FbarCache: cannot write " + path);
    os.precision(17);
    for (const auto& [k, e] : entries_) {
      os << k.first << ',' << k.second << ',' << e.x.size();
      for (double v : e.x.vector()) os << ',' << v;
      for (double v : e.estimate.value.vector()) os << ',' << v;
      os << ',' << e.estimate.std_error << '\n';
    }
  }

  void load(const std::string& path) {
    std::ifstream is(path);
    if (!is) return;
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() < 4) throw std::runtime_error("FbarCache: malformed record in " + path);
      const std::uint64_t key = std::stoull(cells[0]);
      const std::size_t n = std::stoul(cells[2]);
      if (cells.size() != 3 + 2 * n + 1) throw std::runtime_error("FbarCache: malformed record in " + path);
      SpectralField x(n), v(n);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::stod(cells[3 + i]);
        v[i] = std::stod(cells[3 + n + i]);
      }
      insert(key, x, FbarEstimate{v, std::stod(cells.back()), {}});
    }
  }

 private:
  struct Entry {
    SpectralField x;
    FbarEstimate estimate;
  };
  mutable std::mutex mutex_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, Entry> entries_;
};

/// FbarProvider backed by an estimator; TimeAverage calls draw from the Aux
/// stream of `replica`, one fresh step range per call, and hit `cache` first.
inline FbarProvider make_fbar_provider(const FbarEstimator& est, std::uint64_t seed, std::uint64_t replica,
                                       FbarCache* cache = nullptr) {
  const std::uint64_t key = FbarCache::hash_string(est.describe());
  auto calls = std::make_shared<std::uint64_t>(0);
  return [est, seed, replica, cache, key, calls](const SpectralField& x) {
    if (cache) {
      if (auto hit = cache->find(key, x)) return hit->value;
    }
    // Each call gets its own key so successive chains are independent.
    const RngStream rng(seed ^ splitmix64(*calls + 1), replica, StreamRole::Aux);
    ++*calls;
    auto e = estimate_fbar(est, x, rng);
    if (cache) cache->insert(key, x, e);
    return e.value;
  };
}

}  // namespace sfburgers
