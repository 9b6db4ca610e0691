#pragma once

// YAML experiment configuration with sections model, noise, stepper and
// experiment. Every key is optional; absent keys keep the ExperimentConfig
// defaults. Unknown keys are rejected.

#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "sfburgers/harness.hpp"

namespace sfburgers {

namespace config_detail {

inline void check_keys(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!node) return;
  if (!node.IsMap()) throw ConfigurationError(where + ": expected a mapping");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!ok.count(key)) throw ConfigurationError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (node && node[key]) out = node[key].as<T>();
}

inline std::string kind_of(const YAML::Node& node, const std::string& where) {
  if (!node["kind"]) throw ConfigurationError(where + ": missing 'kind'");
  return node["kind"].as<std::string>();
}

inline FKind parse_f(const YAML::Node& n) {
  const auto kind = kind_of(n, "model.f");
  if (kind == "zero") {
    check_keys(n, "model.f", {"kind"});
    return Zero{};
  }
  if (kind == "linear_in_y") {
    check_keys(n, "model.f", {"kind", "kappa_f"});
    LinearInY f;
    read(n, "kappa_f", f.kappa_f);
    return f;
  }
  if (kind == "pointwise_bounded") {
    check_keys(n, "model.f", {"kind", "a", "kappa_f", "b"});
    PointwiseBoundedNonlin f;
    read(n, "a", f.a);
    read(n, "kappa_f", f.kappa_f);
    read(n, "b", f.b);
    return f;
  }
  throw ConfigurationError("model.f: unknown kind '" + kind + "'");
}

inline GKind parse_g(const YAML::Node& n) {
  const auto kind = kind_of(n, "model.g");
  if (kind != "linear_coupled") throw ConfigurationError("model.g: unknown kind '" + kind + "'");
  check_keys(n, "model.g", {"kind", "kappa_g", "c_g"});
  LinearCoupled g;
  read(n, "kappa_g", g.kappa_g);
  read(n, "c_g", g.c_g);
  return g;
}

// A field is a coefficient list, `zero`, or {unit: k, scale: s}.
inline SpectralField parse_field(const YAML::Node& n, std::size_t N, const std::string& where) {
  if (n.IsScalar() && n.as<std::string>() == "zero") return SpectralField(N);
  if (n.IsSequence()) {
    auto v = n.as<std::vector<double>>();
    if (v.size() > N) throw ConfigurationError(where + ": more coefficients than N");
    v.resize(N, 0.0);
    return SpectralField(std::move(v));
  }
  if (n.IsMap()) {
    check_keys(n, where, {"unit", "scale"});
    const auto k = n["unit"].as<std::size_t>();
    double scale = 1.0;
    read(n, "scale", scale);
    if (k == 0 || k > N) throw ConfigurationError(where + ": unit mode out of range");
    SpectralField f = SpectralField::unit(N, k);
    f *= scale;
    return f;
  }
  throw ConfigurationError(where + ": expected a list, 'zero' or {unit, scale}");
}

// Noise is {amplitude, exponent} (alpha_k = amplitude k^-exponent), `zero`, or {alphas: [...]}.
inline NoiseSpec parse_noise(const YAML::Node& n, std::size_t N, NoiseLabel label, const std::string& where) {
  if (n.IsScalar() && n.as<std::string>() == "zero") return NoiseSpec::zero(N, label);
  check_keys(n, where, {"amplitude", "exponent", "alphas"});
  if (n["alphas"]) {
    auto v = n["alphas"].as<std::vector<double>>();
    if (v.size() != N) throw ConfigurationError(where + ".alphas: need exactly N entries");
    return NoiseSpec(std::move(v), label);
  }
  double amplitude = 1.0, exponent = 3.0;
  read(n, "amplitude", amplitude);
  read(n, "exponent", exponent);
  return NoiseSpec::power_law(N, amplitude, exponent, label);
}

inline TestFunctional parse_phi(const YAML::Node& n, std::size_t N) {
  const auto kind = kind_of(n, "experiment.phi");
  if (kind == "gaussian_of_norm") {
    check_keys(n, "experiment.phi", {"kind", "M"});
    GaussianOfNorm g{N};
    read(n, "M", g.M);
    return g;
  }
  if (kind == "squared_mode") {
    check_keys(n, "experiment.phi", {"kind", "k"});
    SquaredMode s;
    read(n, "k", s.k);
    if (s.k == 0 || s.k > N) throw ConfigurationError("experiment.phi.k out of range");
    return s;
  }
  if (kind == "constant") {
    check_keys(n, "experiment.phi", {"kind", "c"});
    Constant c;
    read(n, "c", c.c);
    return c;
  }
  throw ConfigurationError("experiment.phi: unknown kind '" + kind + "'");
}

inline bool parse_switch(const YAML::Node& n, const std::string& where) {
  const auto s = n.as<std::string>();
  if (s == "on" || s == "true" || s == "On") return true;
  if (s == "off" || s == "false" || s == "Off") return false;
  throw ConfigurationError(where + ": expected on or off");
}

}  // namespace config_detail

inline ExperimentConfig parse_config(const YAML::Node& root) {
  using namespace config_detail;
  check_keys(root, "config", {"model", "noise", "stepper", "experiment"});
  ExperimentConfig c;
  const YAML::Node model = root["model"], noise = root["noise"], stepper = root["stepper"], exp = root["experiment"];

  check_keys(model, "model", {"N", "f", "g", "x0", "y0", "theta", "burgers"});
  read(model, "N", c.N);
  if (c.N == 0) throw ConfigurationError("model.N must be >= 1");
  {
    FKind f = LinearInY{1.0};
    GKind g = LinearCoupled{1.0, 0.0};
    if (model && model["f"]) f = parse_f(model["f"]);
    if (model && model["g"]) g = parse_g(model["g"]);
    c.pair = CoefficientPair(f, g);
  }
  c.x0 = (model && model["x0"]) ? parse_field(model["x0"], c.N, "model.x0") : SpectralField::unit(c.N, 1);
  c.y0 = (model && model["y0"]) ? parse_field(model["y0"], c.N, "model.y0") : SpectralField(c.N);
  read(model, "theta", c.theta);
  read(model, "burgers", c.stepper.burgers);

  check_keys(noise, "noise", {"q1", "q2", "a3"});
  c.q1 = (noise && noise["q1"]) ? parse_noise(noise["q1"], c.N, NoiseLabel::Q1, "noise.q1")
                                : NoiseSpec::power_law(c.N, 1.0, 3.0, NoiseLabel::Q1);
  c.q2 = (noise && noise["q2"]) ? parse_noise(noise["q2"], c.N, NoiseLabel::Q2, "noise.q2")
                                : NoiseSpec::power_law(c.N, 1.0, 3.0, NoiseLabel::Q2);
  if (noise && noise["a3"]) {
    check_keys(noise["a3"], "noise.a3", {"alpha", "beta"});
    read(noise["a3"], "alpha", c.a3_alpha);
    read(noise["a3"], "beta", c.a3_beta);
  }

  check_keys(stepper, "stepper",
             {"h", "fast_substep_ratio", "blowup_threshold", "slow_noise_substeps", "fast_noise_substeps"});
  read(stepper, "h", c.stepper.h);
  read(stepper, "fast_substep_ratio", c.stepper.fast_substep_ratio);
  read(stepper, "blowup_threshold", c.stepper.blowup_threshold);
  read(stepper, "slow_noise_substeps", c.stepper.slow_noise_substeps);
  read(stepper, "fast_noise_substeps", c.stepper.fast_noise_substeps);

  check_keys(exp, "experiment",
             {"T", "eps_grid", "p", "phi", "replicas", "delta_rule", "delta_grid", "khasminskii_eps", "seed", "q1_mode",
              "coupling", "antithetic", "fbar", "unsupported"});
  read(exp, "T", c.T);
  read(exp, "eps_grid", c.eps_grid);
  read(exp, "p", c.p);
  c.phi = (exp && exp["phi"]) ? parse_phi(exp["phi"], c.N) : TestFunctional{GaussianOfNorm{c.N}};
  read(exp, "replicas", c.replicas);
  if (exp && exp["delta_rule"]) {
    const auto& d = exp["delta_rule"];
    if (d.IsScalar() && d.as<std::string>() == "sqrt_eps") {
      c.delta_rule = SqrtEps{};
    } else if (d.IsMap() && d["fixed"]) {
      check_keys(d, "experiment.delta_rule", {"fixed"});
      c.delta_rule = FixedDelta{d["fixed"].as<double>()};
    } else {
      throw ConfigurationError("experiment.delta_rule: expected sqrt_eps or {fixed: delta}");
    }
  }
  read(exp, "delta_grid", c.delta_grid);
  read(exp, "khasminskii_eps", c.khasminskii_eps);
  read(exp, "seed", c.seed);
  if (exp && exp["q1_mode"]) c.q1_mode = parse_switch(exp["q1_mode"], "experiment.q1_mode") ? Q1Mode::On : Q1Mode::Off;
  if (exp && exp["coupling"]) {
    const auto s = exp["coupling"].as<std::string>();
    if (s == "shared") c.coupling = Coupling::Shared;
    else if (s == "independent") c.coupling = Coupling::Independent;
    else throw ConfigurationError("experiment.coupling: expected shared or independent");
  }
  read(exp, "antithetic", c.antithetic);
  read(exp, "unsupported", c.unsupported);
  if (exp && exp["fbar"]) {
    const auto& f = exp["fbar"];
    if (f.IsScalar() && f.as<std::string>() == "analytic") {
      c.fbar = AnalyticMode{};
    } else if (f.IsScalar() && f.as<std::string>() == "time_average") {
      c.fbar = default_time_average(c.pair);
    } else if (f.IsMap() && f["time_average"]) {
      check_keys(f, "experiment.fbar", {"time_average"});
      const auto& t = f["time_average"];
      check_keys(t, "experiment.fbar.time_average", {"burn_in", "horizon", "thinning", "batches"});
      TimeAverageSettings s = default_time_average(c.pair);
      read(t, "burn_in", s.burn_in);
      read(t, "horizon", s.horizon);
      read(t, "thinning", s.thinning);
      read(t, "batches", s.batches);
      c.fbar = s;
    } else {
      throw ConfigurationError("experiment.fbar: expected analytic, time_average or {time_average: {...}}");
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw ConfigurationError("cannot read config " + path + ": " + e.what());
  }
  return parse_config(root);
}

inline ExperimentConfig parse_config_string(const std::string& text) { return parse_config(YAML::Load(text)); }

}  // namespace sfburgers
