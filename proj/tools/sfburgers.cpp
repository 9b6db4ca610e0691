// Command-line front end for the slow-fast Burgers lab.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sfburgers/config.hpp"
#include "sfburgers/report.hpp"

namespace fs = std::filesystem;
using namespace sfburgers;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::string out = "results";
  bool unsupported = false;
  std::string fbar_cache;
  double eps = 0.0;
  std::size_t stride = 1;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig c = o.config.empty() ? parse_config(YAML::Node(YAML::NodeType::Map)) : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.unsupported) c.unsupported = true;
  return c;
}

void print_summary(const RateReport& rep, const fs::path& csv) {
  std::cout.precision(6);
  std::cout << rep.experiment << ": " << (rep.verdict ? "PASS" : "FAIL") << " (" << rep.verdict_rule << ")\n";
  for (const auto& r : rep.rows)
    std::cout << "  " << rep.param_name << " = " << r.param << "  error = " << r.error_mean << " +- " << r.error_stderr
              << "  ok = " << r.n_ok << "  failed = " << r.n_failed << '\n';
  if (rep.fit)
    std::cout << "  slope = " << rep.fit->slope << "  95% CI [" << rep.fit->ci_low << ", " << rep.fit->ci_high << "]\n";
  for (const auto& n : rep.notes) std::cout << "  note: " << n << '\n';
  std::cout << "  wrote " << csv.string() << " (" << rep.wall_seconds << " s)\n";
}

int run_rate(const Options& o, const std::string& which) {
  const ExperimentConfig cfg = load(o);
  FbarCache cache;
  if (!o.fbar_cache.empty()) cache.load(o.fbar_cache);
  RateReport rep;
  if (which == "strong-rate") rep = run_strong_error(cfg, o.threads, &cache);
  else if (which == "weak-rate") rep = run_weak_error(cfg, o.threads, &cache);
  else rep = run_khasminskii_diagnostic(cfg, o.threads);
  if (!o.fbar_cache.empty()) cache.save(o.fbar_cache);
  print_summary(rep, write_report(o.out, rep));
  return 0;
}

int run_simulate(const Options& o) {
  const ExperimentConfig cfg = load(o);
  cfg.validate();
  const double eps = o.eps > 0.0 ? o.eps : cfg.eps_grid.front();
  const auto traj = simulate_slow_fast(cfg.x0, cfg.y0, eps, cfg.pair, cfg.effective_q1(), cfg.q2, cfg.run_stepper(),
                                       NoisePair::for_replica(cfg.seed, 0), o.stride);
  fs::create_directories(o.out);
  const fs::path path = fs::path(o.out) / "trajectory.csv";
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_trajectory_csv(os, traj);
  std::cout << "simulate: eps = " << eps << ", " << traj.snapshots.size() << " snapshots -> " << path.string() << '\n';
  if (!traj.ok()) {
    std::cout << "  blow-up at t = " << traj.failure->time << " (||X|| = " << traj.failure->norm_x
              << ", ||Y|| = " << traj.failure->norm_y << ")\n";
    return 2;
  }
  return 0;
}

int run_fbar(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const FbarEstimator est(cfg.fbar, cfg.pair, cfg.q2, cfg.run_stepper());
  const auto e = estimate_fbar(est, cfg.x0, RngStream(cfg.seed, 0, StreamRole::Aux));
  nlohmann::json j = {{"estimator", est.describe()},
                      {"x", cfg.x0.vector()},
                      {"fbar", e.value.vector()},
                      {"mode_stderr", e.mode_stderr},
                      {"stderr", e.std_error}};
  if (analytic_fbar_available(cfg.pair)) j["analytic"] = analytic_fbar(cfg.pair, cfg.x0).vector();
  fs::create_directories(o.out);
  const fs::path path = fs::path(o.out) / "fbar.json";
  std::ofstream(path) << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return 0;
}

int run_check(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const auto b = check_all_conditions(cfg);
  for (const auto& r : b.results) std::cout << r.name << ": " << (r.pass ? "pass" : "FAIL") << "  " << r.evidence << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral Galerkin lab for the two-time-scale stochastic Burgers system"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "YAML configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "base seed (overrides experiment.seed)");
  app.add_option("--threads", o.threads, "worker threads (default: $SFBURGERS_THREADS or hardware)");
  app.add_option("--out", o.out, "output directory")->capture_default_str();
  app.add_flag("--unsupported", o.unsupported, "allow a weak run with Q1 != 0 (exploratory, no claim)");
  app.add_option("--fbar-cache", o.fbar_cache, "CSV file memoizing time-averaged fbar evaluations");

  auto* sim = app.add_subcommand("simulate", "one slow-fast trajectory to trajectory.csv");
  sim->add_option("--eps", o.eps, "time-scale ratio (default: first of eps_grid)");
  sim->add_option("--stride", o.stride, "record every n-th macro step")->capture_default_str();
  auto* fbar = app.add_subcommand("fbar", "averaged drift at model.x0");
  auto* strong = app.add_subcommand("strong-rate", "strong error over eps_grid");
  auto* weak = app.add_subcommand("weak-rate", "weak error over eps_grid (requires q1_mode: off)");
  auto* khas = app.add_subcommand("khasminskii", "Khasminskii block error over delta_grid");
  auto* check = app.add_subcommand("check-conditions", "report the structural conditions");
  for (auto* sub : {sim, fbar, strong, weak, khas, check}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return run_simulate(o);
    if (*fbar) return run_fbar(o);
    if (*strong) return run_rate(o, "strong-rate");
    if (*weak) return run_rate(o, "weak-rate");
    if (*khas) return run_rate(o, "khasminskii");
    if (*check) return run_check(o);
  } catch (const ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 3;
  } catch (const ConditionFailure& e) {
    std::cerr << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
