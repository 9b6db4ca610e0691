#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sfburgers/harness.hpp"
#include "sfburgers/report.hpp"

using namespace sfburgers;
using Catch::Approx;

namespace {
ExperimentConfig small_config() {
  ExperimentConfig c;
  c.replicas = 40;
  c.eps_grid = {0.1, 0.01};
  c.T = 0.5;
  return c;
}
}  // namespace

TEST_CASE("rate fitting", "[harness][fit]") {
  const auto exact = fit_rate({{0.1, 0.2}, {0.01, 0.02}, {0.001, 0.002}});
  CHECK(exact.slope == Approx(1.0).epsilon(1e-12));
  CHECK(exact.intercept == Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(exact.ci_high - exact.ci_low == Approx(0.0).margin(1e-9));

  const auto half = fit_rate({{0.1, 3 * std::sqrt(0.1)}, {0.01, 3 * std::sqrt(0.01)}, {0.001, 3 * std::sqrt(0.001)}});
  CHECK(half.slope == Approx(0.5).epsilon(1e-12));

  // Synthetic regression oracle: 1% multiplicative noise on a power law.
  std::mt19937_64 gen(99);
  std::normal_distribution<double> z(0.0, 0.01);
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 8; ++i) {
    const double e = std::pow(2.0, -i - 3);
    pts.emplace_back(e, 0.7 * std::pow(e, 0.85) * (1.0 + z(gen)));
  }
  const auto noisy = fit_rate(pts);
  CHECK(std::abs(noisy.slope - 0.85) < 0.05);
  CHECK(noisy.ci_low < 0.85);
  CHECK(noisy.ci_high > 0.85);

  CHECK_THROWS_AS(fit_rate({{0.1, 1.0}, {0.01, 0.1}}), InsufficientData);
  CHECK_THROWS_AS(fit_rate({{0.1, 1.0}, {0.01, 0.1}, {0.001, 0.0}}), InsufficientData);
  const auto with_zero = fit_rate({{0.1, 1.0}, {0.01, 0.1}, {0.001, 0.01}, {0.0001, 0.0}});
  CHECK(with_zero.n_excluded == 1);
  CHECK(with_zero.slope == Approx(1.0));
}

TEST_CASE("test functionals", "[harness]") {
  SpectralField x(std::vector<double>{1.0, 2.0, 3.0});
  CHECK(evaluate(GaussianOfNorm{2}, x) == Approx(std::exp(-5.0)));
  CHECK(evaluate(GaussianOfNorm{10}, x) == Approx(std::exp(-14.0)));
  CHECK(evaluate(SquaredMode{3}, x) == 9.0);
  CHECK(evaluate(Constant{2.5}, x) == 2.5);
  CHECK(bounded_c2(GaussianOfNorm{2}));
  CHECK_FALSE(bounded_c2(SquaredMode{1}));
}

TEST_CASE("configuration validation", "[harness]") {
  auto c = small_config();
  CHECK_NOTHROW(c.validate());
  c.eps_grid = {0.01, 0.1};
  CHECK_THROWS_AS(c.validate(), ConfigurationError);
  c = small_config();
  c.replicas = 1;
  CHECK_THROWS_AS(c.validate(), ConfigurationError);
}

TEST_CASE("condition bundle", "[harness][conditions]") {
  const auto ok = check_all_conditions(ExperimentConfig{});
  CHECK(ok.all_pass());
  CHECK(ok.results.size() == 4);

  auto stiff = small_config();
  stiff.pair = CoefficientPair(LinearInY{1.0}, LinearCoupled{10.0, 0.0});
  const auto b = check_all_conditions(stiff);
  CHECK_FALSE(b.pass("A2"));
  CHECK(b.pass("A1"));
  CHECK_THROWS_AS(run_strong_error(stiff), ConditionFailure);
  stiff.q1_mode = Q1Mode::Off;
  CHECK_THROWS_AS(run_weak_error(stiff), ConditionFailure);

  auto rough = small_config();
  rough.q1 = NoiseSpec::power_law(16, 1.0, 1.0, NoiseLabel::Q1);
  rough.a3_alpha = 1.4;
  rough.a3_beta = 0.4;
  CHECK_FALSE(check_all_conditions(rough).pass("A3"));
}

TEST_CASE("weak runs require a noiseless slow equation", "[harness][weak]") {
  auto c = small_config();
  c.replicas = 4;
  CHECK_THROWS_AS(run_weak_error(c), ConfigurationError);
  c.unsupported = true;
  c.eps_grid = {0.1, 0.05, 0.025};
  const auto rep = run_weak_error(c, 1);
  CHECK(rep.rows.size() == 3);
  CHECK(std::any_of(rep.notes.begin(), rep.notes.end(), [](const auto& n) { return n.find("UNSUPPORTED") == 0; }));
}

TEST_CASE("degenerate configurations give zero error", "[harness]") {
  auto c = small_config();
  c.eps_grid = {0.1, 0.01, 0.001};
  c.replicas = 8;
  c.q1_mode = Q1Mode::Off;
  c.phi = Constant{1.0};
  for (const auto& r : run_weak_error(c, 1).rows) CHECK(r.error_mean == 0.0);

  c.phi = GaussianOfNorm{16};
  c.pair = CoefficientPair(PointwiseBoundedNonlin{1.0, 0.0, 0.0}, LinearCoupled{1.0, 0.0});
  for (const auto& r : run_weak_error(c, 1).rows) CHECK(r.error_mean < 1e-8);
  c.q1_mode = Q1Mode::On;
  const auto strong = run_strong_error(c, 1);
  for (const auto& r : strong.rows) CHECK(r.error_mean < 1e-8);
  CHECK(strong.rows.size() == 3);
}

TEST_CASE("strong error statistics", "[harness][strong]") {
  auto c = small_config();
  c.eps_grid = {0.1, 0.05, 0.025};
  const auto shared = run_strong_error(c, 1);
  CHECK(shared.rows.size() == 3);
  CHECK(shared.rows[0].param == 0.1);
  CHECK(shared.rows[0].n_ok == 40);

  c.coupling = Coupling::Independent;
  const auto indep = run_strong_error(c, 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(indep.rows[i].error_stderr >= 3.0 * shared.rows[i].error_stderr);

  // sqrt(n) scaling of the standard error.
  c.coupling = Coupling::Shared;
  c.eps_grid = {0.1};
  c.replicas = 200;
  const double se200 = run_strong_error(c, 1).rows[0].error_stderr;
  c.replicas = 800;
  const double se800 = run_strong_error(c, 1).rows[0].error_stderr;
  CHECK(se200 / se800 == Approx(2.0).epsilon(0.3));
}

TEST_CASE("reports are reproducible and thread-count independent", "[harness][determinism]") {
  auto c = small_config();
  const auto a = report_csv(run_strong_error(c, 1));
  const auto b = report_csv(run_strong_error(c, 3));
  CHECK(a == b);
  c.seed += 1;
  CHECK(report_csv(run_strong_error(c, 1)) != a);
  CHECK(a.rfind("eps_or_delta,error_mean,error_stderr,n_ok,n_failed\n", 0) == 0);
}

TEST_CASE("Khasminskii diagnostic", "[harness][khasminskii]") {
  auto c = small_config();
  c.replicas = 10;
  c.khasminskii_eps = 0.01;
  c.delta_grid = {0.05, 0.5, 1.0};
  const auto rep = run_khasminskii_diagnostic(c, 1);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.rows[0].param == 1.0);
  // delta >= T freezes once: the largest error in the report.
  CHECK(rep.rows[0].error_mean >= rep.rows[1].error_mean);
  CHECK(rep.rows[0].error_mean >= rep.rows[2].error_mean);
  CHECK(rep.metadata["operating_delta"].get<double>() == Approx(0.1));

  c.delta_grid = {0.0125};
  CHECK_THROWS_AS(run_khasminskii_diagnostic(c, 1), ConfigurationError);
}

TEST_CASE("report metadata", "[harness][report]") {
  auto c = small_config();
  c.replicas = 4;
  const auto rep = run_strong_error(c, 1);
  const auto j = report_json(rep);
  CHECK(j["config"]["experiment"]["replicas"] == 4);
  CHECK(j["config"]["stepper"]["h"] == 0.005);
  CHECK(j.contains("fitted_slope"));
  CHECK(j["rows"].size() == 2);
  CHECK(j["wall_seconds"].get<double>() >= 0.0);
}
