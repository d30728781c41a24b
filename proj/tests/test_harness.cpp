#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "nngauge/experiment_harness.hpp"
#include "nngauge/rng.hpp"

using namespace nngauge;

namespace {

std::vector<SweepPoint> make_points(const std::vector<int>& widths,
                                    const std::vector<double>& estimates,
                                    const std::vector<double>& errors) {
  std::vector<SweepPoint> pts;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    SweepPoint p;
    p.metric = "m";
    p.width = widths[i];
    p.estimate = estimates[i];
    p.std_error = errors[i];
    pts.push_back(p);
  }
  return pts;
}

SweepConfig identity_config(const std::vector<int>& widths, int replicas,
                            std::uint64_t seed) {
  SweepConfig cfg;
  cfg.net.depth = 1;
  cfg.net.widths = {3, 16, 1};
  cfg.net.cb = 0.1;
  cfg.net.cw = 1.0;
  cfg.net.act = Nonlinearity::identity();
  cfg.widths = widths;
  cfg.replicas = replicas;
  Eigen::VectorXd x(3);
  x << 0.6, -0.8, 0.5;
  cfg.inputs = InputSet::single(x);
  cfg.base_seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("fit_slope recovers exact power laws") {
  std::vector<int> widths = {16, 32, 64, 128, 256};
  std::vector<double> est, err;
  for (int n : widths) {
    est.push_back(7.0 / n);
    err.push_back(1e-9 / n);
  }
  auto pts = make_points(widths, est, err);
  SlopeFit fit = fit_slope(pts);
  CHECK(!fit.insufficient);
  CHECK(fit.slope == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(fit.intercept == doctest::Approx(std::log(7.0)).epsilon(1e-9));

  // Constant series: slope 0.
  std::vector<double> flat(widths.size(), 3.5), ferr(widths.size(), 1e-9);
  auto fpts = make_points(widths, flat, ferr);
  SlopeFit ffit = fit_slope(fpts);
  CHECK(std::abs(ffit.slope) < 1e-9);
}

TEST_CASE("fit_slope synthetic noise: 95% coverage at +-0.1") {
  std::vector<int> widths = {16, 32, 64, 128, 256};
  Rng rng(9001);
  int hits = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> est, err;
    for (int n : widths) {
      const double eps = 0.05 * rng.next_gaussian();
      est.push_back((1.0 + eps) / n);
      err.push_back(0.05 / n);
    }
    auto pts = make_points(widths, est, err);
    SlopeFit fit = fit_slope(pts);
    REQUIRE(!fit.insufficient);
    if (std::abs(fit.slope + 1.0) <= 0.1) ++hits;
  }
  CHECK(hits >= static_cast<int>(0.95 * trials));
}

TEST_CASE("fit_slope exclusion rules and insufficient signal") {
  std::vector<int> widths = {16, 32, 64, 128};
  // Third point is below twice its standard error, fourth is non-positive.
  auto pts = make_points(widths, {1.0, 0.5, 0.01, -0.1},
                         {0.001, 0.001, 0.02, 0.001});
  SlopeFit fit = fit_slope(pts);
  CHECK(fit.insufficient);
  CHECK(fit.used_points == 2);
  CHECK(!pts[2].included);
  CHECK(pts[2].note.find("excluded") != std::string::npos);
  CHECK(!pts[3].included);
  CHECK(pts[3].note.find("non-positive") != std::string::npos);
  CHECK(pts[0].included);
}

TEST_CASE("run_sweep var_sigma matches identity closed form, slope -1") {
  SweepConfig cfg = identity_config({16, 32, 64, 128}, 20000, 42);
  cfg.metrics = {{"var_sigma", -1.0, 0.1}};
  ScalingReport rep = run_sweep(cfg);
  REQUIRE(rep.fits.size() == 1);
  const MetricFit& fit = rep.fits[0];
  CHECK(!fit.insufficient_signal);
  CHECK(fit.slope == doctest::Approx(-1.0).epsilon(0.12));
  CHECK(fit.pass);

  // Closed form: Var(Sigma) = 2 C_W^2 K1^2 / n with K1 = cb + cw |x|^2 / n0.
  const double k1 = 0.1 + (0.36 + 0.64 + 0.25) / 3.0;
  for (const SweepPoint& p : rep.points) {
    const double expect = 2.0 * k1 * k1 / p.width;
    CHECK(std::abs(p.estimate - expect) < 4.0 * p.std_error);
  }
}

TEST_CASE("run_sweep flags no signal for tv at depth zero") {
  SweepConfig cfg = identity_config({8, 16, 32, 64}, 1000, 7);
  cfg.net.depth = 0;
  cfg.net.widths = {3, 1};
  cfg.metrics = {{"tv", -1.0, 0.0}};
  ScalingReport rep = run_sweep(cfg);
  REQUIRE(rep.fits.size() == 1);
  CHECK(rep.fits[0].insufficient_signal);
  CHECK(rep.fits[0].note == "no signal");
  CHECK(!rep.fits[0].pass);
  for (const SweepPoint& p : rep.points) CHECK(!p.included);
}

TEST_CASE("run_sweep cosine lower bound, ReLU depth 2, slope near -1") {
  SweepConfig cfg;
  cfg.net.depth = 2;
  cfg.net.widths = {2, 16, 16, 1};
  cfg.net.cb = 0.0;
  cfg.net.cw = 2.0;
  cfg.net.act = Nonlinearity::relu();
  cfg.widths = {16, 32, 64, 128};
  cfg.replicas = 20000;
  Eigen::VectorXd x(2);
  x << 0.8, 0.6;
  cfg.inputs = InputSet::single(x);
  cfg.base_seed = 1234;
  cfg.metrics = {{"lower", -1.0, 0.2}};
  ScalingReport rep = run_sweep(cfg);
  REQUIRE(rep.fits.size() == 1);
  CHECK(!rep.fits[0].insufficient_signal);
  CHECK(std::abs(rep.fits[0].slope + 1.0) <= 0.2);
  for (const SweepPoint& p : rep.points) CHECK(p.estimate > 0.0);
}

TEST_CASE("run_sweep over a grid: functional bounds positive and shrinking") {
  SweepConfig cfg;
  cfg.net.depth = 1;
  cfg.net.widths = {1, 16, 1};
  cfg.net.cb = 0.0;
  cfg.net.cw = 1.0;
  cfg.net.act = Nonlinearity::tanh_act();
  cfg.widths = {16, 32, 64, 128};
  cfg.replicas = 2000;
  cfg.use_grid = true;
  cfg.grid = Grid::ball((Eigen::VectorXd(1) << 0.5).finished(), 0.5, 8);
  cfg.base_seed = 17;
  cfg.metrics = {{"d2_rhs", -0.5, 0.3}};
  ScalingReport rep = run_sweep(cfg);
  CHECK(rep.grid_hash == cfg.grid.hash());
  REQUIRE(rep.points.size() == 4);
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    CHECK(rep.points[i].estimate > 0.0);
    if (i > 0) CHECK(rep.points[i].estimate < rep.points[i - 1].estimate);
  }
  CHECK(!rep.fits[0].insufficient_signal);
  CHECK(std::abs(rep.fits[0].slope + 0.5) <= 0.3);
}

TEST_CASE("report persistence: JSON round trip, CSV shape, determinism") {
  SweepConfig cfg = identity_config({16, 32, 64, 128}, 1000, 99);
  cfg.metrics = {{"var_sigma", -1.0, 0.2}, {"synthetic", -1.0, 0.0}};
  ScalingReport rep = run_sweep(cfg);
  CHECK(rep.rng_id == std::string(kRngMixerId));
  CHECK(rep.base_seed == 99);

  const std::string path = "harness_report_test.json";
  persist(rep, path);
  ScalingReport back = load(path);
  CHECK(back.to_json() == rep.to_json());
  std::remove(path.c_str());

  // Re-serialization is byte-stable.
  CHECK(ScalingReport::from_json(rep.to_json()).to_json() == rep.to_json());

  // Schema version mismatch is a hard error.
  std::string tampered = rep.to_json();
  const std::string key = "\"schema_version\": 1";
  tampered.replace(tampered.find(key), key.size(), "\"schema_version\": 2");
  CHECK_THROWS_AS(ScalingReport::from_json(tampered), std::runtime_error);

  // CSV: fixed six columns, one line per point plus header.
  const std::string csv = rep.to_csv();
  std::size_t lines = 0, commas_first = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  for (char c : csv.substr(0, csv.find('\n')))
    if (c == ',') ++commas_first;
  CHECK(lines == rep.points.size() + 1);
  CHECK(commas_first == 5);

  // Same seed reproduces the report bit-for-bit.
  ScalingReport rep2 = run_sweep(cfg);
  CHECK(rep2.to_json() == rep.to_json());

  // Synthetic metric passes its target slope exactly.
  bool found = false;
  for (const MetricFit& f : rep.fits)
    if (f.name == "synthetic") {
      found = true;
      CHECK(f.pass);
      CHECK(f.slope == doctest::Approx(-1.0).epsilon(1e-6));
    }
  CHECK(found);
}

TEST_CASE("monotone budget: doubling replicas does not inflate errors") {
  SweepConfig lo = identity_config({16, 32, 64, 128}, 1000, 5);
  lo.metrics = {{"synthetic", -1.0, 0.0}};
  SweepConfig hi = lo;
  hi.replicas = 2000;
  ScalingReport rlo = run_sweep(lo);
  ScalingReport rhi = run_sweep(hi);
  for (std::size_t i = 0; i < rlo.points.size(); ++i)
    CHECK(rhi.points[i].std_error <= rlo.points[i].std_error + 1e-15);
}

TEST_CASE("sweep config validation") {
  SweepConfig cfg = identity_config({16, 32, 64}, 1000, 1);
  cfg.metrics = {{"var_sigma", -1.0, 0.0}};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // only 3 widths
  cfg.widths = {16, 32, 64, 64};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // not increasing
  cfg.widths = {16, 32, 64, 128};
  cfg.replicas = 10;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // too few replicas
  cfg.replicas = 1000;
  cfg.metrics = {{"unknown_metric", -1.0, 0.0}};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.metrics = {{"d2_rhs", -0.5, 0.0}};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // grid required
  cfg.metrics = {{"var_sigma", -1.0, 0.0}};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("render_svg emits one series per metric with reference lines") {
  SweepConfig cfg = identity_config({16, 32, 64, 128}, 1000, 3);
  cfg.metrics = {{"var_sigma", -1.0, 0.2}, {"synthetic", -1.0, 0.0}};
  ScalingReport rep = run_sweep(cfg);
  const std::string svg = render_svg(rep);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("var_sigma") != std::string::npos);
  CHECK(svg.find("synthetic") != std::string::npos);
  std::size_t polylines = 0, pos = 0;
  while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
    ++polylines;
    ++pos;
  }
  CHECK(polylines == 2);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);
}
