#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "nngauge/rng.hpp"
#include "nngauge/stein_gauge.hpp"

using namespace nngauge;

namespace {

double npdf(double t, double var) {
  return std::exp(-0.5 * t * t / var) / std::sqrt(6.283185307179586 * var);
}
double ncdf(double t, double var) {
  return 0.5 * std::erfc(-t / std::sqrt(2.0 * var));
}

// Dense trapezoid oracle for the mixture distances at 4x the resolution
// and ~10^7 points.
struct DenseOracle {
  double tv, w1;
};
DenseOracle dense_oracle(const std::vector<double>& vars, double atom,
                         double sigma2) {
  double vmax = sigma2;
  for (double v : vars) vmax = std::max(vmax, v);
  const double lim = 12.0 * std::sqrt(vmax);
  const int n = 10000001;
  const double h = 2.0 * lim / (n - 1);
  const double wm = (1.0 - atom) / vars.size();
  double tv = 0.0, w1 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = -lim + i * h;
    double fd = 0.0, fc = t >= 0.0 ? atom : 0.0;
    for (double v : vars) {
      fd += wm * npdf(t, v);
      fc += wm * ncdf(t, v);
    }
    const double edge = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    tv += edge * std::abs(fd - npdf(t, sigma2));
    w1 += edge * std::abs(fc - ncdf(t, sigma2));
  }
  return {0.5 * (tv * h + atom), w1 * h};
}

MixtureVarianceSample make_mix(std::vector<double> a, double sigma2) {
  MixtureVarianceSample m;
  m.a = std::move(a);
  m.sigma2 = sigma2;
  return m;
}

}  // namespace

TEST_CASE("identical mixture and target give zero distances") {
  MixtureVarianceSample m = make_mix({1.0, 1.0, 1.0, 1.0}, 1.0);
  CHECK(tv_mixture_vs_gaussian(m).estimate < 1e-10);
  CHECK(w1_mixture_vs_gaussian(m).estimate < 1e-10);
  CHECK(cosine_lower_bound(m).estimate < 1e-15);
}

TEST_CASE("single atom A = 4 against sigma^2 = 1 matches closed forms") {
  MixtureVarianceSample m = make_mix(std::vector<double>(64, 4.0), 1.0);
  // Densities of N(0,1) and N(0,4) cross at t* = sqrt(8 ln 2 / 3).
  const double ts = std::sqrt(8.0 * std::log(2.0) / 3.0);
  const double tv_exact =
      2.0 * (ncdf(ts, 1.0) - ncdf(ts, 4.0));
  DistanceEstimate tv = tv_mixture_vs_gaussian(m);
  CHECK(std::abs(tv.estimate - tv_exact) < 1e-6);
  CHECK(tv.estimate <= 1.0);  // the 2|4-1|/4 = 1.5 bound clips at 1

  // Quantile coupling t -> 2t gives W1 = (2 - 1) E|Z| = sqrt(2/pi).
  DistanceEstimate w1 = w1_mixture_vs_gaussian(m);
  CHECK(std::abs(w1.estimate - std::sqrt(2.0 / 3.14159265358979)) < 1e-6);
  CHECK(w1.estimate <= 1.0 + 1e-9);
}

TEST_CASE("two-atom mixtures agree with a dense-grid oracle") {
  MixtureVarianceSample m =
      make_mix({0.5, 1.5, 0.5, 1.5, 0.5, 1.5, 0.5, 1.5}, 1.0);
  DenseOracle oracle = dense_oracle({0.5, 1.5}, 0.0, 1.0);
  DistanceEstimate tv = tv_mixture_vs_gaussian(m);
  DistanceEstimate w1 = w1_mixture_vs_gaussian(m);
  CHECK(std::abs(tv.estimate - oracle.tv) < 1e-6);
  CHECK(std::abs(w1.estimate - oracle.w1) < 1e-6);
  CHECK(tv.integration_error < 1e-6);
}

TEST_CASE("zero-variance draws become a Dirac atom, not a density") {
  MixtureVarianceSample m = make_mix({0.0, 2.0, 0.0, 2.0}, 1.0);
  DistanceEstimate tv = tv_mixture_vs_gaussian(m);
  CHECK(tv.atom_mass == doctest::Approx(0.5));
  DenseOracle oracle = dense_oracle({2.0}, 0.5, 1.0);
  CHECK(std::abs(tv.estimate - oracle.tv) < 1e-6);
  DistanceEstimate w1 = w1_mixture_vs_gaussian(m);
  CHECK(std::abs(w1.estimate - oracle.w1) < 1e-4);  // CDF kink at the atom
}

TEST_CASE("Stein upper bounds follow the closed formulas") {
  SteinBounds z = stein_upper_bounds(0.0, 2.0);
  CHECK(z.tv_bound == 0.0);
  CHECK(z.w1_bound == 0.0);
  SteinBounds b = stein_upper_bounds(0.25, 1.0);
  CHECK(b.tv_bound == 1.0);
  CHECK(b.tv_clipped);
  CHECK(b.w1_bound == doctest::Approx(1.0));
  CHECK_THROWS_AS(stein_upper_bounds(0.1, 0.0), std::invalid_argument);
}

TEST_CASE("cosine lower bound reproduces the {0,2} closed form") {
  MixtureVarianceSample m = make_mix({0.0, 2.0, 0.0, 2.0, 0.0, 2.0}, 1.0);
  const double expected =
      std::abs(0.5 * (1.0 + std::exp(-1.0)) - std::exp(-0.5));
  LowerBoundEstimate lb = cosine_lower_bound(m);
  CHECK(lb.estimate == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.0774).epsilon(1e-3));
}

TEST_CASE("lower bound never exceeds the distances on random mixtures") {
  Rng rng(515151);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> a(500);
    double mean = 0.0;
    for (double& v : a) {
      const double g = rng.next_gaussian();
      v = std::exp(0.3 * g);  // lognormal conditional variances
      mean += v;
    }
    MixtureVarianceSample m = make_mix(a, mean / a.size());
    LowerBoundEstimate lb = cosine_lower_bound(m);
    DistanceEstimate tv = tv_mixture_vs_gaussian(m);
    DistanceEstimate w1 = w1_mixture_vs_gaussian(m);
    CHECK(lb.estimate <=
          2.0 * tv.estimate + 2.0 * tv.integration_error + 1e-12);
    CHECK(lb.estimate <= w1.estimate + w1.integration_error + 1e-12);
    // Kolmogorov sanity: sup CDF difference never exceeds TV + grid error.
    CHECK(kolmogorov_mixture_vs_gaussian(m) <=
          tv.estimate + tv.integration_error + 1e-9);
    // Stein upper bounds dominate the estimates.
    double var = 0.0;
    for (double v : a) var += (v - m.sigma2) * (v - m.sigma2);
    var /= (a.size() - 1);
    SteinBounds sb = stein_upper_bounds(var, m.sigma2);
    CHECK(tv.estimate <= sb.tv_bound + 1e-9);
    CHECK(w1.estimate <= sb.w1_bound + 1e-9);
  }
}

TEST_CASE("k-statistics recover known cumulants") {
  CHECK_THROWS_AS(cumulants({1, 2, 3}), std::invalid_argument);

  MomentSummary c = cumulants(std::vector<double>(100, 3.7));
  CHECK(c.k2 == doctest::Approx(0.0));
  CHECK(c.k3 == doctest::Approx(0.0));
  CHECK(c.k4 == doctest::Approx(0.0));

  const int n = 1000000;
  Rng rng(606060);
  std::vector<double> normal(n), expo(n);
  for (int i = 0; i < n; ++i) {
    normal[i] = rng.next_gaussian();
    expo[i] = -std::log(rng.next_uniform());
  }
  MomentSummary g = cumulants(normal);
  CHECK(std::abs(g.k3) < 4 * g.k3_se);
  CHECK(std::abs(g.k4) < 4 * g.k4_se);

  MomentSummary e = cumulants(expo);
  CHECK(std::abs(e.k2 - 1.0) < 4 * e.k2_se);
  CHECK(std::abs(e.k3 - 2.0) < 4 * e.k3_se);
  CHECK(std::abs(e.k4 - 6.0) < 4 * e.k4_se);
}

TEST_CASE("fourth-cumulant identity holds for the identity nonlinearity") {
  NetworkConfig cfg;
  cfg.depth = 1;
  cfg.widths = {2, 64, 1};
  cfg.cb = 0.2;
  cfg.cw = 1.1;
  cfg.act = Nonlinearity::identity();
  Eigen::VectorXd x(2);
  x << 1.0, -0.5;
  const int n1 = 64;
  Cum4Report r = cum4_identity_check(cfg, x, n1, 200000, 1234);
  CHECK(std::abs(r.z_score) < 4.0);
  // Closed form: Var(Sigma) = 2 C_W^2 K1^2 / n1, K1 = C_b + C_W ||x||^2/n0.
  const double k1 = cfg.cb + cfg.cw * x.squaredNorm() / 2.0;
  const double var_exact = 2.0 * cfg.cw * cfg.cw * k1 * k1 / n1;
  CHECK(std::abs(r.lhs - 3.0 * var_exact) < 4.0 * r.lhs_se);
}

TEST_CASE("fourth-cumulant identity holds for tanh depth 2") {
  NetworkConfig cfg;
  cfg.depth = 2;
  cfg.widths = {3, 64, 64, 1};
  cfg.cb = 0.1;
  cfg.cw = 1.3;
  cfg.act = Nonlinearity::tanh_act();
  Eigen::VectorXd x(3);
  x << 0.7, -0.2, 0.4;
  Cum4Report r = cum4_identity_check(cfg, x, 64, 100000, 777);
  CHECK(std::abs(r.z_score) < 4.0);
}

TEST_CASE("convex bound formula, clipping, and monotonicity") {
  CHECK(convex_bound(0.0, 1, 1.0) == 0.0);
  bool clipped = false;
  double raw = 0.0;
  CHECK(convex_bound(1e-4, 1, 1.0, &clipped, &raw) == 1.0);
  CHECK(clipped);
  CHECK(raw == doctest::Approx(8.04));
  CHECK_THROWS_AS(convex_bound(1.0, 1, 0.0), std::invalid_argument);

  double prev = 0.0;
  for (double v : {1e-10, 1e-9, 1e-8}) {
    double r2 = 0.0;
    convex_bound(v, 2, 0.5, nullptr, &r2);
    CHECK(r2 >= prev);
    prev = r2;
  }
  double lo = 0.0, hi = 0.0;
  convex_bound(1e-10, 1, 0.5, nullptr, &lo);
  convex_bound(1e-10, 3, 0.5, nullptr, &hi);
  CHECK(hi >= lo);
  convex_bound(1e-10, 2, 2.0, nullptr, &lo);
  convex_bound(1e-10, 2, 0.25, nullptr, &hi);
  CHECK(hi >= lo);
}

TEST_CASE("spectral floor uses the 1e-8 trace threshold") {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(3, 3);
  c(0, 0) = 2.0;
  c(1, 1) = 0.5;
  c(2, 2) = 1e-12;  // below threshold 2.5e-8
  SpectralFloor f = spectral_floor(c);
  CHECK(f.rank == 2);
  CHECK(f.lambda_plus == doctest::Approx(0.5));
}

TEST_CASE("Bures-Wasserstein distance: exact cases and coupling bound") {
  Eigen::MatrixXd c1 = Eigen::MatrixXd::Identity(2, 2);
  BuresResult same = bures_w2(c1, c1);
  CHECK(same.w2 == doctest::Approx(0.0));

  Eigen::MatrixXd c2 = Eigen::MatrixXd::Identity(2, 2);
  c2(1, 1) = 4.0;
  BuresResult diag = bures_w2(c2, c1);
  CHECK(diag.w2 == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(diag.hs_bound == doctest::Approx(1.0).epsilon(1e-10));

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 0.5, 0.0, 1.0;
  CHECK_THROWS_AS(bures_w2(bad, c1), std::invalid_argument);
}

TEST_CASE("Bures distance matches the optimal-coupling sampling oracle") {
  // Random 3x3 PSD pair.
  Eigen::MatrixXd a(3, 3), b(3, 3);
  a << 1.2, 0.3, -0.1, 0.4, 0.9, 0.2, -0.3, 0.1, 1.5;
  b << 0.8, -0.2, 0.3, 0.1, 1.1, -0.4, 0.2, -0.3, 0.7;
  Eigen::MatrixXd g1 = a * a.transpose();
  Eigen::MatrixXd g2 = b * b.transpose();
  BuresResult r = bures_w2(g1, g2);
  CHECK(r.w2 <= r.hs_bound + 1e-9);

  // Optimal map T = C1^{-1/2} (C1^{1/2} C2 C1^{1/2})^{1/2} C1^{-1/2};
  // Monte Carlo of E||X - T X||^2 under X ~ N(0, C1).
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es1(g1);
  Eigen::MatrixXd s1 = es1.operatorSqrt();
  Eigen::MatrixXd s1inv = es1.operatorInverseSqrt();
  Eigen::MatrixXd mid = s1 * g2 * s1;
  mid = 0.5 * (mid + mid.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esm(mid);
  Eigen::MatrixXd t = s1inv * esm.operatorSqrt() * s1inv;
  // Feasibility: T pushes N(0, C1) to N(0, C2).
  CHECK((t * g1 * t.transpose() - g2).norm() < 1e-8 * g2.norm());

  Rng rng(181818);
  const int s = 100000;
  double cost = 0.0;
  for (int i = 0; i < s; ++i) {
    Eigen::Vector3d xi(rng.next_gaussian(), rng.next_gaussian(),
                       rng.next_gaussian());
    Eigen::Vector3d x = s1 * xi;
    cost += (x - t * x).squaredNorm();
  }
  cost /= s;
  CHECK(std::abs(std::sqrt(cost) - r.w2) < 0.02 * r.w2);

  // One-dimensional projections lower-bound W2.
  Rng dirs(272727);
  for (int i = 0; i < 50; ++i) {
    Eigen::Vector3d u(dirs.next_gaussian(), dirs.next_gaussian(),
                      dirs.next_gaussian());
    u.normalize();
    const double lb = std::abs(std::sqrt(u.dot(g1 * u)) -
                               std::sqrt(u.dot(g2 * u)));
    CHECK(lb <= r.w2 + 1e-9);
  }
}

TEST_CASE("variance aggregates collapse to the expected scalars") {
  NetworkConfig cfg;
  cfg.depth = 1;
  cfg.widths = {2, 32, 1};
  cfg.cb = 0.1;
  cfg.cw = 1.0;
  cfg.act = Nonlinearity::tanh_act();
  InputSet in;
  in.inputs.resize(2, 2);
  in.inputs.col(0) << 1.0, 0.0;
  in.inputs.col(1) << 0.0, 1.0;
  in.directions.resize(2, 0);
  QuadratureRule rule = QuadratureRule::gauss_hermite(64);
  KernelTable table = limit_kernel(cfg, in, rule);

  // Sigma identical to K: all aggregates vanish.
  std::vector<CondCovDraw> exact(5);
  for (CondCovDraw& d : exact) d.sigma = table.layers.back();
  Eigen::VectorXd w = Eigen::VectorXd::Ones(2);
  VarianceAggregates z = variance_aggregates(exact, table, w);
  CHECK(z.a_n == doctest::Approx(0.0));
  CHECK(z.b_n == doctest::Approx(0.0));
  CHECK(z.c_n == doctest::Approx(0.0));

  // Counting measure on a single index: A_n = Var(Sigma_aa).
  std::vector<CondCovDraw> draws = draw_cond_covs(cfg, in, 200, 99, 1);
  Eigen::VectorXd e0 = Eigen::VectorXd::Zero(2);
  e0[0] = 1.0;
  VarianceAggregates agg = variance_aggregates(draws, table, e0);
  double mean = 0.0, var = 0.0;
  for (const CondCovDraw& d : draws) mean += d.sigma(0, 0);
  mean /= draws.size();
  for (const CondCovDraw& d : draws)
    var += (d.sigma(0, 0) - mean) * (d.sigma(0, 0) - mean);
  var /= (draws.size() - 1);
  CHECK(agg.a_n == doctest::Approx(var).epsilon(1e-10));

  // Mismatched weight length rejected.
  CHECK_THROWS_AS(variance_aggregates(draws, table, Eigen::VectorXd::Ones(3)),
                  std::invalid_argument);
}
