#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "nngauge/kernel_engine.hpp"
#include "nngauge/net_sampler.hpp"
#include "nngauge/rng.hpp"

using namespace nngauge;

namespace {

NetworkConfig tanh_cfg(int depth, int width) {
  NetworkConfig cfg;
  cfg.depth = depth;
  cfg.widths.assign(depth + 2, width);
  cfg.widths.front() = 3;
  cfg.widths.back() = 1;
  cfg.cb = 0.1;
  cfg.cw = 1.2;
  cfg.act = Nonlinearity::tanh_act();
  return cfg;
}

InputSet two_inputs() {
  InputSet in;
  in.inputs.resize(3, 2);
  in.inputs.col(0) << 0.7, -0.3, 1.1;
  in.inputs.col(1) << -0.2, 0.9, 0.4;
  in.directions.resize(3, 0);
  return in;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475); }

// Anderson-Darling statistic against a fully specified N(0, var).
double ad_statistic(std::vector<double> x, double var) {
  std::sort(x.begin(), x.end());
  const int n = static_cast<int>(x.size());
  const double s = std::sqrt(var);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double u = normal_cdf(x[i] / s);
    u = std::clamp(u, 1e-300, 1.0 - 1e-16);
    double v = normal_cdf(x[n - 1 - i] / s);
    v = std::clamp(v, 1e-300, 1.0 - 1e-16);
    acc += (2.0 * i + 1.0) * (std::log(u) + std::log1p(-v));
  }
  return -n - acc / n;
}

}  // namespace

TEST_CASE("draws are bit-identical across runs and worker counts") {
  NetworkConfig cfg = tanh_cfg(2, 16);
  InputSet in = two_inputs();
  auto a = draw_cond_covs(cfg, in, 7, 2024, 1);
  auto b = draw_cond_covs(cfg, in, 7, 2024, 1);
  auto c = draw_cond_covs(cfg, in, 7, 2024, 3);
  REQUIRE(a.size() == 7);
  for (int k = 0; k < 7; ++k) {
    CHECK(a[k].sigma == b[k].sigma);
    CHECK(a[k].sigma == c[k].sigma);
    CHECK(a[k].seed == split_seed(2024, k));
  }
  // Single replica equals the direct composition.
  auto single = draw_cond_covs(cfg, in, 1, 555, 1);
  CondCovDraw direct =
      conditional_covariance(forward(cfg, in, split_seed(555, 0)), cfg, in);
  CHECK(single[0].sigma == direct.sigma);
}

TEST_CASE("streaming draws match the batch interface") {
  NetworkConfig cfg = tanh_cfg(1, 8);
  InputSet in = two_inputs();
  auto batch = draw_cond_covs(cfg, in, 9, 31337, 1);
  int calls = 0;
  for_each_cond_cov(cfg, in, 9, 31337,
                    [&](int k, const CondCovDraw& d) {
                      CHECK(k == calls);
                      CHECK(d.sigma == batch[k].sigma);
                      ++calls;
                    },
                    2);
  CHECK(calls == 9);
}

TEST_CASE("layer-1 variance matches C_b + C_W ||x||^2 / n_0") {
  NetworkConfig cfg;
  cfg.depth = 0;
  cfg.widths = {3, 1};
  cfg.cb = 0.3;
  cfg.cw = 1.7;
  cfg.act = Nonlinearity::tanh_act();
  Eigen::VectorXd x(3);
  x << 0.5, -1.0, 0.25;
  InputSet in = InputSet::single(x);
  const int s = 100000;
  double sum2 = 0.0;
  for (int k = 0; k < s; ++k) {
    ForwardState st = forward(cfg, in, split_seed(7, k));
    const double z = st.z[0](0, 0);
    sum2 += z * z;
  }
  const double emp = sum2 / s;
  const double expected = cfg.cb + cfg.cw * x.squaredNorm() / 3.0;
  const double se = expected * std::sqrt(2.0 / s);
  CHECK(std::abs(emp - expected) < 4 * se);
}

TEST_CASE("tangents are linear in the direction") {
  NetworkConfig cfg = tanh_cfg(3, 12);
  Eigen::VectorXd v1(3), v2(3);
  v1 << 1.0, 0.5, -0.25;
  v2 << -0.3, 0.8, 0.1;
  InputSet in;
  in.inputs.resize(3, 1);
  in.inputs.col(0) << 0.4, -0.6, 0.9;
  in.order = 1;
  in.directions.resize(3, 3);
  in.directions.col(0) = v1;
  in.directions.col(1) = v2;
  in.directions.col(2) = v1 + v2;

  InputSet in_scaled = in;
  in_scaled.directions.col(0) = 2.0 * v1;

  ForwardState st = forward(cfg, in, 404);
  ForwardState st2 = forward(cfg, in_scaled, 404);
  for (int l = 0; l < cfg.depth + 1; ++l) {
    // Doubling the direction doubles the tangent exactly.
    CHECK((st2.tangents[l][0] - 2.0 * st.tangents[l][0]).norm() == 0.0);
    // Additivity to rounding.
    const double scale = st.tangents[l][2].norm() + 1e-30;
    CHECK((st.tangents[l][2] - st.tangents[l][0] - st.tangents[l][1]).norm() <
          1e-10 * scale);
  }
}

TEST_CASE("Sigma is symmetric and PSD for order 0") {
  NetworkConfig cfg = tanh_cfg(2, 24);
  InputSet in = two_inputs();
  for (int k = 0; k < 20; ++k) {
    CondCovDraw d = draw_cond_covs(cfg, in, 1, 9000 + k, 1)[0];
    CHECK((d.sigma - d.sigma.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d.sigma,
                                                      Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() > -1e-10);
  }
}

TEST_CASE("psd_repair clips negative eigenvalues and reports the correction") {
  Eigen::MatrixXd m(2, 2);
  m << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  Eigen::MatrixXd orig = m;
  const double delta = psd_repair(m);
  CHECK(delta == doctest::Approx(1.0).epsilon(1e-10));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);

  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
  CHECK(psd_repair(id) == 0.0);
}

TEST_CASE("conditioned outputs are Gaussian (Anderson-Darling)") {
  NetworkConfig cfg = tanh_cfg(2, 32);
  InputSet in;
  in.inputs.resize(3, 1);
  in.inputs.col(0) << 0.9, -0.2, 0.5;
  in.directions.resize(3, 0);

  // Freeze the hidden layers once, then resample only the output layer.
  ForwardState st = forward(cfg, in, 123456);
  CondCovDraw d = conditional_covariance(st, cfg, in);
  const double var = d.sigma(0, 0);
  Eigen::VectorXd feats =
      st.z[cfg.depth - 1].col(0).unaryExpr([](double x) { return std::tanh(x); });
  const int n_last = cfg.widths[cfg.depth];
  const double wscale = std::sqrt(cfg.cw / n_last);
  const double bscale = std::sqrt(cfg.cb);

  const int resamples = 10000;
  std::vector<double> outs(resamples);
  for (int k = 0; k < resamples; ++k) {
    Rng r(split_seed(777777, k));
    double z = 0.0;
    for (int i = 0; i < n_last; ++i) z += wscale * r.next_gaussian() * feats[i];
    z += bscale * r.next_gaussian();
    outs[k] = z;
  }
  const double a2 = ad_statistic(outs, var);

  // Monte Carlo null distribution of the statistic at the same sample size.
  const int sims = 3000;
  int exceed = 0;
  for (int s = 0; s < sims; ++s) {
    Rng r(split_seed(42424242, s));
    std::vector<double> y(resamples);
    for (int k = 0; k < resamples; ++k) y[k] = r.next_gaussian();
    if (ad_statistic(y, 1.0) >= a2) ++exceed;
  }
  // Reject only below the 10^-3 level.
  CHECK(exceed >= 3);
}

TEST_CASE("mean of Sigma matches the infinite-width kernel at large width") {
  NetworkConfig cfg = tanh_cfg(1, 4096);
  Eigen::VectorXd x(3);
  x << 0.8, -0.5, 0.3;
  InputSet in = InputSet::single(x);
  QuadratureRule rule = QuadratureRule::gauss_hermite(64);
  KernelTable table = limit_kernel(cfg, in, rule);
  const double kappa = table.layer(cfg.depth + 1)(0, 0);

  const int s = 10000;
  double sum = 0.0, sum2 = 0.0;
  for_each_cond_cov(cfg, in, s, 13579,
                    [&](int, const CondCovDraw& d) {
                      sum += d.sigma(0, 0);
                      sum2 += d.sigma(0, 0) * d.sigma(0, 0);
                    },
                    1);
  const double mean = sum / s;
  const double var = sum2 / s - mean * mean;
  const double se = std::sqrt(var / s);
  CHECK(std::abs(mean - kappa) < 3 * se);
}

TEST_CASE("Var(Sigma) scales like 1/n between widths 64 and 256") {
  NetworkConfig cfg = tanh_cfg(3, 64);
  Eigen::VectorXd x(3);
  x << 0.6, 0.2, -0.7;
  InputSet in = InputSet::single(x);

  auto var_at = [&](int n) {
    NetworkConfig c = cfg.with_hidden_width(n);
    const int s = 20000;
    double sum = 0.0, sum2 = 0.0;
    for_each_cond_cov(c, in, s, 8675309,
                      [&](int, const CondCovDraw& d) {
                        sum += d.sigma(0, 0);
                        sum2 += d.sigma(0, 0) * d.sigma(0, 0);
                      },
                      1);
    const double mean = sum / s;
    return sum2 / s - mean * mean;
  };
  const double ratio = var_at(64) / var_at(256);
  CHECK(ratio >= 3.0);
  CHECK(ratio <= 5.3);
}
