#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "nngauge/kernel_engine.hpp"
#include "nngauge/net_sampler.hpp"
#include "nngauge/network.hpp"

namespace nngauge {

// Samples of the conditional output variance A (one diagonal CondCovDraw
// entry per network replica) together with the infinite-width target
// variance sigma^2. The conditional law of the output is the scale mixture
// (1/S) sum_s N(0, A_s), compared against N(0, sigma^2).
struct MixtureVarianceSample {
  std::vector<double> a;
  double sigma2 = 0.0;
  int width = 0;

  void validate() const;
};

// Distance estimate from the exact mixture representation plus a bound on
// the numerical (truncation + quadrature) error of the integral.
struct DistanceEstimate {
  double estimate = 0.0;
  double integration_error = 0.0;
  double atom_mass = 0.0;  // Dirac mass at 0 from A_s = 0 draws
  bool clipped = false;    // TV clipped into [0, 1]
};

DistanceEstimate tv_mixture_vs_gaussian(const MixtureVarianceSample& mix);
DistanceEstimate w1_mixture_vs_gaussian(const MixtureVarianceSample& mix);

// Kolmogorov (CDF sup-difference) estimate on the same grid; used as a
// sanity floor for the TV estimate.
double kolmogorov_mixture_vs_gaussian(const MixtureVarianceSample& mix);

struct SteinBounds {
  double tv_bound = 0.0;
  double w1_bound = 0.0;
  bool tv_clipped = false;
};

// tv <= min(1, 8 Var(A)/sigma^4), w1 <= 4 Var(A)/sigma^3.
SteinBounds stein_upper_bounds(double var_a, double sigma2);

struct LowerBoundEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

// |E e^{-A/2} - e^{-sigma^2/2}|: lower bound on min(2 TV, W1).
LowerBoundEstimate cosine_lower_bound(const MixtureVarianceSample& mix);

// Unbiased k-statistics for the second to fourth cumulants, with
// leave-one-out jackknife standard errors.
struct MomentSummary {
  double k2 = 0.0, k3 = 0.0, k4 = 0.0;
  double k2_se = 0.0, k3_se = 0.0, k4_se = 0.0;
};

MomentSummary cumulants(const std::vector<double>& samples);

// Checks 3 Var(Sigma_aa) = kappa_4(z) on paired draws from the same nets.
struct Cum4Report {
  double lhs = 0.0, lhs_se = 0.0;
  double rhs = 0.0, rhs_se = 0.0;
  double z_score = 0.0;
};

Cum4Report cum4_identity_check(const NetworkConfig& cfg,
                               const Eigen::VectorXd& input, int width,
                               int replicas, std::uint64_t seed);

// min(1, 402 (lambda_plus^{-3/2} + 1) rank^{41/24} sqrt(var_matrix_sum)).
double convex_bound(double var_matrix_sum, int rank, double lambda_plus,
                    bool* clipped = nullptr, double* raw = nullptr);

// Smallest positive eigenvalue and rank of a mean covariance, with
// threshold 1e-8 * trace.
struct SpectralFloor {
  double lambda_plus = 0.0;
  int rank = 0;
};

SpectralFloor spectral_floor(const Eigen::MatrixXd& mean_cov);

// Exact 2-Wasserstein distance between N(0, C1) and N(0, C2), plus the
// coupling upper bound ||sqrt(C1) - sqrt(C2)||_HS.
struct BuresResult {
  double w2 = 0.0;
  double hs_bound = 0.0;
};

BuresResult bures_w2(const Eigen::MatrixXd& c1, const Eigen::MatrixXd& c2);

// Weighted aggregates of entrywise variance / squared deviation of Sigma
// from the limit table's final layer.
struct VarianceAggregates {
  double a_n = 0.0;  // sum_{k,l} w_k w_l Var(Sigma_kl)
  double b_n = 0.0;  // sum_{k,l} w_k w_l E[(Sigma_kl - K_kl)^2]
  double c_n = 0.0;  // sum_k w_k E[(Sigma_kk - K_kk)^2]
};

VarianceAggregates variance_aggregates(const std::vector<CondCovDraw>& draws,
                                       const KernelTable& table,
                                       const Eigen::VectorXd& weights);

}  // namespace nngauge
