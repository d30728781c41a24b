#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "nngauge/network.hpp"

namespace nngauge {

// Pre-activations and first-order tangents of one sampled network, layers
// 1..L+1. z[l-1] is n_l x A; tangents[l-1][j] is n_l x A and holds the
// directional derivative of layer l along direction j.
struct ForwardState {
  std::vector<Eigen::MatrixXd> z;
  std::vector<std::vector<Eigen::MatrixXd>> tangents;
  std::uint64_t seed = 0;
};

// One Monte Carlo realization of the conditional covariance of the output
// layer given everything up to the last hidden layer, indexed by the
// covariance index set of the InputSet.
struct CondCovDraw {
  Eigen::MatrixXd sigma;
  int width = 0;
  std::uint64_t seed = 0;
};

ForwardState forward(const NetworkConfig& cfg, const InputSet& inputs,
                     std::uint64_t seed);

CondCovDraw conditional_covariance(const ForwardState& state,
                                   const NetworkConfig& cfg,
                                   const InputSet& inputs);

std::vector<CondCovDraw> draw_cond_covs(const NetworkConfig& cfg,
                                        const InputSet& inputs, int replicas,
                                        std::uint64_t base_seed,
                                        int workers = 0);

// Streaming form: sink(k, draw) is invoked in replica order; avoids holding
// all draws in memory for large sweeps.
void for_each_cond_cov(const NetworkConfig& cfg, const InputSet& inputs,
                       int replicas, std::uint64_t base_seed,
                       const std::function<void(int, const CondCovDraw&)>& sink,
                       int workers = 0);

// Paired draw of (Sigma, one output coordinate) from the same network.
struct PairedDraw {
  double sigma_aa = 0.0;
  double z_out = 0.0;
};
std::vector<PairedDraw> draw_paired(const NetworkConfig& cfg,
                                    const Eigen::VectorXd& input, int replicas,
                                    std::uint64_t base_seed, int workers = 0);

// Clip negative eigenvalues of a symmetric matrix at zero. Returns the
// Frobenius norm of the applied correction.
double psd_repair(Eigen::MatrixXd& sym);

int default_workers();

}  // namespace nngauge
