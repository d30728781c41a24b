#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "nngauge/network.hpp"

namespace nngauge {

// How a kernel-table entry was computed.
enum class KernelMethod : int {
  ClosedForm = 0,
  Quadrature = 1,
  FiniteDifference = 2,
  MonteCarlo = 3,
};

std::string kernel_method_name(KernelMethod m);

// Gauss-Hermite rule for the standard normal weight: sum_i w_i f(t_i)
// approximates E[f(Z)], Z ~ N(0,1), exactly for polynomials of degree
// <= 2m - 1. Built by the Golub-Welsch eigenvalue method.
struct QuadratureRule {
  int m = 0;
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  static QuadratureRule gauss_hermite(int m = 64);
};

// E[sigma(u) sigma(v)] for (u, v) ~ N(0, [[kaa, kab], [kab, kbb]]).
// Dispatches to the arc-cosine closed form (ReLU / LeakyReLU), exact
// Gaussian moments (Identity / Polynomial), or a tensor quadrature after a
// Cholesky substitution (other smooth activations; resolution is keyed to
// the rule's node count). Correlations are
// clamped to [-1, 1]; *clipped reports whether clamping fired.
double gaussian_pair_expectation(double kaa, double kbb, double kab,
                                 const Nonlinearity& act,
                                 const QuadratureRule& rule,
                                 bool* clipped = nullptr);

// One layer of the infinite-width covariance recursion:
// K_next = C_b + C_W E[sigma(u) sigma(v)] under the 2x2 block K_prev.
// Throws if K_prev fails PSD checks beyond tolerance.
double recursion_step(const Eigen::Matrix2d& k_prev, const NetworkConfig& cfg,
                      const QuadratureRule& rule);

// K^(layer)(x, y) for a single pair of inputs, layer in 1..depth+1.
double pair_kernel(const NetworkConfig& cfg, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y, int layer,
                   const QuadratureRule& rule);

// Full kernel matrix K^(layer) over the columns of `points` (n0 x M).
Eigen::MatrixXd kernel_matrix(const NetworkConfig& cfg,
                              const Eigen::MatrixXd& points, int layer,
                              const QuadratureRule& rule);

// Infinite-width covariances for all layers 1..depth+1 over the covariance
// index set of an InputSet, including first-derivative entries.
struct KernelTable {
  int num_inputs = 0;
  int num_directions = 0;
  int order = 0;
  std::vector<Eigen::MatrixXd> layers;           // K^(1)..K^(L+1)
  std::vector<Eigen::MatrixXi> methods;          // KernelMethod per entry
  std::vector<Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>> unreliable;
  bool degenerate_input = false;  // some x_alpha = 0 with C_b = 0
  bool correlation_clipped = false;
  int quadrature_nodes = 0;

  int num_entries() const {
    return num_inputs * (1 + (order >= 1 ? num_directions : 0));
  }
  int entry_index(int j, int alpha) const { return j * num_inputs + alpha; }

  const Eigen::MatrixXd& layer(int ell) const { return layers.at(ell - 1); }

  std::string to_json() const;
};

KernelTable limit_kernel(const NetworkConfig& cfg, const InputSet& inputs,
                         const QuadratureRule& rule);

// Smallest eigenvalue of the order-<= q block of each layer's table.
struct NondegeneracyReport {
  std::vector<double> min_eigenvalue;  // per layer 1..L+1
  std::vector<bool> layer_pass;
  double tolerance = 0.0;
  bool pass = false;
};

NondegeneracyReport nondegeneracy_check(const KernelTable& table, int q,
                                        double tolerance = -1.0);

}  // namespace nngauge
