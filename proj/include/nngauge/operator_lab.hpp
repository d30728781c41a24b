#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "nngauge/network.hpp"

namespace nngauge {

// Quadrature grid over an open ball that must not contain the origin,
// optionally augmented with first-order derivative directions and output
// multiplicity. Index layout matches InputSet: entry k = j * G + i with
// j = 0 the identity and j >= 1 directional derivatives.
struct Grid {
  Eigen::MatrixXd nodes;       // n0 x G
  Eigen::VectorXd weights;     // > 0, summing to vol(ball)
  Eigen::VectorXd center;
  double radius = 0.0;
  Eigen::MatrixXd directions;  // n0 x p
  int order = 0;               // q in {0, 1}
  int output_dim = 1;          // n_{L+1} multiplicity

  int size() const { return static_cast<int>(nodes.cols()); }
  int entries_per_node() const {
    return 1 + (order >= 1 ? static_cast<int>(directions.cols()) : 0);
  }
  int block_dim() const { return entries_per_node() * size(); }

  // Tensor product of nodes_per_dim cell centers per coordinate, restricted
  // to the ball, weights renormalized to the exact ball volume.
  static Grid ball(const Eigen::VectorXd& center, double radius,
                   int nodes_per_dim, int order = 0,
                   const Eigen::MatrixXd& directions = Eigen::MatrixXd(),
                   int output_dim = 1);

  InputSet input_set() const;
  void validate() const;
  std::uint64_t hash() const;
};

// Covariance operator discretized in the weighted symmetric form
// D_w^{1/2} K D_w^{1/2}, expanded over the output multiplicity, so matrix
// traces and Hilbert-Schmidt norms approximate their continuum analogues.
struct DiscreteOperator {
  Eigen::MatrixXd mat;        // symmetric PSD after repair
  Eigen::VectorXd weights;    // per block index (without output expansion)
  int grid_size = 0;
  int entries_per_node = 0;
  int output_dim = 1;
  double repair_norm = 0.0;
  std::uint64_t grid_hash = 0;

  int dim() const { return static_cast<int>(mat.rows()); }
  double trace() const { return mat.trace(); }
  double hs_norm() const { return mat.norm(); }
  std::string to_json() const;
};

// kernel_entries is the unweighted symmetric matrix of kernel values over
// the grid's index set (block form, without output expansion).
DiscreteOperator discretize(const Eigen::MatrixXd& kernel_entries,
                            const Grid& grid);

struct SpectralDecomp {
  Eigen::VectorXd eigenvalues;  // descending
  Eigen::MatrixXd eigenvectors;
};

SpectralDecomp spectral(const DiscreteOperator& op);
std::string spectrum_csv(const SpectralDecomp& decomp);

struct PowersStormerReport {
  double lhs = 0.0;  // ||sqrt(S1) - sqrt(S2)||_HS
  double rhs = 0.0;  // |Tr S1 - Tr S2|^{1/2} + sqrt2 ||S1-S2||_HS^{1/4} min(Tr sqrt)^{1/2}
};

PowersStormerReport powers_stormer(const DiscreteOperator& s1,
                                   const DiscreteOperator& s2);

double gelbrich_w2(const DiscreteOperator& s1, const DiscreteOperator& s2);
double d2_bound(const DiscreteOperator& s1, const DiscreteOperator& s2);

struct FunctionalBounds {
  double b_n = 0.0;  // mean ||Sigma - K||_HS^2 (weighted, with multiplicity)
  double c_n = 0.0;  // mean weighted diagonal squared difference
  double d2_rhs = 0.0;     // 0.5 sqrt(B_n)
  double w2_rhs = 0.0;     // C_n^{1/4} + sqrt2 B_n^{1/8}
  double d2_rhs_se = 0.0;  // jackknife standard errors
  double w2_rhs_se = 0.0;
};

// sigma_draws are unweighted kernel-entry matrices over the same grid.
FunctionalBounds functional_w2_bound(
    const std::vector<Eigen::MatrixXd>& sigma_draws,
    const DiscreteOperator& k, const Grid& grid);

struct SummabilityReport {
  double exponent_p = 0.0;
  std::vector<double> partial_sums;  // truncations G/4, G/2, G
  double tail_exponent = 0.0;        // fitted lambda_k ~ k^tail_exponent
  bool summable_looking = false;
};

SummabilityReport eigen_summability(const DiscreteOperator& k, double p);

struct CoupleReport {
  double empirical = 0.0;   // Monte Carlo E||E - F||^2 (weighted norm)
  double predicted = 0.0;   // ||sqrt(K) - sqrt(S)||_HS^2
  double z_score = 0.0;
  double sup_mean = 0.0;    // mean squared sup-norm over grid nodes
};

CoupleReport couple_fields(const DiscreteOperator& k, const DiscreteOperator& s,
                           int replicas, std::uint64_t seed);

}  // namespace nngauge
