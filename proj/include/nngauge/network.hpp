#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nngauge/nonlinearity.hpp"

namespace nngauge {

// Architecture and initialization variances of a random fully connected
// network with `depth` hidden layers. widths[0] is the input dimension,
// widths[depth+1] the output dimension.
struct NetworkConfig {
  int depth = 1;
  std::vector<int> widths;  // size depth + 2
  double cb = 0.0;          // bias variance
  double cw = 1.0;          // weight variance scale
  Nonlinearity act = Nonlinearity::tanh_act();

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int last_hidden_width() const { return widths[depth]; }

  void validate() const {
    if (depth < 0) throw std::invalid_argument("depth must be >= 0");
    if (static_cast<int>(widths.size()) != depth + 2)
      throw std::invalid_argument("widths must have depth + 2 entries");
    for (int w : widths)
      if (w < 1) throw std::invalid_argument("all widths must be >= 1");
    if (cw <= 0.0) throw std::invalid_argument("C_W must be > 0");
    if (cb < 0.0) throw std::invalid_argument("C_b must be >= 0");
  }

  // Same config with every hidden width set to n.
  NetworkConfig with_hidden_width(int n) const {
    NetworkConfig c = *this;
    for (int l = 1; l <= depth; ++l) c.widths[l] = n;
    return c;
  }
};

// Entry of the covariance index set: j == 0 is the identity operator on
// input alpha, j >= 1 the directional derivative along direction j-1.
struct CovIndex {
  int j = 0;
  int alpha = 0;
};

// Finite set of network inputs plus first-order directional-derivative
// directions. The covariance index set runs over (j, alpha) with j = 0 and,
// when order == 1, j = 1..p.
struct InputSet {
  Eigen::MatrixXd inputs;      // n0 x A
  Eigen::MatrixXd directions;  // n0 x p (0 columns allowed)
  int order = 0;               // 0 or 1

  int num_inputs() const { return static_cast<int>(inputs.cols()); }
  int num_directions() const { return static_cast<int>(directions.cols()); }
  int num_entries() const {
    return num_inputs() * (1 + (order >= 1 ? num_directions() : 0));
  }

  CovIndex entry(int k) const {
    const int a = num_inputs();
    return CovIndex{k / a, k % a};
  }
  int entry_index(int j, int alpha) const { return j * num_inputs() + alpha; }

  void validate(const NetworkConfig& cfg) const {
    if (inputs.cols() < 1) throw std::invalid_argument("need >= 1 input");
    if (inputs.rows() != cfg.input_dim())
      throw std::invalid_argument("input dimension mismatch");
    if (order < 0 || order > 1)
      throw std::invalid_argument("derivative order must be 0 or 1");
    if (order > cfg.act.smoothness_order)
      throw std::invalid_argument("derivative order exceeds smoothness of sigma");
    for (int a = 0; a < num_inputs(); ++a)
      for (int b = a + 1; b < num_inputs(); ++b)
        if ((inputs.col(a) - inputs.col(b)).norm() == 0.0)
          throw std::invalid_argument("inputs must be pairwise distinct");
    if (order >= 1) {
      if (directions.cols() < 1)
        throw std::invalid_argument("order 1 requires >= 1 direction");
      if (directions.rows() != cfg.input_dim())
        throw std::invalid_argument("direction dimension mismatch");
      for (int j = 0; j < num_directions(); ++j)
        if (directions.col(j).norm() == 0.0)
          throw std::invalid_argument("directions must be nonzero");
    }
  }

  static InputSet single(const Eigen::VectorXd& x) {
    InputSet s;
    s.inputs = x;
    s.directions.resize(x.size(), 0);
    return s;
  }
};

}  // namespace nngauge
