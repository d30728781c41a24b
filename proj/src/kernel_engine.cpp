#include "nngauge/kernel_engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace nngauge {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kPsdTol = 1e-10;
constexpr double kDegenerateVar = 1e-300;

// Normalized arc-cosine kernel of order one:
// E[ReLU(u) ReLU(v)] = sqrt(kaa kbb) * jhat(rho) for standard correlation rho.
double jhat(double rho) {
  rho = std::clamp(rho, -1.0, 1.0);
  return (std::sqrt(std::max(0.0, 1.0 - rho * rho)) +
          (kPi - std::acos(rho)) * rho) /
         (2.0 * kPi);
}

// E[u^a v^b] for centered jointly Gaussian (u, v), by the moment recursion
// M(a,b) = (a-1) kaa M(a-2,b) + b kab M(a-1,b-1), with the single-variable
// reduction M(0,b) = (b-1) kbb M(0,b-2).
double gaussian_moment(int a, int b, double kaa, double kbb, double kab) {
  if (a < 0 || b < 0) return 0.0;
  if (a == 0 && b == 0) return 1.0;
  if (a == 0)
    return (b - 1) * kbb * gaussian_moment(0, b - 2, kaa, kbb, kab);
  return (a - 1) * kaa * gaussian_moment(a - 2, b, kaa, kbb, kab) +
         b * kab * gaussian_moment(a - 1, b - 1, kaa, kbb, kab);
}

double polynomial_pair(const std::vector<double>& c, double kaa, double kbb,
                       double kab) {
  double acc = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] == 0.0) continue;
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (c[j] == 0.0) continue;
      acc += c[i] * c[j] *
             gaussian_moment(static_cast<int>(i), static_cast<int>(j), kaa,
                             kbb, kab);
    }
  }
  return acc;
}

// Smooth activations are integrated with an equispaced trapezoid rule on
// [-12, 12] against the normal density instead of raw Gauss-Hermite nodes:
// for analytic integrands with complex poles off the real axis (tanh, GeLU)
// the trapezoid rule converges like exp(-c/h) while Gauss-Hermite stalls at
// ~10^-4 for variances near 10. The node-count parameter m of the rule still
// controls resolution (4m + 1 points), so refinement semantics carry over.
struct DensityRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;  // h * normal density, sums to ~1
};

const DensityRule& trapezoid_for(int m) {
  thread_local int cached_m = -1;
  thread_local DensityRule rule;
  if (cached_m == m) return rule;
  const int n = 4 * m + 1;
  const double lim = 12.0;
  const double h = 2.0 * lim / (n - 1);
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = -lim + i * h;
    rule.nodes[i] = x;
    rule.weights[i] =
        h * 0.39894228040143267794 * std::exp(-0.5 * x * x);
  }
  cached_m = m;
  return rule;
}

double expectation_1d(const Nonlinearity& act, double var,
                      const QuadratureRule& rule) {
  if (var <= kDegenerateVar) return act.value(0.0);
  const DensityRule& tr = trapezoid_for(rule.m);
  const double s = std::sqrt(var);
  double acc = 0.0;
  for (int i = 0; i < tr.nodes.size(); ++i)
    acc += tr.weights[i] * act.value(s * tr.nodes[i]);
  return acc;
}

}  // namespace

std::string kernel_method_name(KernelMethod m) {
  switch (m) {
    case KernelMethod::ClosedForm: return "closed-form";
    case KernelMethod::Quadrature: return "quadrature";
    case KernelMethod::FiniteDifference: return "finite-difference";
    case KernelMethod::MonteCarlo: return "monte-carlo";
  }
  return "unknown";
}

QuadratureRule QuadratureRule::gauss_hermite(int m) {
  if (m < 1) throw std::invalid_argument("node count must be >= 1");
  QuadratureRule r;
  r.m = m;
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite
  // polynomials: zero diagonal, off-diagonal sqrt(k).
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd sub(m - 1 > 0 ? m - 1 : 0);
  for (int k = 1; k < m; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub);
  r.nodes = es.eigenvalues();
  r.weights.resize(m);
  for (int i = 0; i < m; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    r.weights[i] = v0 * v0;  // total mass 1 for the normal weight
  }
  return r;
}

double gaussian_pair_expectation(double kaa, double kbb, double kab,
                                 const Nonlinearity& act,
                                 const QuadratureRule& rule, bool* clipped) {
  if (clipped) *clipped = false;
  kaa = std::max(kaa, 0.0);
  kbb = std::max(kbb, 0.0);
  const double bound = std::sqrt(kaa * kbb);
  if (std::abs(kab) > bound) {
    if (clipped && std::abs(kab) > bound * (1.0 + 1e-14) + 1e-300)
      *clipped = true;
    kab = std::clamp(kab, -bound, bound);
  }

  switch (act.tag) {
    case ActTag::Identity:
      return kab;
    case ActTag::Polynomial:
      return polynomial_pair(act.coeffs, kaa, kbb, kab);
    case ActTag::ReLU: {
      if (kaa <= 0.0 || kbb <= 0.0) return 0.0;
      return bound * jhat(kab / bound);
    }
    case ActTag::LeakyReLU: {
      if (kaa <= 0.0 || kbb <= 0.0) return 0.0;
      const double a = act.slope;
      return a * kab + (1.0 - a) * (1.0 - a) * bound * jhat(kab / bound);
    }
    default:
      break;
  }

  // Smooth / custom path: tensor Gauss-Hermite after the Cholesky
  // substitution u = sqrt(kaa) x1, v = (kab/sqrt(kaa)) x1 + sv x2.
  if (kaa <= kDegenerateVar)
    return act.value(0.0) * expectation_1d(act, kbb, rule);
  if (kbb <= kDegenerateVar)
    return act.value(0.0) * expectation_1d(act, kaa, rule);

  const DensityRule& tr = trapezoid_for(rule.m);
  const int n = static_cast<int>(tr.nodes.size());
  const double su = std::sqrt(kaa);
  const double sv = std::sqrt(std::max(0.0, kbb - kab * kab / kaa));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = su * tr.nodes[i];
    const double mv = (kab / su) * tr.nodes[i];
    double inner;
    if (sv <= 1e-150) {
      inner = act.value(mv);
    } else {
      inner = 0.0;
      for (int j = 0; j < n; ++j)
        inner += tr.weights[j] * act.value(mv + sv * tr.nodes[j]);
    }
    acc += tr.weights[i] * act.value(u) * inner;
  }
  return acc;
}

double recursion_step(const Eigen::Matrix2d& k_prev, const NetworkConfig& cfg,
                      const QuadratureRule& rule) {
  const double kaa = k_prev(0, 0), kbb = k_prev(1, 1);
  const double kab = 0.5 * (k_prev(0, 1) + k_prev(1, 0));
  const double scale = std::max({1.0, std::abs(kaa), std::abs(kbb)});
  if (kaa < -kPsdTol * scale || kbb < -kPsdTol * scale ||
      kaa * kbb - kab * kab < -kPsdTol * scale * scale) {
    std::ostringstream msg;
    msg << "covariance block is not PSD: [[" << kaa << ", " << kab << "], ["
        << kab << ", " << kbb << "]]";
    throw std::invalid_argument(msg.str());
  }
  return cfg.cb + cfg.cw * gaussian_pair_expectation(kaa, kbb, kab, cfg.act, rule);
}

double pair_kernel(const NetworkConfig& cfg, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y, int layer,
                   const QuadratureRule& rule) {
  if (layer < 1 || layer > cfg.depth + 1)
    throw std::invalid_argument("layer out of range");
  const double s0 = cfg.cw / cfg.input_dim();
  double kaa = cfg.cb + s0 * x.dot(x);
  double kbb = cfg.cb + s0 * y.dot(y);
  double kab = cfg.cb + s0 * x.dot(y);
  for (int t = 2; t <= layer; ++t) {
    const double naa =
        cfg.cb + cfg.cw * gaussian_pair_expectation(kaa, kaa, kaa, cfg.act, rule);
    const double nbb =
        cfg.cb + cfg.cw * gaussian_pair_expectation(kbb, kbb, kbb, cfg.act, rule);
    const double nab =
        cfg.cb + cfg.cw * gaussian_pair_expectation(kaa, kbb, kab, cfg.act, rule);
    kaa = naa;
    kbb = nbb;
    kab = nab;
  }
  return kab;
}

Eigen::MatrixXd kernel_matrix(const NetworkConfig& cfg,
                              const Eigen::MatrixXd& points, int layer,
                              const QuadratureRule& rule) {
  if (layer < 1 || layer > cfg.depth + 1)
    throw std::invalid_argument("layer out of range");
  if (points.rows() != cfg.input_dim())
    throw std::invalid_argument("input dimension mismatch");
  const int m = static_cast<int>(points.cols());
  Eigen::MatrixXd k =
      (cfg.cw / cfg.input_dim()) * (points.transpose() * points);
  k.array() += cfg.cb;
  for (int t = 2; t <= layer; ++t) {
    Eigen::MatrixXd next(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = i; j < m; ++j) {
        next(i, j) = next(j, i) =
            cfg.cb + cfg.cw * gaussian_pair_expectation(k(i, i), k(j, j),
                                                        k(i, j), cfg.act, rule);
      }
    }
    k.swap(next);
  }
  return k;
}

namespace {

// Pair kernel that also reports whether the arc-cosine correlation came
// within rounding distance of +-1 anywhere along the recursion (the
// kink-crossing situation that makes finite differences unreliable for
// piecewise-linear activations).
double pair_kernel_tracked(const NetworkConfig& cfg, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& y, int layer,
                           const QuadratureRule& rule, bool* near_kink) {
  const double s0 = cfg.cw / cfg.input_dim();
  double kaa = cfg.cb + s0 * x.dot(x);
  double kbb = cfg.cb + s0 * y.dot(y);
  double kab = cfg.cb + s0 * x.dot(y);
  for (int t = 2; t <= layer; ++t) {
    if (near_kink && cfg.act.is_piecewise_linear()) {
      const double bound = std::sqrt(std::max(kaa, 0.0) * std::max(kbb, 0.0));
      if (bound > 0.0 && std::abs(kab) > bound * (1.0 - 1e-6))
        *near_kink = true;
    }
    const double naa =
        cfg.cb + cfg.cw * gaussian_pair_expectation(kaa, kaa, kaa, cfg.act, rule);
    const double nbb =
        cfg.cb + cfg.cw * gaussian_pair_expectation(kbb, kbb, kbb, cfg.act, rule);
    const double nab =
        cfg.cb + cfg.cw * gaussian_pair_expectation(kaa, kbb, kab, cfg.act, rule);
    kaa = naa;
    kbb = nbb;
    kab = nab;
  }
  return kab;
}

}  // namespace

KernelTable limit_kernel(const NetworkConfig& cfg, const InputSet& inputs,
                         const QuadratureRule& rule) {
  cfg.validate();
  inputs.validate(cfg);
  const int a = inputs.num_inputs();
  const int p = inputs.order >= 1 ? inputs.num_directions() : 0;
  const int m = a * (1 + p);
  const int num_layers = cfg.depth + 1;

  KernelTable table;
  table.num_inputs = a;
  table.num_directions = p;
  table.order = inputs.order;
  table.quadrature_nodes = rule.m;
  table.layers.assign(num_layers, Eigen::MatrixXd::Zero(m, m));
  table.methods.assign(
      num_layers,
      Eigen::MatrixXi::Constant(m, m,
                                static_cast<int>(KernelMethod::ClosedForm)));
  table.unreliable.assign(
      num_layers,
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(m, m,
                                                                    false));
  for (int al = 0; al < a; ++al)
    if (inputs.inputs.col(al).norm() == 0.0 && cfg.cb == 0.0)
      table.degenerate_input = true;

  // Layer 1: exact bilinear base case for every entry.
  const double s0 = cfg.cw / cfg.input_dim();
  auto base_vector = [&](int k) -> Eigen::VectorXd {
    const int j = k / a, alpha = k % a;
    return j == 0 ? inputs.inputs.col(alpha) : inputs.directions.col(j - 1);
  };
  for (int k1 = 0; k1 < m; ++k1)
    for (int k2 = k1; k2 < m; ++k2) {
      double v = s0 * base_vector(k1).dot(base_vector(k2));
      if (k1 < a && k2 < a) v += cfg.cb;
      table.layers[0](k1, k2) = table.layers[0](k2, k1) = v;
    }

  const bool closed_identity_block =
      cfg.act.tag == ActTag::Identity || cfg.act.tag == ActTag::Polynomial ||
      cfg.act.is_piecewise_linear();
  const KernelMethod id_method = closed_identity_block
                                     ? KernelMethod::ClosedForm
                                     : KernelMethod::Quadrature;

  // Identity-block recursion for layers >= 2.
  for (int ell = 2; ell <= num_layers; ++ell) {
    const Eigen::MatrixXd& prev = table.layers[ell - 2];
    Eigen::MatrixXd& cur = table.layers[ell - 1];
    for (int al = 0; al < a; ++al)
      for (int be = al; be < a; ++be) {
        bool clip = false;
        cur(al, be) = cur(be, al) =
            cfg.cb + cfg.cw * gaussian_pair_expectation(prev(al, al),
                                                        prev(be, be),
                                                        prev(al, be), cfg.act,
                                                        rule, &clip);
        if (clip) table.correlation_clipped = true;
        table.methods[ell - 1](al, be) = static_cast<int>(id_method);
        table.methods[ell - 1](be, al) = static_cast<int>(id_method);
      }
  }

  if (p == 0 || num_layers < 2) return table;

  // Derivative entries for layers >= 2.
  const double input_scale =
      std::max(1.0, std::sqrt(inputs.inputs.squaredNorm() / a));
  const double h = 1e-4 * input_scale;
  const bool pl = cfg.act.is_piecewise_linear();
  const double pl_layer_scale =
      cfg.cw * (1.0 + cfg.act.slope * cfg.act.slope) / 2.0;

  for (int ell = 2; ell <= num_layers; ++ell) {
    Eigen::MatrixXd& cur = table.layers[ell - 1];
    auto set_entry = [&](int k1, int k2, double v, KernelMethod meth,
                         bool bad) {
      cur(k1, k2) = cur(k2, k1) = v;
      table.methods[ell - 1](k1, k2) = static_cast<int>(meth);
      table.methods[ell - 1](k2, k1) = static_cast<int>(meth);
      if (bad) {
        table.unreliable[ell - 1](k1, k2) = true;
        table.unreliable[ell - 1](k2, k1) = true;
      }
    };
    const double pl_factor = std::pow(pl_layer_scale, ell - 1) * s0;

    for (int k1 = 0; k1 < m; ++k1) {
      for (int k2 = k1; k2 < m; ++k2) {
        const int j1 = k1 / a, a1 = k1 % a;
        const int j2 = k2 / a, a2 = k2 % a;
        if (j1 == 0 && j2 == 0) continue;  // identity block already done

        // Piecewise-linear with C_b = 0 and a shared input: first-degree
        // homogeneity gives the derivative entries in closed form.
        if (pl && cfg.cb == 0.0 && a1 == a2) {
          const Eigen::VectorXd u1 = j1 == 0 ? inputs.inputs.col(a1)
                                             : inputs.directions.col(j1 - 1);
          const Eigen::VectorXd u2 = j2 == 0 ? inputs.inputs.col(a2)
                                             : inputs.directions.col(j2 - 1);
          set_entry(k1, k2, pl_factor * u1.dot(u2), KernelMethod::ClosedForm,
                    false);
          continue;
        }

        // Central finite differences of the pair kernel.
        const Eigen::VectorXd x1 = inputs.inputs.col(a1);
        const Eigen::VectorXd x2 = inputs.inputs.col(a2);
        bool kink = false;
        double v;
        if (j1 == 0) {
          const Eigen::VectorXd d = h * inputs.directions.col(j2 - 1);
          v = (pair_kernel_tracked(cfg, x1, x2 + d, ell, rule, &kink) -
               pair_kernel_tracked(cfg, x1, x2 - d, ell, rule, &kink)) /
              (2.0 * h);
        } else if (j2 == 0) {
          const Eigen::VectorXd d = h * inputs.directions.col(j1 - 1);
          v = (pair_kernel_tracked(cfg, x1 + d, x2, ell, rule, &kink) -
               pair_kernel_tracked(cfg, x1 - d, x2, ell, rule, &kink)) /
              (2.0 * h);
        } else {
          const Eigen::VectorXd d1 = h * inputs.directions.col(j1 - 1);
          const Eigen::VectorXd d2 = h * inputs.directions.col(j2 - 1);
          v = (pair_kernel_tracked(cfg, x1 + d1, x2 + d2, ell, rule, &kink) -
               pair_kernel_tracked(cfg, x1 + d1, x2 - d2, ell, rule, &kink) -
               pair_kernel_tracked(cfg, x1 - d1, x2 + d2, ell, rule, &kink) +
               pair_kernel_tracked(cfg, x1 - d1, x2 - d2, ell, rule, &kink)) /
              (4.0 * h * h);
        }
        set_entry(k1, k2, v, KernelMethod::FiniteDifference, pl && kink);
      }
    }
  }
  return table;
}

NondegeneracyReport nondegeneracy_check(const KernelTable& table, int q,
                                        double tolerance) {
  if (q < 0 || q > table.order)
    throw std::invalid_argument("order q not available in table");
  const int block = q == 0 ? table.num_inputs : table.num_entries();
  NondegeneracyReport rep;
  rep.pass = true;
  for (const Eigen::MatrixXd& layer : table.layers) {
    Eigen::MatrixXd sub = layer.topLeftCorner(block, block);
    sub = 0.5 * (sub + sub.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sub,
                                                      Eigen::EigenvaluesOnly);
    const double min_eig = es.eigenvalues().minCoeff();
    const double tol =
        tolerance >= 0.0 ? tolerance
                         : 1e-8 * std::max(0.0, sub.diagonal().maxCoeff());
    rep.min_eigenvalue.push_back(min_eig);
    rep.layer_pass.push_back(min_eig > tol);
    rep.tolerance = tol;
    if (min_eig <= tol) rep.pass = false;
  }
  return rep;
}

std::string KernelTable::to_json() const {
  nlohmann::json j;
  j["num_inputs"] = num_inputs;
  j["num_directions"] = num_directions;
  j["order"] = order;
  j["degenerate_input"] = degenerate_input;
  j["correlation_clipped"] = correlation_clipped;
  j["quadrature_nodes"] = quadrature_nodes;
  j["index_convention"] =
      "entry k = j * num_inputs + alpha; j = 0 identity, j >= 1 direction j-1";
  nlohmann::json jl = nlohmann::json::array();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    nlohmann::json entry;
    entry["layer"] = static_cast<int>(l + 1);
    const Eigen::MatrixXd& k = layers[l];
    std::vector<double> flat(k.size());
    std::vector<std::string> meth(k.size());
    std::vector<bool> bad(k.size());
    const int m = static_cast<int>(k.rows());
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) {
        flat[r * m + c] = k(r, c);  // row-major
        meth[r * m + c] =
            kernel_method_name(static_cast<KernelMethod>(methods[l](r, c)));
        bad[r * m + c] = unreliable[l](r, c);
      }
    entry["matrix"] = flat;
    entry["method"] = meth;
    entry["unreliable"] = bad;
    jl.push_back(entry);
  }
  j["layers"] = jl;
  return j.dump(2);
}

}  // namespace nngauge
