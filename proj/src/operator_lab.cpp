#include "nngauge/operator_lab.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "nngauge/rng.hpp"

namespace nngauge {

namespace {

double ball_volume(int d, double r) {
  return std::pow(3.14159265358979323846, 0.5 * d) /
         std::tgamma(0.5 * d + 1.0) * std::pow(r, d);
}

Eigen::MatrixXd psd_sqrt_clip(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double trace_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    acc += std::sqrt(std::max(0.0, es.eigenvalues()[i]));
  return acc;
}

void check_same_shape(const DiscreteOperator& a, const DiscreteOperator& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("operator dimension mismatch");
}

}  // namespace

Grid Grid::ball(const Eigen::VectorXd& center, double radius,
                int nodes_per_dim, int order,
                const Eigen::MatrixXd& directions, int output_dim) {
  if (radius <= 0.0) throw std::invalid_argument("radius must be > 0");
  if (nodes_per_dim < 1)
    throw std::invalid_argument("need >= 1 node per dimension");
  const int d = static_cast<int>(center.size());
  if (d < 1 || d > 6)
    throw std::invalid_argument("grid dimension must be in 1..6");

  Grid g;
  g.center = center;
  g.radius = radius;
  g.order = order;
  g.directions = directions.size() > 0 ? directions : Eigen::MatrixXd(d, 0);
  g.output_dim = output_dim;

  const double cell = 2.0 * radius / nodes_per_dim;
  std::vector<Eigen::VectorXd> inside;
  std::vector<int> idx(d, 0);
  const long long total = static_cast<long long>(std::pow(
      static_cast<double>(nodes_per_dim), d));
  for (long long flat = 0; flat < total; ++flat) {
    long long rem = flat;
    Eigen::VectorXd x(d);
    for (int k = 0; k < d; ++k) {
      const int i = static_cast<int>(rem % nodes_per_dim);
      rem /= nodes_per_dim;
      x[k] = center[k] - radius + (i + 0.5) * cell;
    }
    if ((x - center).norm() < radius) inside.push_back(x);
  }
  if (inside.empty())
    throw std::invalid_argument("no grid nodes fell inside the ball");

  g.nodes.resize(d, static_cast<int>(inside.size()));
  for (std::size_t i = 0; i < inside.size(); ++i) g.nodes.col(i) = inside[i];
  // Uniform cell weights renormalized to the exact ball volume.
  g.weights = Eigen::VectorXd::Constant(
      static_cast<int>(inside.size()),
      ball_volume(d, radius) / static_cast<double>(inside.size()));
  g.validate();
  return g;
}

InputSet Grid::input_set() const {
  InputSet in;
  in.inputs = nodes;
  in.directions = directions;
  in.order = order;
  return in;
}

void Grid::validate() const {
  if (center.norm() < radius)
    throw std::invalid_argument("domain ball must not contain the origin");
  if (size() < 1) throw std::invalid_argument("grid is empty");
  if (weights.size() != size())
    throw std::invalid_argument("weight/node count mismatch");
  if (weights.minCoeff() <= 0.0)
    throw std::invalid_argument("weights must be positive");
  const double vol = ball_volume(static_cast<int>(center.size()), radius);
  if (std::abs(weights.sum() - vol) > 1e-8 * vol)
    throw std::invalid_argument("weights must sum to the ball volume");
  for (int i = 0; i < size(); ++i)
    if ((nodes.col(i) - center).norm() >= radius)
      throw std::invalid_argument("node outside the open ball");
  if (order < 0 || order > 1)
    throw std::invalid_argument("derivative order must be 0 or 1");
  if (order == 1 && directions.cols() < 1)
    throw std::invalid_argument("order 1 requires directions");
  if (output_dim < 1) throw std::invalid_argument("output_dim must be >= 1");
}

std::uint64_t Grid::hash() const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  auto mix_mat = [&](const Eigen::MatrixXd& m) {
    mix_bytes(m.data(), sizeof(double) * m.size());
  };
  mix_mat(nodes);
  mix_bytes(weights.data(), sizeof(double) * weights.size());
  mix_bytes(center.data(), sizeof(double) * center.size());
  mix_bytes(&radius, sizeof(radius));
  mix_mat(directions);
  mix_bytes(&order, sizeof(order));
  mix_bytes(&output_dim, sizeof(output_dim));
  return h;
}

DiscreteOperator discretize(const Eigen::MatrixXd& kernel_entries,
                            const Grid& grid) {
  grid.validate();
  const int m = grid.block_dim();
  if (kernel_entries.rows() != m || kernel_entries.cols() != m)
    throw std::invalid_argument("kernel entry matrix has the wrong size");
  const double scale = std::max(1.0, kernel_entries.norm());
  if ((kernel_entries - kernel_entries.transpose()).cwiseAbs().maxCoeff() >
      1e-8 * scale)
    throw std::invalid_argument("kernel entries must be symmetric");

  DiscreteOperator op;
  op.grid_size = grid.size();
  op.entries_per_node = grid.entries_per_node();
  op.output_dim = grid.output_dim;
  op.grid_hash = grid.hash();
  op.weights.resize(m);
  for (int j = 0; j < grid.entries_per_node(); ++j)
    for (int i = 0; i < grid.size(); ++i)
      op.weights[j * grid.size() + i] = grid.weights[i];

  Eigen::VectorXd sw = op.weights.cwiseSqrt();
  Eigen::MatrixXd block =
      sw.asDiagonal() * (0.5 * (kernel_entries + kernel_entries.transpose())) *
      sw.asDiagonal();
  block = 0.5 * (block + block.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block);
  const double tr = std::max(0.0, block.trace());
  if (es.eigenvalues().minCoeff() < -1e-8 * std::max(tr, 1e-300))
    throw std::invalid_argument(
        "kernel is negative beyond tolerance; not a covariance");
  Eigen::VectorXd ev = es.eigenvalues();
  bool dirty = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] < 0.0) {
      ev[i] = 0.0;
      dirty = true;
    }
  if (dirty) {
    Eigen::MatrixXd repaired = es.eigenvectors() * ev.asDiagonal() *
                               es.eigenvectors().transpose();
    op.repair_norm = (repaired - block).norm();
    block = 0.5 * (repaired + repaired.transpose()).eval();
  }

  // Expand over the output multiplicity as a block-diagonal matrix.
  const int n = m * grid.output_dim;
  op.mat = Eigen::MatrixXd::Zero(n, n);
  for (int o = 0; o < grid.output_dim; ++o)
    op.mat.block(o * m, o * m, m, m) = block;
  return op;
}

SpectralDecomp spectral(const DiscreteOperator& op) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.mat);
  const int n = op.dim();
  SpectralDecomp d;
  d.eigenvalues.resize(n);
  d.eigenvectors.resize(n, n);
  for (int i = 0; i < n; ++i) {  // descending order
    d.eigenvalues[i] = es.eigenvalues()[n - 1 - i];
    d.eigenvectors.col(i) = es.eigenvectors().col(n - 1 - i);
  }
  const Eigen::MatrixXd rec = d.eigenvectors * d.eigenvalues.asDiagonal() *
                              d.eigenvectors.transpose();
  if ((rec - op.mat).norm() > 1e-8 * std::max(1e-300, op.mat.norm()))
    throw std::logic_error("spectral reconstruction failed");
  return d;
}

std::string spectrum_csv(const SpectralDecomp& decomp) {
  std::string out = "index,eigenvalue\n";
  for (Eigen::Index i = 0; i < decomp.eigenvalues.size(); ++i)
    out += std::to_string(i + 1) + "," +
           std::to_string(decomp.eigenvalues[i]) + "\n";
  return out;
}

PowersStormerReport powers_stormer(const DiscreteOperator& s1,
                                   const DiscreteOperator& s2) {
  check_same_shape(s1, s2);
  const Eigen::MatrixXd r1 = psd_sqrt_clip(s1.mat);
  const Eigen::MatrixXd r2 = psd_sqrt_clip(s2.mat);
  PowersStormerReport rep;
  rep.lhs = (r1 - r2).norm();
  rep.rhs = std::sqrt(std::abs(s1.trace() - s2.trace())) +
            std::sqrt(2.0) * std::pow((s1.mat - s2.mat).norm(), 0.25) *
                std::sqrt(std::min(r1.trace(), r2.trace()));
  if (rep.lhs > rep.rhs + 1e-8)
    throw std::logic_error("Powers-Stormer inequality violated numerically");
  return rep;
}

double gelbrich_w2(const DiscreteOperator& s1, const DiscreteOperator& s2) {
  check_same_shape(s1, s2);
  return (psd_sqrt_clip(s1.mat) - psd_sqrt_clip(s2.mat)).norm();
}

double d2_bound(const DiscreteOperator& s1, const DiscreteOperator& s2) {
  check_same_shape(s1, s2);
  return 0.5 * (s1.mat - s2.mat).norm();
}

FunctionalBounds functional_w2_bound(
    const std::vector<Eigen::MatrixXd>& sigma_draws,
    const DiscreteOperator& k, const Grid& grid) {
  if (sigma_draws.empty())
    throw std::invalid_argument("need at least one draw");
  if (grid.hash() != k.grid_hash)
    throw std::invalid_argument("grid mismatch between draws and K");
  const int m = grid.block_dim();

  // Recover the unweighted kernel block from the weighted matrix.
  Eigen::VectorXd sw = k.weights.cwiseSqrt();
  Eigen::MatrixXd k_unw = k.mat.topLeftCorner(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) k_unw(i, j) /= sw[i] * sw[j];

  const double mult = static_cast<double>(k.output_dim);
  const int s = static_cast<int>(sigma_draws.size());
  std::vector<double> bs(s), cs(s);
  for (int t = 0; t < s; ++t) {
    const Eigen::MatrixXd& sig = sigma_draws[t];
    if (sig.rows() != m || sig.cols() != m)
      throw std::invalid_argument("draw has the wrong grid size");
    double b = 0.0, c = 0.0;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        const double diff = sig(i, j) - k_unw(i, j);
        b += k.weights[i] * k.weights[j] * diff * diff;
      }
      const double dd = sig(i, i) - k_unw(i, i);
      c += k.weights[i] * dd * dd;
    }
    bs[t] = mult * b;
    cs[t] = mult * c;
  }

  double bsum = 0.0, csum = 0.0;
  for (int t = 0; t < s; ++t) {
    bsum += bs[t];
    csum += cs[t];
  }
  auto d2_of = [](double b) { return 0.5 * std::sqrt(std::max(0.0, b)); };
  auto w2_of = [](double b, double c) {
    return std::pow(std::max(0.0, c), 0.25) +
           std::sqrt(2.0) * std::pow(std::max(0.0, b), 0.125);
  };

  FunctionalBounds out;
  out.b_n = bsum / s;
  out.c_n = csum / s;
  out.d2_rhs = d2_of(out.b_n);
  out.w2_rhs = w2_of(out.b_n, out.c_n);
  if (s > 1) {
    double d2s = 0.0, d2ss = 0.0, w2s = 0.0, w2ss = 0.0;
    for (int t = 0; t < s; ++t) {
      const double bl = (bsum - bs[t]) / (s - 1);
      const double cl = (csum - cs[t]) / (s - 1);
      const double d2i = d2_of(bl), w2i = w2_of(bl, cl);
      d2s += d2i;
      d2ss += d2i * d2i;
      w2s += w2i;
      w2ss += w2i * w2i;
    }
    auto jack = [s](double sum, double sum2) {
      const double mean = sum / s;
      return std::sqrt(std::max(0.0, (sum2 / s - mean * mean) * (s - 1)));
    };
    out.d2_rhs_se = jack(d2s, d2ss);
    out.w2_rhs_se = jack(w2s, w2ss);
  }
  return out;
}

SummabilityReport eigen_summability(const DiscreteOperator& k, double p) {
  if (p <= 0.0) throw std::invalid_argument("exponent must be > 0");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k.mat,
                                                    Eigen::EigenvaluesOnly);
  const int n = k.dim();
  std::vector<double> lam(n);
  for (int i = 0; i < n; ++i)
    lam[i] = std::max(0.0, es.eigenvalues()[n - 1 - i]);

  SummabilityReport rep;
  rep.exponent_p = p;
  for (int cut : {std::max(1, n / 4), std::max(1, n / 2), n}) {
    double acc = 0.0;
    for (int i = 0; i < cut; ++i) acc += std::pow(lam[i], p);
    rep.partial_sums.push_back(acc);
  }

  // Power-law fit lambda_k ~ k^beta on the mid-tail.
  const double floor_ev = 1e-14 * std::max(lam[0], 1e-300);
  const int lo = std::max(1, n / 8), hi = std::max(lo + 2, n / 2);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (int i = lo; i < std::min(hi, n); ++i) {
    if (lam[i] <= floor_ev) break;
    const double x = std::log(static_cast<double>(i + 1));
    const double y = std::log(lam[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count >= 3) {
    rep.tail_exponent = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    rep.summable_looking =
        rep.tail_exponent < 0.0 && -rep.tail_exponent * p > 1.0;
  } else {
    // Spectrum effectively finite-rank: trivially summable.
    rep.tail_exponent = 0.0;
    rep.summable_looking = true;
  }
  return rep;
}

CoupleReport couple_fields(const DiscreteOperator& k, const DiscreteOperator& s,
                           int replicas, std::uint64_t seed) {
  check_same_shape(k, s);
  if (replicas < 1) throw std::invalid_argument("replicas must be >= 1");
  const Eigen::MatrixXd rk = psd_sqrt_clip(k.mat);
  const Eigen::MatrixXd rs = psd_sqrt_clip(s.mat);
  const Eigen::MatrixXd diff = rs - rk;
  const int n = k.dim();
  const int m = static_cast<int>(k.weights.size());

  double sum = 0.0, sum2 = 0.0, sup_sum = 0.0;
  Eigen::VectorXd xi(n), d(n);
  for (int r = 0; r < replicas; ++r) {
    Rng rng(split_seed(seed, r));
    for (int i = 0; i < n; ++i) xi[i] = rng.next_gaussian();
    d.noalias() = diff * xi;
    const double nrm = d.squaredNorm();
    sum += nrm;
    sum2 += nrm * nrm;
    double sup = 0.0;
    for (int i = 0; i < n; ++i) {
      const double unw = d[i] / std::sqrt(k.weights[i % m]);
      sup = std::max(sup, std::abs(unw));
    }
    sup_sum += sup * sup;
  }
  CoupleReport rep;
  rep.empirical = sum / replicas;
  rep.predicted = diff.squaredNorm();
  rep.sup_mean = sup_sum / replicas;
  const double var = std::max(0.0, sum2 / replicas - rep.empirical * rep.empirical);
  const double se = std::sqrt(var / replicas);
  rep.z_score = se > 0.0 ? (rep.empirical - rep.predicted) / se : 0.0;
  return rep;
}

std::string DiscreteOperator::to_json() const {
  nlohmann::json j;
  j["grid_size"] = grid_size;
  j["entries_per_node"] = entries_per_node;
  j["output_dim"] = output_dim;
  j["repair_norm"] = repair_norm;
  j["grid_hash"] = grid_hash;
  j["weights"] = std::vector<double>(weights.data(),
                                     weights.data() + weights.size());
  std::vector<double> flat(mat.size());
  const int n = dim();
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) flat[r * n + c] = mat(r, c);  // row-major
  j["matrix"] = flat;
  return j.dump();
}

}  // namespace nngauge
