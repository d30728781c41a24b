#include "nngauge/stein_gauge.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nngauge {

namespace {

constexpr int kGridPoints = 8193;  // composite Simpson, even interval count
constexpr double kDomainMultiplier = 12.0;
constexpr int kMaxGroups = 4096;

double normal_pdf(double t, double var) {
  return std::exp(-0.5 * t * t / var) / std::sqrt(6.283185307179586 * var);
}

double normal_cdf(double t, double var) {
  return 0.5 * std::erfc(-t / std::sqrt(2.0 * var));
}

double upper_tail(double t, double var) {
  return 0.5 * std::erfc(t / std::sqrt(2.0 * var));
}

// Compressed mixture: zero-variance draws become a point mass at the
// origin; the nonzero variances are grouped into at most kMaxGroups
// equal-count bins (exact when there are fewer draws than bins).
struct CompressedMixture {
  double atom_mass = 0.0;
  std::vector<double> vars;
  std::vector<double> masses;
};

CompressedMixture compress(const MixtureVarianceSample& mix) {
  CompressedMixture c;
  std::vector<double> nz;
  nz.reserve(mix.a.size());
  for (double v : mix.a) {
    if (v == 0.0)
      c.atom_mass += 1.0;
    else
      nz.push_back(v);
  }
  const double s = static_cast<double>(mix.a.size());
  c.atom_mass /= s;
  std::sort(nz.begin(), nz.end());
  const int n = static_cast<int>(nz.size());
  const int groups = std::min(n, kMaxGroups);
  c.vars.reserve(groups);
  c.masses.reserve(groups);
  for (int g = 0; g < groups; ++g) {
    const int lo = static_cast<int>(static_cast<long long>(n) * g / groups);
    const int hi =
        static_cast<int>(static_cast<long long>(n) * (g + 1) / groups);
    if (lo >= hi) continue;
    double sum = 0.0;
    for (int i = lo; i < hi; ++i) sum += nz[i];
    c.vars.push_back(sum / (hi - lo));
    c.masses.push_back((hi - lo) / s);
  }
  return c;
}

// Composite Simpson over uniformly sampled values; also returns the
// half-resolution result for a practical error estimate.
double simpson(const std::vector<double>& f, double h, double* half) {
  const int n = static_cast<int>(f.size());
  double acc = f[0] + f[n - 1];
  for (int i = 1; i < n - 1; ++i) acc += f[i] * (i % 2 == 1 ? 4.0 : 2.0);
  if (half) {
    double hacc = f[0] + f[n - 1];
    for (int i = 2; i < n - 1; i += 2)
      hacc += f[i] * (i % 4 == 2 ? 4.0 : 2.0);
    *half = hacc * (2.0 * h) / 3.0;
  }
  return acc * h / 3.0;
}

struct GridSpec {
  double lim = 0.0;
  double h = 0.0;
};

GridSpec grid_for(const MixtureVarianceSample& mix) {
  double vmax = mix.sigma2;
  for (double v : mix.a) vmax = std::max(vmax, v);
  GridSpec g;
  g.lim = kDomainMultiplier * std::sqrt(vmax);
  g.h = 2.0 * g.lim / (kGridPoints - 1);
  return g;
}

double truncation_bound(const CompressedMixture& c, double sigma2,
                        double lim) {
  double tail = 2.0 * upper_tail(lim, sigma2);
  for (std::size_t g = 0; g < c.vars.size(); ++g)
    tail += 2.0 * c.masses[g] * upper_tail(lim, c.vars[g]);
  return tail;
}

// int_T^inf P(|X| > t) dt for X ~ N(0, var), both tails.
double integrated_tail(double lim, double var) {
  return 2.0 * std::max(0.0, var * normal_pdf(lim, var) -
                                 lim * upper_tail(lim, var));
}

double w1_truncation_bound(const CompressedMixture& c, double sigma2,
                           double lim) {
  double tail = integrated_tail(lim, sigma2);
  for (std::size_t g = 0; g < c.vars.size(); ++g)
    tail += c.masses[g] * integrated_tail(lim, c.vars[g]);
  return tail;
}

}  // namespace

void MixtureVarianceSample::validate() const {
  if (a.size() < 2) throw std::invalid_argument("need at least 2 draws");
  if (sigma2 <= 0.0) throw std::invalid_argument("sigma^2 must be > 0");
  for (double v : a)
    if (v < 0.0) throw std::invalid_argument("conditional variances must be >= 0");
}

DistanceEstimate tv_mixture_vs_gaussian(const MixtureVarianceSample& mix) {
  mix.validate();
  const CompressedMixture c = compress(mix);
  const GridSpec g = grid_for(mix);

  std::vector<double> f(kGridPoints);
  for (int i = 0; i < kGridPoints; ++i) {
    const double t = -g.lim + i * g.h;
    double mix_density = 0.0;
    for (std::size_t k = 0; k < c.vars.size(); ++k)
      mix_density += c.masses[k] * normal_pdf(t, c.vars[k]);
    f[i] = std::abs(mix_density - normal_pdf(t, mix.sigma2));
  }
  double half = 0.0;
  const double integral = simpson(f, g.h, &half);

  DistanceEstimate out;
  out.atom_mass = c.atom_mass;
  // The point mass at the origin and the continuous part contribute
  // additively to the total variation: TV = (atom + L1 of densities) / 2.
  out.estimate = 0.5 * (integral + c.atom_mass);
  out.integration_error =
      0.5 * (std::abs(integral - half) / 15.0 +
             truncation_bound(c, mix.sigma2, g.lim));
  if (out.estimate > 1.0) {
    out.estimate = 1.0;
    out.clipped = true;
  }
  return out;
}

DistanceEstimate w1_mixture_vs_gaussian(const MixtureVarianceSample& mix) {
  mix.validate();
  const CompressedMixture c = compress(mix);
  const GridSpec g = grid_for(mix);

  std::vector<double> f(kGridPoints);
  for (int i = 0; i < kGridPoints; ++i) {
    const double t = -g.lim + i * g.h;
    double mix_cdf = t >= 0.0 ? c.atom_mass : 0.0;
    for (std::size_t k = 0; k < c.vars.size(); ++k)
      mix_cdf += c.masses[k] * normal_cdf(t, c.vars[k]);
    f[i] = std::abs(mix_cdf - normal_cdf(t, mix.sigma2));
  }
  double half = 0.0;
  const double integral = simpson(f, g.h, &half);

  DistanceEstimate out;
  out.atom_mass = c.atom_mass;
  out.estimate = integral;
  // Tail CDF differences are bounded by the tail masses themselves.
  out.integration_error = std::abs(integral - half) / 15.0 +
                          w1_truncation_bound(c, mix.sigma2, g.lim);
  return out;
}

double kolmogorov_mixture_vs_gaussian(const MixtureVarianceSample& mix) {
  mix.validate();
  const CompressedMixture c = compress(mix);
  const GridSpec g = grid_for(mix);
  double sup = c.atom_mass;  // jump at the origin
  for (int i = 0; i < kGridPoints; ++i) {
    const double t = -g.lim + i * g.h;
    double mix_cdf = t >= 0.0 ? c.atom_mass : 0.0;
    for (std::size_t k = 0; k < c.vars.size(); ++k)
      mix_cdf += c.masses[k] * normal_cdf(t, c.vars[k]);
    sup = std::max(sup, std::abs(mix_cdf - normal_cdf(t, mix.sigma2)));
  }
  return sup;
}

SteinBounds stein_upper_bounds(double var_a, double sigma2) {
  if (sigma2 <= 0.0) throw std::invalid_argument("sigma^2 must be > 0");
  if (var_a < 0.0) throw std::invalid_argument("Var(A) must be >= 0");
  SteinBounds b;
  const double raw_tv = 8.0 * var_a / (sigma2 * sigma2);
  b.tv_bound = std::min(1.0, raw_tv);
  b.tv_clipped = raw_tv > 1.0;
  b.w1_bound = 4.0 * var_a / std::pow(sigma2, 1.5);
  return b;
}

LowerBoundEstimate cosine_lowerbound_impl(const std::vector<double>& a,
                                          double sigma2) {
  const int n = static_cast<int>(a.size());
  const double target = std::exp(-0.5 * sigma2);
  std::vector<double> e(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    e[i] = std::exp(-0.5 * a[i]);
    sum += e[i];
  }
  LowerBoundEstimate out;
  out.estimate = std::abs(sum / n - target);
  // Leave-one-out jackknife.
  double jsum = 0.0, jsum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double theta = std::abs((sum - e[i]) / (n - 1) - target);
    jsum += theta;
    jsum2 += theta * theta;
  }
  const double jmean = jsum / n;
  out.std_error =
      std::sqrt(std::max(0.0, (jsum2 / n - jmean * jmean) * (n - 1)));
  return out;
}

LowerBoundEstimate cosine_lower_bound(const MixtureVarianceSample& mix) {
  mix.validate();
  return cosine_lowerbound_impl(mix.a, mix.sigma2);
}

namespace {

struct KStats {
  double k2 = 0.0, k3 = 0.0, k4 = 0.0;
};

// k-statistics from central moment means m_r of n samples.
KStats kstats_from_moments(double n, double m2, double m3, double m4) {
  KStats k;
  k.k2 = n / (n - 1.0) * m2;
  k.k3 = n * n / ((n - 1.0) * (n - 2.0)) * m3;
  k.k4 = n * n *
         ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2) /
         ((n - 1.0) * (n - 2.0) * (n - 3.0));
  return k;
}

KStats kstats_from_raw(double n, double p1, double p2, double p3, double p4) {
  const double r1 = p1 / n, r2 = p2 / n, r3 = p3 / n, r4 = p4 / n;
  const double m2 = r2 - r1 * r1;
  const double m3 = r3 - 3.0 * r1 * r2 + 2.0 * r1 * r1 * r1;
  const double m4 = r4 - 4.0 * r1 * r3 + 6.0 * r1 * r1 * r2 -
                    3.0 * r1 * r1 * r1 * r1;
  return kstats_from_moments(n, m2, m3, m4);
}

}  // namespace

MomentSummary cumulants(const std::vector<double>& samples) {
  const int n = static_cast<int>(samples.size());
  if (n < 8) throw std::invalid_argument("need at least 8 samples");

  // Center at the grand mean first to keep the power sums well conditioned.
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= n;

  double p1 = 0, p2 = 0, p3 = 0, p4 = 0;
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    const double v = samples[i] - mean;
    y[i] = v;
    const double v2 = v * v;
    p1 += v;
    p2 += v2;
    p3 += v2 * v;
    p4 += v2 * v2;
  }
  const KStats full = kstats_from_raw(n, p1, p2, p3, p4);

  // Leave-one-out jackknife via power-sum downdates, O(n) total.
  double s2 = 0, s3 = 0, s4 = 0, ss2 = 0, ss3 = 0, ss4 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = y[i], v2 = v * v;
    const KStats k =
        kstats_from_raw(n - 1, p1 - v, p2 - v2, p3 - v2 * v, p4 - v2 * v2);
    s2 += k.k2;
    ss2 += k.k2 * k.k2;
    s3 += k.k3;
    ss3 += k.k3 * k.k3;
    s4 += k.k4;
    ss4 += k.k4 * k.k4;
  }
  auto jack_se = [n](double s, double ss) {
    const double m = s / n;
    return std::sqrt(std::max(0.0, (ss / n - m * m) * (n - 1)));
  };
  MomentSummary out;
  out.k2 = full.k2;
  out.k3 = full.k3;
  out.k4 = full.k4;
  out.k2_se = jack_se(s2, ss2);
  out.k3_se = jack_se(s3, ss3);
  out.k4_se = jack_se(s4, ss4);
  return out;
}

Cum4Report cum4_identity_check(const NetworkConfig& cfg,
                               const Eigen::VectorXd& input, int width,
                               int replicas, std::uint64_t seed) {
  if (width < 2) throw std::invalid_argument("width must be >= 2");
  if (replicas < 1000) throw std::invalid_argument("need >= 1000 replicas");
  NetworkConfig c = cfg.with_hidden_width(width);
  std::vector<PairedDraw> draws = draw_paired(c, input, replicas, seed);
  std::vector<double> sig(replicas), z(replicas);
  for (int i = 0; i < replicas; ++i) {
    sig[i] = draws[i].sigma_aa;
    z[i] = draws[i].z_out;
  }
  MomentSummary ms = cumulants(sig);
  MomentSummary mz = cumulants(z);
  Cum4Report r;
  r.lhs = 3.0 * ms.k2;
  r.lhs_se = 3.0 * ms.k2_se;
  r.rhs = mz.k4;
  r.rhs_se = mz.k4_se;
  const double denom = std::hypot(r.lhs_se, r.rhs_se);
  r.z_score = denom > 0.0 ? (r.lhs - r.rhs) / denom : 0.0;
  return r;
}

double convex_bound(double var_matrix_sum, int rank, double lambda_plus,
                    bool* clipped, double* raw) {
  if (lambda_plus <= 0.0)
    throw std::invalid_argument("lambda_plus must be > 0");
  if (rank < 1) throw std::invalid_argument("rank must be >= 1");
  if (var_matrix_sum < 0.0)
    throw std::invalid_argument("variance sum must be >= 0");
  const double value = 402.0 * (std::pow(lambda_plus, -1.5) + 1.0) *
                       std::pow(static_cast<double>(rank), 41.0 / 24.0) *
                       std::sqrt(var_matrix_sum);
  if (raw) *raw = value;
  if (clipped) *clipped = value > 1.0;
  return std::min(1.0, value);
}

SpectralFloor spectral_floor(const Eigen::MatrixXd& mean_cov) {
  Eigen::MatrixXd sym = 0.5 * (mean_cov + mean_cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym,
                                                    Eigen::EigenvaluesOnly);
  const double thr = 1e-8 * std::max(0.0, sym.trace());
  SpectralFloor f;
  double smallest = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double lam = es.eigenvalues()[i];
    if (lam > thr) {
      ++f.rank;
      if (smallest == 0.0 || lam < smallest) smallest = lam;
    }
  }
  f.lambda_plus = smallest;
  return f;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

BuresResult bures_w2(const Eigen::MatrixXd& c1, const Eigen::MatrixXd& c2) {
  if (c1.rows() != c1.cols() || c2.rows() != c2.cols() ||
      c1.rows() != c2.rows())
    throw std::invalid_argument("covariance dimension mismatch");
  const double scale = std::max({1.0, c1.norm(), c2.norm()});
  if ((c1 - c1.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale ||
      (c2 - c2.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw std::invalid_argument("covariance matrices must be symmetric");

  const Eigen::MatrixXd s1 = psd_sqrt(0.5 * (c1 + c1.transpose()));
  const Eigen::MatrixXd s2 = psd_sqrt(0.5 * (c2 + c2.transpose()));
  Eigen::MatrixXd inner = s1 * c2 * s1;
  inner = 0.5 * (inner + inner.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner,
                                                    Eigen::EigenvaluesOnly);
  double cross = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    cross += std::sqrt(std::max(0.0, es.eigenvalues()[i]));

  BuresResult r;
  r.w2 = std::sqrt(std::max(0.0, c1.trace() + c2.trace() - 2.0 * cross));
  r.hs_bound = (s1 - s2).norm();
  if (r.w2 > r.hs_bound + 1e-9)
    throw std::logic_error("Bures distance exceeded its coupling bound");
  return r;
}

VarianceAggregates variance_aggregates(const std::vector<CondCovDraw>& draws,
                                       const KernelTable& table,
                                       const Eigen::VectorXd& weights) {
  if (draws.empty()) throw std::invalid_argument("draws must be nonempty");
  const Eigen::MatrixXd& k = table.layers.back();
  const int m = static_cast<int>(k.rows());
  if (weights.size() != m)
    throw std::invalid_argument("weight/index size mismatch");
  if (weights.minCoeff() < 0.0)
    throw std::invalid_argument("weights must be nonnegative");
  for (const CondCovDraw& d : draws)
    if (d.sigma.rows() != m || d.sigma.cols() != m)
      throw std::invalid_argument("draw/table index mismatch");

  const double s = static_cast<double>(draws.size());
  VarianceAggregates out;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      double mean = 0.0, mean_sq = 0.0, msd = 0.0;
      for (const CondCovDraw& d : draws) {
        const double v = d.sigma(i, j);
        mean += v;
        mean_sq += v * v;
        const double dev = v - k(i, j);
        msd += dev * dev;
      }
      mean /= s;
      mean_sq /= s;
      msd /= s;
      const double var =
          s > 1.5 ? std::max(0.0, (mean_sq - mean * mean) * s / (s - 1.0))
                  : 0.0;
      const double w = weights[i] * weights[j];
      out.a_n += w * var;
      out.b_n += w * msd;
      if (i == j) out.c_n += weights[i] * msd;
    }
  }
  return out;
}

}  // namespace nngauge
