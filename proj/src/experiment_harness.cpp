#include "nngauge/experiment_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "nngauge/kernel_engine.hpp"
#include "nngauge/net_sampler.hpp"
#include "nngauge/rng.hpp"
#include "nngauge/stein_gauge.hpp"

namespace nngauge {

namespace {

const std::set<std::string> kKnownMetrics = {
    "tv",    "w1",     "lower",  "convex_bound_rhs", "d2_rhs",   "w2_rhs",
    "var_sigma", "kappa3", "kappa4", "mean_gap",        "bures", "synthetic"};

bool needs_grid(const std::string& m) { return m == "d2_rhs" || m == "w2_rhs"; }

constexpr int kBatches = 16;

double batch_std_error(const std::vector<double>& batch_estimates) {
  const int b = static_cast<int>(batch_estimates.size());
  double mean = 0.0;
  for (double v : batch_estimates) mean += v;
  mean /= b;
  double ss = 0.0;
  for (double v : batch_estimates) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (static_cast<double>(b) * (b - 1)));
}

}  // namespace

double default_tolerance(double target) {
  const double a = std::abs(target);
  if (a >= 3.0) return 1.0;
  if (a >= 2.0) return 0.35;
  if (a >= 1.0) return 0.2;
  if (a >= 0.5) return 0.15;
  if (a >= 0.25) return 0.1;
  return 0.06;
}

void SweepConfig::validate() const {
  if (static_cast<int>(widths.size()) < 4)
    throw std::invalid_argument("sweep needs at least 4 widths");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1 || (i > 0 && widths[i] <= widths[i - 1]))
      throw std::invalid_argument("widths must be strictly increasing");
  }
  if (replicas < 1000)
    throw std::invalid_argument("sweep needs at least 1000 replicas per width");
  if (metrics.empty()) throw std::invalid_argument("no metrics requested");
  for (const MetricSpec& m : metrics) {
    if (!kKnownMetrics.count(m.name))
      throw std::invalid_argument("unknown metric: " + m.name);
    if (needs_grid(m.name) && !use_grid)
      throw std::invalid_argument("metric " + m.name + " requires a grid");
  }
  if (use_grid) grid.validate();
  NetworkConfig cfg = net.with_hidden_width(widths.front());
  cfg.validate();
  InputSet eval = use_grid ? grid.input_set() : inputs;
  eval.validate(cfg);
}

SlopeFit fit_slope(std::vector<SweepPoint>& points) {
  SlopeFit fit;
  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int used = 0;
  for (SweepPoint& p : points) {
    if (!(p.estimate > 0.0)) {
      p.included = false;
      p.note = "excluded: non-positive estimate";
      continue;
    }
    if (p.estimate < 2.0 * p.std_error) {
      p.included = false;
      p.note = "excluded: estimate below twice its standard error";
      continue;
    }
    p.included = true;
    const double rel = std::max(p.std_error / p.estimate, 1e-12);
    const double w = 1.0 / (rel * rel);
    const double x = std::log(static_cast<double>(p.width));
    const double y = std::log(p.estimate);
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
    ++used;
  }
  fit.used_points = used;
  if (used < 3) {
    fit.insufficient = true;
    return fit;
  }
  const double delta = sw * sxx - sx * sx;
  fit.slope = (sw * sxy - sx * sy) / delta;
  fit.intercept = (sxx * sy - sx * sxy) / delta;
  fit.slope_se = std::sqrt(sw / delta);
  return fit;
}

ScalingReport run_sweep(const SweepConfig& config) {
  config.validate();
  const InputSet eval = config.use_grid ? config.grid.input_set() : config.inputs;
  const QuadratureRule rule = QuadratureRule::gauss_hermite(config.quadrature_nodes);
  const NetworkConfig cfg0 = config.net.with_hidden_width(config.widths.front());

  const KernelTable table = limit_kernel(cfg0, eval, rule);
  if (config.use_grid) {
    // Pointwise non-degeneracy: the order-q block of each grid node must be
    // invertible. The joint Gram over all nodes of a smooth kernel is
    // exponentially ill-conditioned by design, so it is not the right gate.
    const int g = eval.num_inputs();
    const int per = 1 + (eval.order >= 1 ? eval.num_directions() : 0);
    for (std::size_t l = 0; l < table.layers.size(); ++l) {
      const Eigen::MatrixXd& m = table.layers[l];
      const double tol = 1e-8 * m.diagonal().maxCoeff();
      for (int a = 0; a < g; ++a) {
        Eigen::MatrixXd block(per, per);
        for (int i = 0; i < per; ++i)
          for (int j = 0; j < per; ++j) block(i, j) = m(i * g + a, j * g + a);
        const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(block)
                              .eigenvalues()
                              .minCoeff();
        if (lo <= tol) {
          std::ostringstream os;
          os << "limit covariance fails pointwise non-degeneracy at order "
             << eval.order << ": layer " << (l + 1) << ", node " << a
             << ", min eigenvalue " << lo << " (tolerance " << tol << ")";
          throw std::runtime_error(os.str());
        }
      }
    }
  } else {
    const NondegeneracyReport nd = nondegeneracy_check(table, eval.order);
    if (!nd.pass) {
      std::ostringstream os;
      os << "limit covariance fails non-degeneracy at order " << eval.order
         << ":";
      for (std::size_t l = 0; l < nd.min_eigenvalue.size(); ++l) {
        if (!nd.layer_pass[l])
          os << " layer " << (l + 1) << " min eigenvalue "
             << nd.min_eigenvalue[l] << " (tolerance " << nd.tolerance << ")";
      }
      throw std::runtime_error(os.str());
    }
  }

  const Eigen::MatrixXd& k_limit = table.layers.back();
  const double sigma2 = k_limit(0, 0);
  const int entries = static_cast<int>(k_limit.rows());

  bool need_a = false, need_entries = false, need_func = false;
  for (const MetricSpec& m : config.metrics) {
    if (m.name == "tv" || m.name == "w1" || m.name == "lower" ||
        m.name == "var_sigma" || m.name == "kappa3" || m.name == "kappa4" ||
        m.name == "mean_gap")
      need_a = true;
    if (m.name == "convex_bound_rhs" || m.name == "bures") need_entries = true;
    if (needs_grid(m.name)) need_func = true;
  }

  SpectralFloor floor;
  if (need_entries) floor = spectral_floor(k_limit);

  // Block weights for the functional metrics (grid weight per node, repeated
  // across derivative entries) and output multiplicity.
  Eigen::VectorXd wblk;
  int mult = 1;
  if (need_func) {
    const int g = config.grid.size();
    wblk.resize(config.grid.block_dim());
    for (int j = 0; j < config.grid.entries_per_node(); ++j)
      for (int i = 0; i < g; ++i) wblk[j * g + i] = config.grid.weights[i];
    mult = config.grid.output_dim;
  }

  ScalingReport report;
  report.base_seed = config.base_seed;
  report.rng_id = kRngMixerId;
  report.quadrature_nodes = config.quadrature_nodes;
  report.replicas = config.replicas;
  report.grid_hash = config.use_grid ? config.grid.hash() : 0;

  struct WidthStats {
    std::vector<double> a;
    Eigen::MatrixXd entry_sum, entry_sumsq;
    std::vector<Eigen::MatrixXd> batch_sum, batch_sumsq;
    std::vector<int> batch_count;
    double sb = 0.0, sb2 = 0.0, sc = 0.0, sc2 = 0.0, sbc = 0.0;
  };

  std::vector<WidthStats> stats(config.widths.size());
  const int s_total = config.replicas;

  for (std::size_t wi = 0; wi < config.widths.size(); ++wi) {
    const int n = config.widths[wi];
    const NetworkConfig cfg = config.net.with_hidden_width(n);
    WidthStats& st = stats[wi];
    if (need_a) st.a.reserve(s_total);
    if (need_entries) {
      st.entry_sum = Eigen::MatrixXd::Zero(entries, entries);
      st.entry_sumsq = Eigen::MatrixXd::Zero(entries, entries);
      st.batch_sum.assign(kBatches, Eigen::MatrixXd::Zero(entries, entries));
      st.batch_sumsq.assign(kBatches, Eigen::MatrixXd::Zero(entries, entries));
      st.batch_count.assign(kBatches, 0);
    }
    const std::uint64_t seed =
        split_seed(config.base_seed, static_cast<std::uint64_t>(wi));
    for_each_cond_cov(
        cfg, eval, s_total, seed,
        [&](int k, const CondCovDraw& draw) {
          if (need_a) st.a.push_back(draw.sigma(0, 0));
          if (need_entries) {
            const int b = static_cast<int>(
                (static_cast<long long>(k) * kBatches) / s_total);
            st.entry_sum += draw.sigma;
            st.entry_sumsq += draw.sigma.cwiseProduct(draw.sigma);
            st.batch_sum[b] += draw.sigma;
            st.batch_sumsq[b] += draw.sigma.cwiseProduct(draw.sigma);
            ++st.batch_count[b];
          }
          if (need_func) {
            double bs = 0.0, cs = 0.0;
            for (int i = 0; i < entries; ++i) {
              for (int j = 0; j < entries; ++j) {
                const double d = draw.sigma(i, j) - k_limit(i, j);
                bs += wblk[i] * wblk[j] * d * d;
              }
              const double dd = draw.sigma(i, i) - k_limit(i, i);
              cs += wblk[i] * dd * dd;
            }
            bs *= mult;
            cs *= mult;
            st.sb += bs;
            st.sb2 += bs * bs;
            st.sc += cs;
            st.sc2 += cs * cs;
            st.sbc += bs * cs;
          }
        },
        config.workers);
  }

  // Per-batch slice of the A samples (contiguous replica ranges).
  auto a_batch = [&](const WidthStats& st, int b) {
    const int lo = b * s_total / kBatches;
    const int hi = (b + 1) * s_total / kBatches;
    return std::vector<double>(st.a.begin() + lo, st.a.begin() + hi);
  };

  report.all_pass = true;
  for (const MetricSpec& spec : config.metrics) {
    std::vector<SweepPoint> points;
    for (std::size_t wi = 0; wi < config.widths.size(); ++wi) {
      const int n = config.widths[wi];
      const WidthStats& st = stats[wi];
      SweepPoint p;
      p.metric = spec.name;
      p.width = n;
      if (spec.name == "synthetic") {
        p.estimate = 1.0 / n;
        p.std_error = 1e-6 / n;
      } else if (spec.name == "tv" || spec.name == "w1") {
        auto dist = [&](const std::vector<double>& a) {
          MixtureVarianceSample mix{a, sigma2, n};
          return spec.name == "tv" ? tv_mixture_vs_gaussian(mix)
                                   : w1_mixture_vs_gaussian(mix);
        };
        const DistanceEstimate full = dist(st.a);
        p.estimate = full.estimate;
        std::vector<double> be(kBatches);
        for (int b = 0; b < kBatches; ++b) be[b] = dist(a_batch(st, b)).estimate;
        // Floor the error bar at the quadrature error so that estimates at
        // the numerical noise floor are excluded rather than fitted.
        p.std_error = std::max({batch_std_error(be), full.integration_error,
                                1e-13});
      } else if (spec.name == "lower") {
        MixtureVarianceSample mix{st.a, sigma2, n};
        const LowerBoundEstimate lb = cosine_lower_bound(mix);
        p.estimate = lb.estimate;
        p.std_error = lb.std_error;
      } else if (spec.name == "var_sigma" || spec.name == "kappa3" ||
                 spec.name == "kappa4") {
        const MomentSummary mom = cumulants(st.a);
        if (spec.name == "var_sigma") {
          p.estimate = mom.k2;
          p.std_error = mom.k2_se;
        } else if (spec.name == "kappa3") {
          p.estimate = std::abs(mom.k3);
          p.std_error = mom.k3_se;
        } else {
          p.estimate = std::abs(mom.k4);
          p.std_error = mom.k4_se;
        }
      } else if (spec.name == "mean_gap") {
        double mean = 0.0;
        for (double v : st.a) mean += v;
        mean /= s_total;
        double var = 0.0;
        for (double v : st.a) var += (v - mean) * (v - mean);
        var /= (s_total - 1.0);
        p.estimate = std::abs(mean - sigma2);
        p.std_error = std::sqrt(var / s_total);
      } else if (spec.name == "convex_bound_rhs") {
        auto raw_bound = [&](const Eigen::MatrixXd& sum,
                             const Eigen::MatrixXd& sumsq, int count) {
          double var_sum = 0.0;
          for (int i = 0; i < entries; ++i)
            for (int j = 0; j < entries; ++j) {
              const double m = sum(i, j) / count;
              var_sum +=
                  std::max(0.0, (sumsq(i, j) / count - m * m) * count /
                                    (count - 1.0));
            }
          double raw = 0.0;
          convex_bound(var_sum, floor.rank, floor.lambda_plus, nullptr, &raw);
          return raw;
        };
        p.estimate = raw_bound(st.entry_sum, st.entry_sumsq, s_total);
        std::vector<double> be(kBatches);
        for (int b = 0; b < kBatches; ++b)
          be[b] = raw_bound(st.batch_sum[b], st.batch_sumsq[b],
                            st.batch_count[b]);
        p.std_error = batch_std_error(be);
      } else if (spec.name == "bures") {
        auto dist = [&](const Eigen::MatrixXd& sum, int count) {
          Eigen::MatrixXd mean = sum / count;
          mean = 0.5 * (mean + mean.transpose()).eval();
          psd_repair(mean);
          return bures_w2(mean, k_limit).w2;
        };
        p.estimate = dist(st.entry_sum, s_total);
        std::vector<double> be(kBatches);
        for (int b = 0; b < kBatches; ++b)
          be[b] = dist(st.batch_sum[b], st.batch_count[b]);
        p.std_error = batch_std_error(be);
      } else if (spec.name == "d2_rhs" || spec.name == "w2_rhs") {
        const double bm = st.sb / s_total;
        const double cm = st.sc / s_total;
        const double var_b =
            std::max(0.0, (st.sb2 / s_total - bm * bm) / (s_total - 1.0));
        const double var_c =
            std::max(0.0, (st.sc2 / s_total - cm * cm) / (s_total - 1.0));
        const double cov_bc = (st.sbc / s_total - bm * cm) / (s_total - 1.0);
        if (spec.name == "d2_rhs") {
          p.estimate = 0.5 * std::sqrt(bm);
          p.std_error = bm > 0.0 ? 0.25 * std::sqrt(var_b) / std::sqrt(bm) : 0.0;
        } else {
          p.estimate = std::pow(cm, 0.25) + std::sqrt(2.0) * std::pow(bm, 0.125);
          if (bm > 0.0 && cm > 0.0) {
            const double gb = std::sqrt(2.0) / 8.0 * std::pow(bm, -0.875);
            const double gc = 0.25 * std::pow(cm, -0.75);
            p.std_error = std::sqrt(std::max(
                0.0, gb * gb * var_b + gc * gc * var_c + 2.0 * gb * gc * cov_bc));
          }
        }
      }
      points.push_back(p);
    }

    SlopeFit fit = fit_slope(points);
    MetricFit mf;
    mf.name = spec.name;
    mf.target = spec.target;
    mf.tolerance =
        spec.tolerance > 0.0 ? spec.tolerance : default_tolerance(spec.target);
    mf.slope = fit.slope;
    mf.slope_se = fit.slope_se;
    mf.intercept = fit.intercept;
    mf.insufficient_signal = fit.insufficient;
    if (fit.insufficient) {
      mf.note = fit.used_points == 0 ? "no signal" : "insufficient signal";
      mf.pass = false;
    } else {
      const SweepPoint& last = points.back();
      const bool slope_ok = std::abs(mf.slope - mf.target) <= mf.tolerance;
      const bool precise = last.included &&
                           last.std_error <= 0.3 * std::abs(last.estimate);
      mf.pass = slope_ok && precise;
      if (!slope_ok) mf.note = "slope outside tolerance";
      if (!precise)
        mf.note += std::string(mf.note.empty() ? "" : "; ") +
                   "largest-width error bar above 30% of signal";
    }
    report.all_pass = report.all_pass && mf.pass;
    report.fits.push_back(mf);
    for (const SweepPoint& p : points) report.points.push_back(p);
  }

  return report;
}

std::string ScalingReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["base_seed"] = base_seed;
  j["rng_id"] = rng_id;
  j["quadrature_nodes"] = quadrature_nodes;
  j["replicas"] = replicas;
  j["grid_hash"] = grid_hash;
  j["all_pass"] = all_pass;
  j["points"] = nlohmann::json::array();
  for (const SweepPoint& p : points) {
    j["points"].push_back({{"metric", p.metric},
                           {"width", p.width},
                           {"estimate", p.estimate},
                           {"std_error", p.std_error},
                           {"included", p.included},
                           {"note", p.note}});
  }
  j["fits"] = nlohmann::json::array();
  for (const MetricFit& f : fits) {
    j["fits"].push_back({{"name", f.name},
                         {"slope", f.slope},
                         {"slope_se", f.slope_se},
                         {"intercept", f.intercept},
                         {"target", f.target},
                         {"tolerance", f.tolerance},
                         {"insufficient_signal", f.insufficient_signal},
                         {"pass", f.pass},
                         {"note", f.note}});
  }
  return j.dump(2);
}

ScalingReport ScalingReport::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ScalingReport r;
  const int v = j.at("schema_version").get<int>();
  if (v != r.schema_version) {
    throw std::runtime_error("scaling report schema version mismatch: got " +
                             std::to_string(v) + ", expected " +
                             std::to_string(r.schema_version));
  }
  r.base_seed = j.at("base_seed").get<std::uint64_t>();
  r.rng_id = j.at("rng_id").get<std::string>();
  r.quadrature_nodes = j.at("quadrature_nodes").get<int>();
  r.replicas = j.at("replicas").get<int>();
  r.grid_hash = j.at("grid_hash").get<std::uint64_t>();
  r.all_pass = j.at("all_pass").get<bool>();
  for (const auto& p : j.at("points")) {
    SweepPoint sp;
    sp.metric = p.at("metric").get<std::string>();
    sp.width = p.at("width").get<int>();
    sp.estimate = p.at("estimate").get<double>();
    sp.std_error = p.at("std_error").get<double>();
    sp.included = p.at("included").get<bool>();
    sp.note = p.at("note").get<std::string>();
    r.points.push_back(sp);
  }
  for (const auto& f : j.at("fits")) {
    MetricFit mf;
    mf.name = f.at("name").get<std::string>();
    mf.slope = f.at("slope").get<double>();
    mf.slope_se = f.at("slope_se").get<double>();
    mf.intercept = f.at("intercept").get<double>();
    mf.target = f.at("target").get<double>();
    mf.tolerance = f.at("tolerance").get<double>();
    mf.insufficient_signal = f.at("insufficient_signal").get<bool>();
    mf.pass = f.at("pass").get<bool>();
    mf.note = f.at("note").get<std::string>();
    r.fits.push_back(mf);
  }
  return r;
}

std::string ScalingReport::to_csv() const {
  std::ostringstream os;
  os << "metric,width,estimate,std_error,included,note\n";
  for (const SweepPoint& p : points) {
    char buf[64];
    os << p.metric << ',' << p.width << ',';
    std::snprintf(buf, sizeof(buf), "%.12g", p.estimate);
    os << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.12g", p.std_error);
    os << buf << ',' << (p.included ? "true" : "false") << ',' << p.note
       << '\n';
  }
  return os.str();
}

void persist(const ScalingReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << report.to_json() << '\n';
}

ScalingReport load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return ScalingReport::from_json(os.str());
}

std::string render_svg(const ScalingReport& report) {
  const double width = 720.0, height = 480.0;
  const double ml = 70.0, mr = 20.0, mt = 20.0, mb = 50.0;
  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const SweepPoint& p : report.points) {
    if (!(p.estimate > 0.0)) continue;
    const double x = std::log10(static_cast<double>(p.width));
    const double y = std::log10(p.estimate);
    x_lo = std::min(x_lo, x);
    x_hi = std::max(x_hi, x);
    y_lo = std::min(y_lo, y);
    y_hi = std::max(y_hi, y);
  }
  if (x_hi <= x_lo) {
    x_lo = 0.0;
    x_hi = 1.0;
  }
  if (y_hi <= y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double xpad = 0.05 * (x_hi - x_lo), ypad = 0.05 * (y_hi - y_lo);
  x_lo -= xpad;
  x_hi += xpad;
  y_lo -= ypad;
  y_hi += ypad;
  auto px = [&](double x) {
    return ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr);
  };
  auto py = [&](double y) {
    return height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb);
  };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" font-family=\"monospace\" font-size=\"11\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
     << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << (height - mb) << "\" x2=\""
     << (width - mr) << "\" y2=\"" << (height - mb)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
     << "\" y2=\"" << (height - mb) << "\" stroke=\"black\"/>\n";
  for (int d = static_cast<int>(std::ceil(x_lo)); d <= std::floor(x_hi); ++d) {
    os << "<line x1=\"" << px(d) << "\" y1=\"" << (height - mb) << "\" x2=\""
       << px(d) << "\" y2=\"" << (height - mb + 5)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << px(d) << "\" y=\"" << (height - mb + 18)
       << "\" text-anchor=\"middle\">1e" << d << "</text>\n";
  }
  for (int d = static_cast<int>(std::ceil(y_lo)); d <= std::floor(y_hi); ++d) {
    os << "<line x1=\"" << (ml - 5) << "\" y1=\"" << py(d) << "\" x2=\"" << ml
       << "\" y2=\"" << py(d) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << (ml - 8) << "\" y=\"" << (py(d) + 4)
       << "\" text-anchor=\"end\">1e" << d << "</text>\n";
  }
  os << "<text x=\"" << (width / 2) << "\" y=\"" << (height - 10)
     << "\" text-anchor=\"middle\">width n (log)</text>\n";

  const double ln10 = std::log(10.0);
  int ci = 0;
  for (const MetricFit& f : report.fits) {
    const char* color = colors[ci % 8];
    std::ostringstream series;
    double first_x = 0.0, first_y = 0.0;
    bool have_first = false;
    for (const SweepPoint& p : report.points) {
      if (p.metric != f.name || !(p.estimate > 0.0)) continue;
      const double x = std::log10(static_cast<double>(p.width));
      const double y = std::log10(p.estimate);
      series << px(x) << ',' << py(y) << ' ';
      os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y)
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      if (!have_first) {
        first_x = x;
        first_y = y;
        have_first = true;
      }
    }
    os << "<polyline points=\"" << series.str() << "\" fill=\"none\" stroke=\""
       << color << "\" stroke-width=\"1.5\"/>\n";
    if (!f.insufficient_signal) {
      // Fitted line: log10 y = (intercept + slope * ln n) / ln 10.
      const double ya = (f.intercept + f.slope * x_lo * ln10) / ln10;
      const double yb = (f.intercept + f.slope * x_hi * ln10) / ln10;
      os << "<line x1=\"" << px(x_lo) << "\" y1=\"" << py(ya) << "\" x2=\""
         << px(x_hi) << "\" y2=\"" << py(yb) << "\" stroke=\"" << color
         << "\" stroke-dasharray=\"5,3\"/>\n";
    }
    if (have_first) {
      // Target-slope reference anchored at the first point.
      const double ya = first_y + f.target * (x_lo - first_x);
      const double yb = first_y + f.target * (x_hi - first_x);
      os << "<line x1=\"" << px(x_lo) << "\" y1=\"" << py(ya) << "\" x2=\""
         << px(x_hi) << "\" y2=\"" << py(yb)
         << "\" stroke=\"#aaaaaa\" stroke-dasharray=\"2,4\"/>\n";
    }
    os << "<text x=\"" << (width - mr - 5) << "\" y=\"" << (mt + 14 * (ci + 1))
       << "\" text-anchor=\"end\" fill=\"" << color << "\">" << f.name
       << " slope " << f.slope << " (target " << f.target << ")</text>\n";
    ++ci;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace nngauge
