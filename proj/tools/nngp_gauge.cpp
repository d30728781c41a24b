// nngp_gauge: sample finite-width random networks, compute their
// infinite-width Gaussian limits, and certify the distance between the two.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "nngauge/experiment_harness.hpp"
#include "nngauge/kernel_engine.hpp"
#include "nngauge/net_sampler.hpp"
#include "nngauge/network.hpp"
#include "nngauge/operator_lab.hpp"
#include "nngauge/rng.hpp"
#include "nngauge/stein_gauge.hpp"

using nngauge::CondCovDraw;
using nngauge::Grid;
using nngauge::InputSet;
using nngauge::KernelTable;
using nngauge::NetworkConfig;
using nngauge::Nonlinearity;
using nngauge::QuadratureRule;
using nlohmann::json;

namespace {

// Registers options so that values can be merged from an optional JSON
// config file with precedence: explicit CLI flag > config file > default.
// The fully resolved values are echoed as the first output line of a run.
class MergedOptions {
 public:
  explicit MergedOptions(CLI::App* app) : app_(app) {
    app->add_option("--config", config_path_,
                    "JSON config file; explicit flags take precedence");
  }

  template <class T>
  CLI::Option* add(const std::string& flag, T& var, const std::string& desc) {
    CLI::Option* o = app_->add_option(flag, var, desc);
    entries_.push_back({flag.substr(2), o,
                        [&var](const json& v) { var = v.get<T>(); },
                        [&var]() { return json(var); }});
    return o;
  }

  CLI::Option* add_flag(const std::string& flag, bool& var,
                        const std::string& desc) {
    CLI::Option* o = app_->add_flag(flag, var, desc);
    entries_.push_back({flag.substr(2), o,
                        [&var](const json& v) { var = v.get<bool>(); },
                        [&var]() { return json(var); }});
    return o;
  }

  // Call after parsing: overlay config-file values onto unset options.
  void merge() {
    if (config_path_.empty()) return;
    std::ifstream in(config_path_);
    if (!in) throw std::runtime_error("cannot open config file: " + config_path_);
    const json cfg = json::parse(in);
    for (Entry& e : entries_)
      if (e.opt->count() == 0 && cfg.contains(e.key)) e.set(cfg.at(e.key));
  }

  json resolved() const {
    json out;
    for (const Entry& e : entries_) out[e.key] = e.get();
    return out;
  }

 private:
  struct Entry {
    std::string key;
    CLI::Option* opt;
    std::function<void(const json&)> set;
    std::function<json()> get;
  };
  CLI::App* app_;
  std::string config_path_;
  std::vector<Entry> entries_;
};

// Shared network flags.
struct NetFlags {
  std::string sigma = "tanh";
  double slope = 0.1;
  std::vector<double> coeffs;
  int depth = 2;
  double cb = 0.0;
  double cw = 1.0;
  int gh_nodes = 64;
  int workers = 0;

  void attach(MergedOptions& m) {
    m.add("--sigma", sigma,
          "activation: relu, leaky_relu, tanh, gelu, identity, polynomial");
    m.add("--slope", slope, "negative slope for leaky_relu");
    m.add("--coeffs", coeffs, "polynomial coefficients (ascending)")
        ->delimiter(',');
    m.add("--depth", depth, "number of hidden layers L");
    m.add("--cb", cb, "bias variance C_b");
    m.add("--cw", cw, "weight variance scale C_W");
    m.add("--gh-nodes", gh_nodes, "Gauss-Hermite node count");
    m.add("--workers", workers, "worker threads (0 = auto)");
  }

  Nonlinearity act() const {
    if (sigma == "leaky_relu") return Nonlinearity::leaky_relu(slope);
    if (sigma == "polynomial") return Nonlinearity::polynomial(coeffs);
    return Nonlinearity::from_name(sigma);
  }

  NetworkConfig net(int input_dim, int hidden_width = 2) const {
    NetworkConfig cfg;
    cfg.depth = depth;
    cfg.widths.assign(depth + 2, hidden_width);
    cfg.widths.front() = input_dim;
    cfg.widths.back() = 1;
    cfg.cb = cb;
    cfg.cw = cw;
    cfg.act = act();
    return cfg;
  }
};

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<long>(v.size()));
}

Eigen::MatrixXd columns_from_json(const json& arr, const char* what) {
  if (!arr.is_array() || arr.empty())
    throw std::runtime_error(std::string(what) + " must be a non-empty array");
  const auto first = arr.at(0).get<std::vector<double>>();
  Eigen::MatrixXd m(first.size(), arr.size());
  for (std::size_t c = 0; c < arr.size(); ++c) {
    const auto col = arr.at(c).get<std::vector<double>>();
    if (col.size() != first.size())
      throw std::runtime_error(std::string(what) + " entries differ in length");
    m.col(static_cast<long>(c)) = to_vector(col);
  }
  return m;
}

// Reads an input-set JSON file {"inputs": [[...], ...], "directions": [...],
// "order": 0|1}. Parse failures report line/column; exit code 1 at the caller.
InputSet read_input_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  const std::string text = os.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw std::runtime_error(path + ": parse error at line " +
                             std::to_string(line) + ", column " +
                             std::to_string(col) + ": " + e.what());
  }
  InputSet set;
  set.inputs = columns_from_json(j.at("inputs"), "inputs");
  if (j.contains("directions") && !j.at("directions").empty())
    set.directions = columns_from_json(j.at("directions"), "directions");
  else
    set.directions.resize(set.inputs.rows(), 0);
  set.order = j.value("order", 0);
  return set;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (long i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (long c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    rows.push_back(row);
  }
  return rows;
}

void emit(const json& j) { std::cout << j.dump() << "\n"; }

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
}

std::vector<double> collect_a(const NetworkConfig& cfg, const InputSet& set,
                              int replicas, std::uint64_t seed, int workers) {
  std::vector<double> a;
  a.reserve(replicas);
  nngauge::for_each_cond_cov(
      cfg, set, replicas, seed,
      [&](int, const CondCovDraw& d) { a.push_back(d.sigma(0, 0)); }, workers);
  return a;
}

// ---------------------------------------------------------------- kernel --

int cmd_kernel(const NetFlags& nf, const std::string& inputs_path,
               bool derivatives, const std::string& out_path,
               const json& resolved) {
  InputSet set;
  try {
    set = read_input_set(inputs_path);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  if (derivatives) set.order = 1;
  const NetworkConfig cfg = nf.net(static_cast<int>(set.inputs.rows()));
  try {
    set.validate(cfg);
  } catch (const std::exception& e) {
    std::cerr << inputs_path << ": " << e.what() << "\n";
    return 1;
  }
  const QuadratureRule rule = QuadratureRule::gauss_hermite(nf.gh_nodes);
  const KernelTable table = nngauge::limit_kernel(cfg, set, rule);
  const nngauge::NondegeneracyReport nd =
      nngauge::nondegeneracy_check(table, set.order);

  emit({{"resolved_config", resolved}});
  json jt = json::parse(table.to_json());
  emit({{"kernel_table", jt}});
  json jnd = {{"tolerance", nd.tolerance},
              {"pass", nd.pass},
              {"min_eigenvalue", nd.min_eigenvalue},
              {"layer_pass", nd.layer_pass}};
  emit({{"nondegeneracy", jnd}});
  if (out_path.size()) write_file(out_path, table.to_json());
  return nd.pass ? 0 : 2;
}

// ---------------------------------------------------------------- dist1d --

int dist1d_selftest() {
  // Two-atom mixture A in {0, 2} against N(0, 1): the cosine lower bound
  // equals |(1 + e^{-1})/2 - e^{-1/2}| = 0.0774...
  nngauge::MixtureVarianceSample mix;
  mix.a = {0.0, 2.0};
  mix.sigma2 = 1.0;
  mix.width = 1;
  const double got = nngauge::cosine_lower_bound(mix).estimate;
  const double expected =
      std::abs(0.5 * (1.0 + std::exp(-1.0)) - std::exp(-0.5));
  const bool pass = std::abs(got - expected) < 1e-12;
  emit({{"selftest", "cosine_lower_bound"},
        {"value", got},
        {"expected", expected},
        {"pass", pass}});
  return pass ? 0 : 1;
}

int cmd_dist1d(const NetFlags& nf, const std::vector<double>& input,
               std::vector<int> widths, int replicas, std::uint64_t seed,
               bool selftest, const json& resolved) {
  if (selftest) return dist1d_selftest();
  emit({{"resolved_config", resolved}});
  std::sort(widths.begin(), widths.end());
  const InputSet set = InputSet::single(to_vector(input));
  const QuadratureRule rule = QuadratureRule::gauss_hermite(nf.gh_nodes);
  const NetworkConfig base = nf.net(static_cast<int>(input.size()));
  const KernelTable table = nngauge::limit_kernel(base, set, rule);
  const double sigma2 = table.layers.back()(0, 0);

  for (std::size_t wi = 0; wi < widths.size(); ++wi) {
    const int n = widths[wi];
    const NetworkConfig cfg = base.with_hidden_width(n);
    nngauge::MixtureVarianceSample mix;
    mix.a = collect_a(cfg, set, replicas, nngauge::split_seed(seed, wi),
                      nf.workers);
    mix.sigma2 = sigma2;
    mix.width = n;
    json row = {{"width", n}};
    const nngauge::MomentSummary mom = nngauge::cumulants(mix.a);
    if (sigma2 < 1e-12) {
      // Degenerate limit (Z = 0): TV is uninformative; fall back to the
      // variance bound W1 <= Var(A)^{1/2}.
      row["note"] = "degenerate limit variance; W1 <= Var^{1/2} fallback";
      row["w1_bound"] = std::sqrt(std::max(0.0, mom.k2));
      emit(row);
      continue;
    }
    const nngauge::DistanceEstimate tv = nngauge::tv_mixture_vs_gaussian(mix);
    const nngauge::DistanceEstimate w1 = nngauge::w1_mixture_vs_gaussian(mix);
    const nngauge::LowerBoundEstimate lb = nngauge::cosine_lower_bound(mix);
    const nngauge::SteinBounds ub = nngauge::stein_upper_bounds(mom.k2, sigma2);
    row["tv"] = tv.estimate;
    row["w1"] = w1.estimate;
    row["lower"] = lb.estimate;
    row["lower_se"] = lb.std_error;
    row["tv_bound"] = ub.tv_bound;
    row["w1_bound"] = ub.w1_bound;
    json warnings = json::array();
    const double tol = 3.0 * lb.std_error + tv.integration_error +
                       w1.integration_error + 1e-12;
    if (lb.estimate > std::min(2.0 * tv.estimate, w1.estimate) + tol)
      warnings.push_back("lower bound exceeds min(2 TV, W1)");
    if (tv.estimate > ub.tv_bound + tol)
      warnings.push_back("TV exceeds its upper bound");
    if (w1.estimate > ub.w1_bound + tol)
      warnings.push_back("W1 exceeds its upper bound");
    if (!warnings.empty()) row["warnings"] = warnings;
    emit(row);
  }
  return 0;
}

// ---------------------------------------------------------------- distnd --

int cmd_distnd(const NetFlags& nf, const std::string& inputs_path,
               bool derivatives, std::vector<int> widths, int replicas,
               std::uint64_t seed, const json& resolved) {
  InputSet set;
  try {
    set = read_input_set(inputs_path);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  if (derivatives) set.order = 1;
  emit({{"resolved_config", resolved}});
  std::sort(widths.begin(), widths.end());
  const NetworkConfig base = nf.net(static_cast<int>(set.inputs.rows()));
  set.validate(base);
  const QuadratureRule rule = QuadratureRule::gauss_hermite(nf.gh_nodes);
  const KernelTable table = nngauge::limit_kernel(base, set, rule);
  const Eigen::MatrixXd& k = table.layers.back();
  const nngauge::SpectralFloor floor = nngauge::spectral_floor(k);
  const int entries = static_cast<int>(k.rows());

  for (std::size_t wi = 0; wi < widths.size(); ++wi) {
    const int n = widths[wi];
    const NetworkConfig cfg = base.with_hidden_width(n);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(entries, entries);
    Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(entries, entries);
    nngauge::for_each_cond_cov(
        cfg, set, replicas, nngauge::split_seed(seed, wi),
        [&](int, const CondCovDraw& d) {
          sum += d.sigma;
          sumsq += d.sigma.cwiseProduct(d.sigma);
        },
        nf.workers);
    double var_sum = 0.0;
    for (int i = 0; i < entries; ++i)
      for (int j = 0; j < entries; ++j) {
        const double m = sum(i, j) / replicas;
        var_sum += std::max(0.0, (sumsq(i, j) / replicas - m * m) * replicas /
                                     (replicas - 1.0));
      }
    bool clipped = false;
    double raw = 0.0;
    const double bound =
        nngauge::convex_bound(var_sum, floor.rank, floor.lambda_plus, &clipped,
                              &raw);
    Eigen::MatrixXd mean = sum / replicas;
    mean = 0.5 * (mean + mean.transpose()).eval();
    nngauge::psd_repair(mean);
    const nngauge::BuresResult bures = nngauge::bures_w2(mean, k);
    emit({{"width", n},
          {"var_matrix_sum", var_sum},
          {"convex_bound", bound},
          {"convex_bound_raw", raw},
          {"convex_bound_clipped", clipped},
          {"lambda_plus", floor.lambda_plus},
          {"rank", floor.rank},
          {"bures_w2", bures.w2},
          {"bures_hs_bound", bures.hs_bound}});
  }
  return 0;
}

// ------------------------------------------------------------ functional --

int cmd_functional(const NetFlags& nf, const std::vector<double>& center,
                   double radius, int nodes_per_dim, int order,
                   std::vector<int> widths, int replicas, std::uint64_t seed,
                   int couple_replicas, bool synthetic,
                   const std::string& spectrum_path, const json& resolved) {
  Grid grid;
  try {
    Eigen::MatrixXd dirs;
    if (order >= 1) dirs = Eigen::MatrixXd::Identity(center.size(), 1);
    grid = Grid::ball(to_vector(center), radius, nodes_per_dim, order, dirs);
    grid.validate();
  } catch (const std::exception& e) {
    std::cerr << "invalid grid (the domain ball must not contain the origin): "
              << e.what() << "\n";
    return 2;
  }
  emit({{"resolved_config", resolved}});
  std::sort(widths.begin(), widths.end());
  const InputSet set = grid.input_set();
  const NetworkConfig base = nf.net(static_cast<int>(center.size()));
  set.validate(base);
  const QuadratureRule rule = QuadratureRule::gauss_hermite(nf.gh_nodes);
  const KernelTable table = nngauge::limit_kernel(base, set, rule);
  const Eigen::MatrixXd& k = table.layers.back();
  const nngauge::DiscreteOperator k_op = nngauge::discretize(k, grid);
  const nngauge::SpectralDecomp spec = nngauge::spectral(k_op);
  if (spectrum_path.size())
    write_file(spectrum_path, nngauge::spectrum_csv(spec));
  emit({{"grid_hash", k_op.grid_hash},
        {"trace", k_op.trace()},
        {"top_eigenvalue", spec.eigenvalues[0]}});

  const int entries = static_cast<int>(k.rows());
  Eigen::VectorXd wblk(grid.block_dim());
  for (int j = 0; j < grid.entries_per_node(); ++j)
    for (int i = 0; i < grid.size(); ++i)
      wblk[j * grid.size() + i] = grid.weights[i];

  for (std::size_t wi = 0; wi < widths.size(); ++wi) {
    const int n = widths[wi];
    const NetworkConfig cfg = base.with_hidden_width(n);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(entries, entries);
    double sb = 0.0, sb2 = 0.0, sc = 0.0, sc2 = 0.0, sbc = 0.0;
    if (synthetic) {
      sum = k * replicas;  // Sigma = K exactly: all gaps vanish
    } else {
      nngauge::for_each_cond_cov(
          cfg, set, replicas, nngauge::split_seed(seed, wi),
          [&](int, const CondCovDraw& d) {
            sum += d.sigma;
            double bs = 0.0, cs = 0.0;
            for (int i = 0; i < entries; ++i) {
              for (int j = 0; j < entries; ++j) {
                const double diff = d.sigma(i, j) - k(i, j);
                bs += wblk[i] * wblk[j] * diff * diff;
              }
              const double dd = d.sigma(i, i) - k(i, i);
              cs += wblk[i] * dd * dd;
            }
            sb += bs;
            sb2 += bs * bs;
            sc += cs;
            sc2 += cs * cs;
            sbc += bs * cs;
          },
          nf.workers);
    }
    const double bm = sb / replicas, cm = sc / replicas;
    const double var_b =
        std::max(0.0, (sb2 / replicas - bm * bm) / (replicas - 1.0));
    const double var_c =
        std::max(0.0, (sc2 / replicas - cm * cm) / (replicas - 1.0));
    const double cov_bc = (sbc / replicas - bm * cm) / (replicas - 1.0);
    const double d2 = 0.5 * std::sqrt(bm);
    const double w2 =
        bm > 0.0 ? std::pow(cm, 0.25) + std::sqrt(2.0) * std::pow(bm, 0.125)
                 : 0.0;
    double w2_se = 0.0;
    if (bm > 0.0 && cm > 0.0) {
      const double gb = std::sqrt(2.0) / 8.0 * std::pow(bm, -0.875);
      const double gc = 0.25 * std::pow(cm, -0.75);
      w2_se = std::sqrt(std::max(0.0, gb * gb * var_b + gc * gc * var_c +
                                          2.0 * gb * gc * cov_bc));
    }
    Eigen::MatrixXd mean = sum / replicas;
    mean = 0.5 * (mean + mean.transpose()).eval();
    nngauge::psd_repair(mean);
    const nngauge::DiscreteOperator s_op = nngauge::discretize(mean, grid);
    const nngauge::PowersStormerReport ps = nngauge::powers_stormer(s_op, k_op);
    const nngauge::CoupleReport cp = nngauge::couple_fields(
        k_op, s_op, couple_replicas, nngauge::split_seed(seed, 1000 + wi));
    emit({{"width", n},
          {"d2_rhs", d2},
          {"d2_rhs_se", bm > 0.0 ? 0.25 * std::sqrt(var_b / bm) : 0.0},
          {"w2_rhs", w2},
          {"w2_rhs_se", w2_se},
          {"powers_stormer_lhs", ps.lhs},
          {"powers_stormer_rhs", ps.rhs},
          {"couple_empirical", cp.empirical},
          {"couple_predicted", cp.predicted},
          {"couple_z", cp.z_score},
          {"couple_sup_mean", cp.sup_mean}});
  }
  return 0;
}

// ----------------------------------------------------------------- sweep --

int cmd_sweep(const NetFlags& nf, const std::vector<double>& input,
              const std::vector<int>& widths, int replicas, std::uint64_t seed,
              const std::vector<std::string>& metric_args,
              const std::vector<double>& center, double radius,
              int nodes_per_dim, int grid_order, const std::string& out_path,
              const std::string& csv_path, const std::string& plot_path,
              const json& resolved) {
  nngauge::SweepConfig cfg;
  cfg.widths = widths;
  cfg.replicas = replicas;
  cfg.base_seed = seed;
  cfg.quadrature_nodes = nf.gh_nodes;
  cfg.workers = nf.workers;
  if (radius > 0.0) {
    cfg.use_grid = true;
    Eigen::MatrixXd dirs;
    if (grid_order >= 1) dirs = Eigen::MatrixXd::Identity(center.size(), 1);
    cfg.grid =
        Grid::ball(to_vector(center), radius, nodes_per_dim, grid_order, dirs);
    cfg.net = nf.net(static_cast<int>(center.size()));
  } else {
    cfg.inputs = InputSet::single(to_vector(input));
    cfg.net = nf.net(static_cast<int>(input.size()));
  }
  for (const std::string& arg : metric_args) {
    nngauge::MetricSpec spec;
    std::istringstream is(arg);
    std::string tok;
    std::getline(is, spec.name, ':');
    if (std::getline(is, tok, ':')) spec.target = std::stod(tok);
    if (std::getline(is, tok, ':')) spec.tolerance = std::stod(tok);
    cfg.metrics.push_back(spec);
  }

  emit({{"resolved_config", resolved}});
  const nngauge::ScalingReport report = nngauge::run_sweep(cfg);
  for (const nngauge::MetricFit& f : report.fits) {
    emit({{"metric", f.name},
          {"slope", f.slope},
          {"slope_se", f.slope_se},
          {"intercept", f.intercept},
          {"target", f.target},
          {"tolerance", f.tolerance},
          {"insufficient_signal", f.insufficient_signal},
          {"pass", f.pass},
          {"note", f.note}});
  }
  emit({{"all_pass", report.all_pass}});
  if (out_path.size()) nngauge::persist(report, out_path);
  if (csv_path.size()) write_file(csv_path, report.to_csv());
  if (plot_path.size()) write_file(plot_path, nngauge::render_svg(report));
  return report.all_pass ? 0 : 3;
}

// -------------------------------------------------------------- selftest --

int cmd_selftest() {
  bool all = true;
  emit({{"rng_id", nngauge::kRngMixerId}});

  const int rc = dist1d_selftest();
  all = all && rc == 0;

  // Gauss-Hermite sanity: E[Z^2] = 1 for the standard normal weight.
  const QuadratureRule rule = QuadratureRule::gauss_hermite(32);
  double m2 = 0.0;
  for (int i = 0; i < rule.m; ++i)
    m2 += rule.weights[i] * rule.nodes[i] * rule.nodes[i];
  const bool gh_ok = std::abs(m2 - 1.0) < 1e-12;
  emit({{"selftest", "gauss_hermite_m2"}, {"value", m2}, {"pass", gh_ok}});
  all = all && gh_ok;

  // Determinism: one conditional-covariance draw reproduced bit-for-bit.
  NetFlags nf;
  const NetworkConfig cfg = nf.net(2, 8);
  const InputSet set = InputSet::single((Eigen::VectorXd(2) << 1, 0).finished());
  const auto d1 = nngauge::draw_cond_covs(cfg, set, 3, 77);
  const auto d2 = nngauge::draw_cond_covs(cfg, set, 3, 77);
  bool det_ok = true;
  for (int i = 0; i < 3; ++i)
    det_ok = det_ok && (d1[i].sigma == d2[i].sigma);
  emit({{"selftest", "deterministic_draws"}, {"pass", det_ok}});
  all = all && det_ok;

  emit({{"all_pass", all}});
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-width random networks vs their Gaussian-process limits"};
  app.require_subcommand(1);

  // kernel
  CLI::App* kernel = app.add_subcommand("kernel", "limit covariance table");
  MergedOptions km(kernel);
  NetFlags knf;
  knf.attach(km);
  std::string k_inputs, k_out;
  bool k_deriv = false;
  km.add("--inputs", k_inputs, "input-set JSON file")->required();
  km.add_flag("--derivatives", k_deriv, "include first-derivative entries");
  km.add("--out", k_out, "write the table JSON to this file");

  // dist1d
  CLI::App* dist1d = app.add_subcommand("dist1d", "1-D TV/W1 vs the limit");
  MergedOptions dm(dist1d);
  NetFlags dnf;
  dnf.attach(dm);
  std::vector<double> d_input = {1.0};
  std::vector<int> d_widths = {16, 32, 64, 128};
  int d_replicas = 20000;
  std::uint64_t d_seed = 1;
  bool d_selftest = false;
  dm.add("--input", d_input, "input vector")->delimiter(',');
  dm.add("--widths", d_widths, "hidden widths")->delimiter(',');
  dm.add("--replicas", d_replicas, "draws per width");
  dm.add("--seed", d_seed, "base seed");
  dm.add_flag("--selftest", d_selftest, "run the two-atom closed-form check");

  // distnd
  CLI::App* distnd =
      app.add_subcommand("distnd", "finite-dimensional convex/Bures bounds");
  MergedOptions nm(distnd);
  NetFlags nnf;
  nnf.attach(nm);
  std::string n_inputs;
  bool n_deriv = false;
  std::vector<int> n_widths = {16, 32, 64, 128};
  int n_replicas = 20000;
  std::uint64_t n_seed = 1;
  nm.add("--inputs", n_inputs, "input-set JSON file")->required();
  nm.add_flag("--derivatives", n_deriv, "include first-derivative entries");
  nm.add("--widths", n_widths, "hidden widths")->delimiter(',');
  nm.add("--replicas", n_replicas, "draws per width");
  nm.add("--seed", n_seed, "base seed");

  // functional
  CLI::App* functional =
      app.add_subcommand("functional", "operator bounds on a ball grid");
  MergedOptions fm(functional);
  NetFlags fnf;
  fnf.attach(fm);
  std::vector<double> f_center = {0.5};
  double f_radius = 0.5;
  int f_nodes = 32, f_order = 0, f_couple = 20000;
  std::vector<int> f_widths = {16, 32, 64, 128};
  int f_replicas = 10000;
  std::uint64_t f_seed = 1;
  bool f_synth = false;
  std::string f_spectrum;
  fm.add("--center", f_center, "ball center")->delimiter(',');
  fm.add("--radius", f_radius, "ball radius");
  fm.add("--nodes-per-dim", f_nodes, "grid nodes per coordinate");
  fm.add("--order", f_order, "derivative order (0 or 1)");
  fm.add("--widths", f_widths, "hidden widths")->delimiter(',');
  fm.add("--replicas", f_replicas, "draws per width");
  fm.add("--seed", f_seed, "base seed");
  fm.add("--couple-replicas", f_couple, "replicas for the coupling check");
  fm.add_flag("--synthetic", f_synth, "use Sigma = K exactly (zero gaps)");
  fm.add("--spectrum-csv", f_spectrum, "write the limit spectrum CSV here");

  // sweep
  CLI::App* sweep = app.add_subcommand("sweep", "width sweep with slope fits");
  MergedOptions sm(sweep);
  NetFlags snf;
  snf.attach(sm);
  std::vector<double> s_input = {1.0};
  std::vector<int> s_widths = {16, 32, 64, 128};
  int s_replicas = 20000;
  std::uint64_t s_seed = 1;
  std::vector<std::string> s_metrics;
  std::vector<double> s_center = {0.5};
  double s_radius = 0.0;
  int s_nodes = 32, s_grid_order = 0;
  std::string s_out, s_csv, s_plot;
  sm.add("--input", s_input, "input vector")->delimiter(',');
  sm.add("--widths", s_widths, "hidden widths")->delimiter(',');
  sm.add("--replicas", s_replicas, "draws per width");
  sm.add("--seed", s_seed, "base seed");
  sm.add("--metric", s_metrics, "metric as name:target[:tolerance]");
  sm.add("--center", s_center, "ball center (grid metrics)")->delimiter(',');
  sm.add("--radius", s_radius, "ball radius; > 0 switches to a grid");
  sm.add("--nodes-per-dim", s_nodes, "grid nodes per coordinate");
  sm.add("--grid-order", s_grid_order, "grid derivative order");
  sm.add("--out", s_out, "write the full report JSON here");
  sm.add("--csv", s_csv, "write the per-point CSV here");
  sm.add("--plot", s_plot, "write the log-log SVG here");

  app.add_subcommand("selftest", "built-in closed-form checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (kernel->parsed()) {
      km.merge();
      return cmd_kernel(knf, k_inputs, k_deriv, k_out, km.resolved());
    }
    if (dist1d->parsed()) {
      dm.merge();
      return cmd_dist1d(dnf, d_input, d_widths, d_replicas, d_seed, d_selftest,
                        dm.resolved());
    }
    if (distnd->parsed()) {
      nm.merge();
      return cmd_distnd(nnf, n_inputs, n_deriv, n_widths, n_replicas, n_seed,
                        nm.resolved());
    }
    if (functional->parsed()) {
      fm.merge();
      return cmd_functional(fnf, f_center, f_radius, f_nodes, f_order,
                            f_widths, f_replicas, f_seed, f_couple, f_synth,
                            f_spectrum, fm.resolved());
    }
    if (sweep->parsed()) {
      sm.merge();
      return cmd_sweep(snf, s_input, s_widths, s_replicas, s_seed, s_metrics,
                       s_center, s_radius, s_nodes, s_grid_order, s_out, s_csv,
                       s_plot, sm.resolved());
    }
    return cmd_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
