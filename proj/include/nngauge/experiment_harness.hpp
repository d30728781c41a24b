#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nngauge/network.hpp"
#include "nngauge/operator_lab.hpp"

namespace nngauge {

// One requested metric with its predicted log-log slope and the absolute
// tolerance on the fitted exponent. Supported names:
//   tv, w1, lower, convex_bound_rhs, d2_rhs, w2_rhs, var_sigma,
//   kappa3, kappa4, mean_gap, bures, synthetic
struct MetricSpec {
  std::string name;
  double target = -1.0;
  double tolerance = 0.0;  // <= 0: use default_tolerance(target)
};

// Absolute slope windows, tighter as the exponent shrinks.
double default_tolerance(double target);

struct SweepConfig {
  NetworkConfig net;          // hidden widths are replaced per sweep point
  std::vector<int> widths;    // strictly increasing, >= 4 values
  int replicas = 1000;        // per width, >= 1000
  InputSet inputs;            // evaluation set; overridden by grid if use_grid
  bool use_grid = false;      // d2_rhs / w2_rhs require a grid
  Grid grid;
  std::vector<MetricSpec> metrics;
  std::uint64_t base_seed = 1;
  int quadrature_nodes = 64;
  int workers = 0;

  void validate() const;
};

// One (metric, width) measurement. Excluded points stay in the table with
// the reason in `note`.
struct SweepPoint {
  std::string metric;
  int width = 0;
  double estimate = 0.0;
  double std_error = 0.0;
  bool included = true;
  std::string note;
};

struct SlopeFit {
  double slope = 0.0;
  double slope_se = 0.0;
  double intercept = 0.0;  // log-scale intercept at log n = 0
  int used_points = 0;
  bool insufficient = false;  // < 3 usable points
};

// Weighted least squares of log(estimate) on log(width); weights are
// inverse squared relative errors. Points with estimate < 2 * std_error
// (or non-positive estimate) are excluded and marked in-place.
SlopeFit fit_slope(std::vector<SweepPoint>& points);

struct MetricFit {
  std::string name;
  double slope = 0.0;
  double slope_se = 0.0;
  double intercept = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  bool insufficient_signal = false;
  bool pass = false;
  std::string note;
};

struct ScalingReport {
  int schema_version = 1;
  std::vector<SweepPoint> points;  // ordered by (metric, width)
  std::vector<MetricFit> fits;
  bool all_pass = false;
  // Environment record for reproducibility.
  std::uint64_t base_seed = 0;
  std::string rng_id;
  int quadrature_nodes = 0;
  int replicas = 0;
  std::uint64_t grid_hash = 0;

  std::string to_json() const;
  std::string to_csv() const;  // metric, width, estimate, std_error, included, note
  static ScalingReport from_json(const std::string& text);
};

// Streams conditional-covariance draws once per width and feeds every
// requested metric from the same draws. Deterministic given the base seed.
// Throws std::runtime_error with a layer/eigenvalue diagnostic if the limit
// covariance fails the non-degeneracy check at the requested order.
ScalingReport run_sweep(const SweepConfig& config);

void persist(const ScalingReport& report, const std::string& path);
ScalingReport load(const std::string& path);

// Minimal self-contained log-log SVG: one series per metric with its fitted
// line and the target-slope reference line.
std::string render_svg(const ScalingReport& report);

}  // namespace nngauge
