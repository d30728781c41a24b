#include "nngauge/net_sampler.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include "nngauge/rng.hpp"

namespace nngauge {

namespace {

void fill_gaussian(Eigen::MatrixXd& m, Rng& rng) {
  double* p = m.data();
  const Eigen::Index n = m.size();
  for (Eigen::Index i = 0; i < n; ++i) p[i] = rng.next_gaussian();
}

void fill_gaussian(Eigen::VectorXd& v, Rng& rng) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.next_gaussian();
}

}  // namespace

int default_workers() {
  if (const char* env = std::getenv("NNGP_GAUGE_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1) return w;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

ForwardState forward(const NetworkConfig& cfg, const InputSet& inputs,
                     std::uint64_t seed) {
  cfg.validate();
  inputs.validate(cfg);

  const int num_layers = cfg.depth + 1;
  const int a = inputs.num_inputs();
  const int p = inputs.order >= 1 ? inputs.num_directions() : 0;
  const double sqrt_cb = std::sqrt(cfg.cb);

  ForwardState st;
  st.seed = seed;
  st.z.resize(num_layers);
  st.tangents.resize(num_layers);

  Rng rng(seed);
  Eigen::MatrixXd w;
  Eigen::VectorXd b;

  for (int layer = 1; layer <= num_layers; ++layer) {
    const int fan_in = cfg.widths[layer - 1];
    const int fan_out = cfg.widths[layer];
    const double scale = std::sqrt(cfg.cw / fan_in);

    w.resize(fan_out, fan_in);
    fill_gaussian(w, rng);
    b.resize(fan_out);
    fill_gaussian(b, rng);

    if (layer == 1) {
      st.z[0].noalias() = scale * (w * inputs.inputs);
      st.z[0].colwise() += sqrt_cb * b;
      st.tangents[0].resize(p);
      for (int j = 0; j < p; ++j) {
        Eigen::VectorXd t = scale * (w * inputs.directions.col(j));
        st.tangents[0][j] = t.replicate(1, a);
      }
    } else {
      const Eigen::MatrixXd& zp = st.z[layer - 2];
      Eigen::MatrixXd act = zp.unaryExpr(
          [&](double x) { return cfg.act.value(x); });
      st.z[layer - 1].noalias() = scale * (w * act);
      st.z[layer - 1].colwise() += sqrt_cb * b;
      st.tangents[layer - 1].resize(p);
      if (p > 0) {
        Eigen::MatrixXd dact = zp.unaryExpr(
            [&](double x) { return cfg.act.deriv(x); });
        for (int j = 0; j < p; ++j) {
          st.tangents[layer - 1][j].noalias() =
              scale * (w * dact.cwiseProduct(st.tangents[layer - 2][j]));
        }
      }
    }
  }
  return st;
}

CondCovDraw conditional_covariance(const ForwardState& state,
                                   const NetworkConfig& cfg,
                                   const InputSet& inputs) {
  const int m = inputs.num_entries();
  const int a = inputs.num_inputs();
  CondCovDraw draw;
  draw.seed = state.seed;
  draw.width = cfg.last_hidden_width();
  draw.sigma.resize(m, m);

  if (cfg.depth == 0) {
    // Layer-1 covariance is deterministic: the bilinear base case.
    const double s = cfg.cw / cfg.input_dim();
    for (int k1 = 0; k1 < m; ++k1) {
      const CovIndex i1 = inputs.entry(k1);
      const Eigen::VectorXd u1 = i1.j == 0 ? inputs.inputs.col(i1.alpha)
                                           : inputs.directions.col(i1.j - 1);
      for (int k2 = k1; k2 < m; ++k2) {
        const CovIndex i2 = inputs.entry(k2);
        const Eigen::VectorXd u2 = i2.j == 0
                                       ? inputs.inputs.col(i2.alpha)
                                       : inputs.directions.col(i2.j - 1);
        double v = s * u1.dot(u2);
        if (i1.j == 0 && i2.j == 0) v += cfg.cb;
        draw.sigma(k1, k2) = draw.sigma(k2, k1) = v;
      }
    }
    return draw;
  }

  const Eigen::MatrixXd& zl = state.z[cfg.depth - 1];
  const int n_last = static_cast<int>(zl.rows());
  Eigen::MatrixXd feats(n_last, m);
  for (int k = 0; k < m; ++k) {
    const CovIndex idx = inputs.entry(k);
    if (idx.j == 0) {
      feats.col(k) = zl.col(idx.alpha).unaryExpr(
          [&](double x) { return cfg.act.value(x); });
    } else {
      feats.col(k) =
          zl.col(idx.alpha)
              .unaryExpr([&](double x) { return cfg.act.deriv(x); })
              .cwiseProduct(state.tangents[cfg.depth - 1][idx.j - 1].col(idx.alpha));
    }
  }
  draw.sigma.noalias() = (cfg.cw / n_last) * (feats.transpose() * feats);
  for (int k1 = 0; k1 < a; ++k1)
    for (int k2 = 0; k2 < a; ++k2) draw.sigma(k1, k2) += cfg.cb;
  return draw;
}

std::vector<CondCovDraw> draw_cond_covs(const NetworkConfig& cfg,
                                        const InputSet& inputs, int replicas,
                                        std::uint64_t base_seed, int workers) {
  if (replicas < 1) throw std::invalid_argument("replicas must be >= 1");
  if (workers <= 0) workers = default_workers();
  workers = std::min(workers, replicas);

  std::vector<CondCovDraw> out(replicas);
  auto run_range = [&](int lo, int hi) {
    for (int k = lo; k < hi; ++k) {
      const std::uint64_t seed = split_seed(base_seed, k);
      out[k] = conditional_covariance(forward(cfg, inputs, seed), cfg, inputs);
    }
  };
  if (workers == 1) {
    run_range(0, replicas);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (replicas + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int lo = w * chunk;
      const int hi = std::min(replicas, lo + chunk);
      if (lo < hi) pool.emplace_back(run_range, lo, hi);
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

void for_each_cond_cov(const NetworkConfig& cfg, const InputSet& inputs,
                       int replicas, std::uint64_t base_seed,
                       const std::function<void(int, const CondCovDraw&)>& sink,
                       int workers) {
  if (workers <= 0) workers = default_workers();
  if (workers == 1) {
    for (int k = 0; k < replicas; ++k) {
      const std::uint64_t seed = split_seed(base_seed, k);
      const CondCovDraw d =
          conditional_covariance(forward(cfg, inputs, seed), cfg, inputs);
      sink(k, d);
    }
    return;
  }
  // Batched: draws computed in parallel, sink invoked in replica order.
  const int batch = std::max(workers * 256, 1024);
  for (int lo = 0; lo < replicas; lo += batch) {
    const int count = std::min(batch, replicas - lo);
    NetworkConfig c = cfg;
    std::vector<CondCovDraw> chunk(count);
    std::vector<std::thread> pool;
    const int per = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int a = w * per, b = std::min(count, a + per);
      if (a >= b) break;
      pool.emplace_back([&, a, b, lo]() {
        for (int k = a; k < b; ++k) {
          const std::uint64_t seed = split_seed(base_seed, lo + k);
          chunk[k] =
              conditional_covariance(forward(c, inputs, seed), c, inputs);
        }
      });
    }
    for (auto& t : pool) t.join();
    for (int k = 0; k < count; ++k) sink(lo + k, chunk[k]);
  }
}

std::vector<PairedDraw> draw_paired(const NetworkConfig& cfg,
                                    const Eigen::VectorXd& input, int replicas,
                                    std::uint64_t base_seed, int workers) {
  InputSet in = InputSet::single(input);
  if (workers <= 0) workers = default_workers();
  std::vector<PairedDraw> out(replicas);
  auto run_range = [&](int lo, int hi) {
    for (int k = lo; k < hi; ++k) {
      const std::uint64_t seed = split_seed(base_seed, k);
      const ForwardState st = forward(cfg, in, seed);
      const CondCovDraw d = conditional_covariance(st, cfg, in);
      out[k] = PairedDraw{d.sigma(0, 0), st.z[cfg.depth](0, 0)};
    }
  };
  workers = std::min(workers, replicas);
  if (workers <= 1) {
    run_range(0, replicas);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (replicas + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int lo = w * chunk, hi = std::min(replicas, lo + chunk);
      if (lo < hi) pool.emplace_back(run_range, lo, hi);
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

double psd_repair(Eigen::MatrixXd& sym) {
  Eigen::MatrixXd s = 0.5 * (sym + sym.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  Eigen::VectorXd ev = es.eigenvalues();
  bool dirty = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] < 0.0) {
      ev[i] = 0.0;
      dirty = true;
    }
  if (!dirty) {
    sym = s;
    return 0.0;
  }
  Eigen::MatrixXd repaired =
      es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  const double delta = (repaired - s).norm();
  sym = 0.5 * (repaired + repaired.transpose());
  return delta;
}

}  // namespace nngauge
