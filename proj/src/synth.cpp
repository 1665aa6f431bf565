#include "tgcn/synth.hpp"

#include <cmath>
#include <numbers>

namespace tgcn {

void SynthConfig::validate() const {
  if (nodes < 2) throw ConfigError("synthesize needs at least 2 nodes");
  if (steps < 1) throw ConfigError("synthesize needs at least 1 step");
  if (features != 1 && features != 3) throw ConfigError("synthetic features must be 1 or 3");
  if (day_steps < 1) throw ConfigError("day_steps must be positive");
  if (!(drift_period > 0)) throw ConfigError("drift_period must be positive");
  if (!(coupling >= 0 && coupling <= 1)) throw ConfigError("coupling must lie in [0, 1]");
  if (!(std::abs(ar) < 1)) throw ConfigError("ar must lie in (-1, 1)");
  if (!(noise_std >= 0) || !(spike_rate >= 0 && spike_rate <= 1) || spike_min > spike_max)
    throw ConfigError("invalid noise or spike settings");
}

AdjacencySchedule::AdjacencySchedule(RowMatrix<double> base, RowMatrix<double> phase, double period)
    : base_(std::move(base)), phase_(std::move(phase)), period_(period) {
  if (base_.rows() != base_.cols() || phase_.rows() != base_.rows() || phase_.cols() != base_.cols())
    throw DimensionError("adjacency schedule matrices must be square and equal-sized");
}

RowMatrix<double> AdjacencySchedule::at(Index step) const {
  const double turn = is_static() ? 0.0 : 2.0 * std::numbers::pi * static_cast<double>(step) / period_;
  RowMatrix<double> w = base_.array() * (1.0 + (phase_.array() + turn).sin());
  for (Index i = 0; i < w.rows(); ++i) {
    const double total = w.row(i).sum();
    if (total > 0) w.row(i) /= total;
  }
  return w;
}

SyntheticDataset synthesize(const SynthConfig& cfg) {
  cfg.validate();
  const Index n = cfg.nodes;
  CounterRng graph_rng(derive_seed(cfg.seed, 1));

  // Random geometric graph on the unit square, mean degree about 4.
  Eigen::MatrixX2d pos(n, 2);
  for (Index i = 0; i < n; ++i) pos.row(i) << graph_rng.uniform(), graph_rng.uniform();
  const double radius = std::sqrt(4.0 / (std::numbers::pi * static_cast<double>(n)));
  RowMatrix<double> dist(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) dist(i, j) = (pos.row(i) - pos.row(j)).norm();
  RowMatrix<double> base = RowMatrix<double>::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j && dist(i, j) <= radius) base(i, j) = std::exp(-std::pow(dist(i, j) / radius, 2));
  for (Index i = 0; i < n; ++i) {
    if (base.row(i).sum() > 0) continue;
    Index nearest = i == 0 ? 1 : 0;
    for (Index j = 0; j < n; ++j)
      if (j != i && dist(i, j) < dist(i, nearest)) nearest = j;
    base(i, nearest) = base(nearest, i) = std::exp(-std::pow(dist(i, nearest) / radius, 2));
  }
  RowMatrix<double> phase(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) phase(i, j) = graph_rng.uniform(0.0, 2.0 * std::numbers::pi);
  AdjacencySchedule schedule(base, phase, cfg.drift_period);

  CounterRng profile_rng(derive_seed(cfg.seed, 2));
  Eigen::ArrayXd level(n), amp(n), shift(n);
  for (Index i = 0; i < n; ++i) {
    level[i] = profile_rng.uniform(200.0, 400.0);
    amp[i] = profile_rng.uniform(50.0, 150.0);
    shift[i] = profile_rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  SpatialTemporalSeries s(cfg.steps, n, cfg.features);
  s.granularity_minutes = cfg.granularity_minutes;
  for (Index i = 0; i < n; ++i) s.node_ids.push_back("s" + std::to_string(i));
  s.feature_names = cfg.features == 3 ? std::vector<std::string>{"flow", "speed", "occupancy"}
                                      : std::vector<std::string>{"flow"};

  const std::uint64_t innov_seed = derive_seed(cfg.seed, 3), spike_seed = derive_seed(cfg.seed, 4),
                      extra_seed = derive_seed(cfg.seed, 5);
  const bool diffuse = cfg.coupling > 0;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n), v = Eigen::VectorXd::Zero(n);
  for (Index t = 0; t < cfg.steps; ++t) {
    for (Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::uint64_t>(t * n + i);
      u[i] = cfg.ar * u[i] + (cfg.noise_std > 0 ? cfg.noise_std * standard_normal(innov_seed, k) : 0.0);
    }
    if (diffuse) {
      Eigen::VectorXd spread = schedule.at(t) * v;
      v = (1.0 - cfg.coupling) * u + cfg.coupling * spread;
    } else {
      v = u;
    }

    const double day = 2.0 * std::numbers::pi * static_cast<double>(t % cfg.day_steps) / static_cast<double>(cfg.day_steps);
    for (Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::uint64_t>(t * n + i);
      double spike = 0.0;
      if (cfg.spike_rate > 0 && uniform01(spike_seed, 2 * k) < cfg.spike_rate)
        spike = cfg.spike_min + (cfg.spike_max - cfg.spike_min) * uniform01(spike_seed, 2 * k + 1);
      const double flow = level[i] + amp[i] * std::sin(day + shift[i]) + v[i] + spike;
      s.at(t, i, 0) = static_cast<float>(flow);
      if (cfg.features == 3) {
        // Speed falls and occupancy rises with load relative to the sensor's level.
        const double load = (flow - level[i]) / (amp[i] + 1.0);
        s.at(t, i, 1) = static_cast<float>(65.0 - 8.0 * load + 0.5 * standard_normal(extra_seed, 2 * k));
        s.at(t, i, 2) = static_cast<float>(std::max(0.0, 0.08 + 0.03 * load + 0.002 * standard_normal(extra_seed, 2 * k + 1)));
      }
    }
  }
  return {std::move(s), std::move(schedule)};
}

SyntheticDataset synthesize(Index nodes, Index steps, std::uint64_t seed, double drift_period) {
  SynthConfig cfg;
  cfg.nodes = nodes;
  cfg.steps = steps;
  cfg.seed = seed;
  cfg.drift_period = drift_period;
  return synthesize(cfg);
}

}  // namespace tgcn
