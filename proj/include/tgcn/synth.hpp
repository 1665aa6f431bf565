#pragma once

// Desk-scale synthetic traffic: a random geometric sensor graph whose edge
// weights rotate over time, a daily profile per sensor, AR(1) disturbances
// diffused along the graph, and sparse outlier spikes.

#include "tgcn/data.hpp"

#include <limits>

namespace tgcn {

struct SynthConfig {
  Index nodes = 16;
  Index steps = 2880;
  std::uint64_t seed = 0;
  double drift_period = 288.0;  // steps per full rotation of edge weights; infinity freezes them
  Index features = 1;           // 1 (flow) or 3 (flow, speed, occupancy)
  Index day_steps = 288;
  std::uint32_t granularity_minutes = 5;
  double coupling = 0.6;        // share of the disturbance taken from neighbours
  double ar = 0.7;              // AR(1) coefficient of the local disturbance
  double noise_std = 20.0;      // innovation std of the local disturbance
  double spike_rate = 0.002;    // per (step, node)
  double spike_min = 80.0;
  double spike_max = 160.0;

  void validate() const;
};

/// Ground-truth time-varying adjacency: row-normalised, zero diagonal.
class AdjacencySchedule {
 public:
  AdjacencySchedule() = default;
  AdjacencySchedule(RowMatrix<double> base, RowMatrix<double> phase, double period);

  Index nodes() const { return base_.rows(); }
  bool is_static() const { return !std::isfinite(period_); }
  const RowMatrix<double>& base() const { return base_; }
  RowMatrix<double> at(Index step) const;

 private:
  RowMatrix<double> base_;   // symmetric geometric weights, 0 off-graph
  RowMatrix<double> phase_;  // per-edge rotation phase
  double period_ = std::numeric_limits<double>::infinity();
};

struct SyntheticDataset {
  SpatialTemporalSeries series;
  AdjacencySchedule adjacency;
};

SyntheticDataset synthesize(const SynthConfig& cfg);
SyntheticDataset synthesize(Index nodes, Index steps, std::uint64_t seed, double drift_period);

}  // namespace tgcn
