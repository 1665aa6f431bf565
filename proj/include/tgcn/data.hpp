#pragma once

// Spatio-temporal series containers, chronological splits, z-score scaling,
// stride-1 windows and multi-horizon error metrics.

#include "tgcn/tensor.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace tgcn {

/// steps x N x F observations, step-major. Missing entries hold 0 and are
/// flagged per (step, node) in `missing`.
struct SpatialTemporalSeries {
  Index steps = 0;
  Index nodes = 0;
  Index features = 0;
  std::uint32_t granularity_minutes = 5;
  std::vector<std::string> node_ids;
  std::vector<std::string> feature_names;
  Eigen::ArrayXf values;
  std::vector<std::uint8_t> missing;  // steps*N, or empty when nothing is missing

  SpatialTemporalSeries() = default;
  SpatialTemporalSeries(Index steps, Index nodes, Index features);

  Index offset(Index step, Index node, Index feature = 0) const { return (step * nodes + node) * features + feature; }
  float& at(Index step, Index node, Index feature = 0) { return values[offset(step, node, feature)]; }
  float at(Index step, Index node, Index feature = 0) const { return values[offset(step, node, feature)]; }
  bool has_mask() const { return !missing.empty(); }
  bool is_missing(Index step, Index node) const {
    return has_mask() && missing[static_cast<std::size_t>(step * nodes + node)] != 0;
  }
  /// Mark one (step, node) missing: zero-fill all its features.
  void mark_missing(Index step, Index node);
  std::size_t missing_count() const;

  /// Steps [begin, end) as a new series.
  SpatialTemporalSeries slice_steps(Index begin, Index end) const;
  void validate() const;
};

// ------------------------------------------------------------------ storage

/// Binary layout: "STTS" | u32 version | u32 steps | u32 N | u32 F |
/// u32 granularity | u32 flags | f32 values (step, node, feature) |
/// [u8 mask steps*N when flags bit 0 is set]. Little-endian throughout.
void save_container(const SpatialTemporalSeries& series, const std::filesystem::path& path);

/// CSV, one row per step, N*F columns named "<node>:<feature>", plus a
/// `<path>.meta` sidecar with nodes=, features=, granularity_minutes=.
/// Missing entries are written as empty cells.
void save_csv(const SpatialTemporalSeries& series, const std::filesystem::path& path);

/// Reads either format: STTS by magic, CSV by the .csv extension.
SpatialTemporalSeries load_container(const std::filesystem::path& path);

// ------------------------------------------------------------------- splits

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct SeriesSplit {
  SpatialTemporalSeries train, val, test;
  Index val_begin = 0;   // absolute index of the first validation step
  Index test_begin = 0;  // absolute index of the first test step
};

/// Boundaries at floor(cumulative_ratio * steps). Every part must hold at
/// least `min_steps` steps.
SeriesSplit split(const SpatialTemporalSeries& series, const SplitRatios& ratios, Index min_steps);

// ------------------------------------------------------------------- scaler

/// Per-channel z-score fitted on observed (non-missing) training entries.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<bool> clamped;  // channel had (near) zero variance

  static constexpr double kMinStd = 1e-8;

  static Scaler fit(const SpatialTemporalSeries& train);
  SpatialTemporalSeries apply(const SpatialTemporalSeries& series) const;
  SpatialTemporalSeries invert(const SpatialTemporalSeries& series) const;
  double apply(double v, Index channel) const { return (v - mean[channel]) / std[channel]; }
  double invert(double v, Index channel) const { return v * std[channel] + mean[channel]; }
};

// ------------------------------------------------------------------ windows

template <typename S>
struct Batch {
  Tensor<S> inputs;       // [B, T, N, F], normalised
  Tensor<S> targets;      // [B, H, N, 1], normalised target channel
  Tensor<S> raw_targets;  // [B, H, N, 1], raw scale
  Tensor<S> observed;     // [B, H, N, 1], 0 where the target is missing
};

/// Stride-1 windows over one split. Window w covers input steps
/// [w, w+T) and target steps [w+T, w+T+H).
class WindowedSamples {
 public:
  WindowedSamples(std::shared_ptr<const SpatialTemporalSeries> normalized,
                  std::shared_ptr<const SpatialTemporalSeries> raw, Index input_steps, Index horizon,
                  Index target_channel = 0);

  Index count() const { return count_; }
  Index input_steps() const { return input_steps_; }
  Index horizon() const { return horizon_; }
  Index nodes() const { return normalized_->nodes; }
  Index features() const { return normalized_->features; }
  Index target_channel() const { return target_; }

  template <typename S>
  Batch<S> batch(const std::vector<Index>& windows) const;

 private:
  std::shared_ptr<const SpatialTemporalSeries> normalized_, raw_;
  Index input_steps_, horizon_, target_, count_;
};

// ------------------------------------------------------------------ metrics

struct ErrorMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // percent
  std::size_t count = 0;
  std::size_t mape_count = 0;
};

/// MAE, RMSE, and MAPE (entries with |truth| > mask_eps, in percent).
/// Entries with `observed` == 0 are excluded from all three.
ErrorMetrics compute_metrics(const Eigen::ArrayXd& truth, const Eigen::ArrayXd& pred, double mask_eps,
                             const Eigen::ArrayXd* observed = nullptr);

/// Streams batches of raw-scale [B, H, N, 1] predictions into per-horizon
/// and pooled statistics.
class MetricAccumulator {
 public:
  MetricAccumulator(Index horizon, double mask_eps);

  template <typename S>
  void add(const Tensor<S>& truth, const Tensor<S>& pred, const Tensor<S>& observed);

  /// Rows 0..H-1 per horizon, row H pooled over all horizons.
  std::vector<ErrorMetrics> finish() const;
  static void write_csv(const std::vector<ErrorMetrics>& rows, const std::filesystem::path& path);

 private:
  struct Sums {
    double abs = 0, sq = 0, ape = 0;
    std::size_t n = 0, n_ape = 0;
  };
  Index horizon_;
  double mask_eps_;
  std::vector<Sums> sums_;
};

// -------------------------------------------------------------------- noise

/// Adds i.i.d. N(0, sigma^2) to every observed raw entry.
SpatialTemporalSeries inject_gaussian_noise(const SpatialTemporalSeries& series, double sigma, std::uint64_t seed);

/// "+x.xx%" style relative change of `polluted` against `clean`.
std::string format_increment(double clean, double polluted);

}  // namespace tgcn
