#pragma once

// Command implementations behind the `tgcn` executable. Each command writes
// machine-readable artifacts into an output directory and a short
// human-readable summary to the given stream.

#include "tgcn/synth.hpp"
#include "tgcn/trainer.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace tgcn {

struct TrainArtifacts {
  FitResult fit;
  std::vector<ErrorMetrics> val_metrics;
  std::vector<ErrorMetrics> test_metrics;
  std::filesystem::path checkpoint;
  std::filesystem::path loss_log;
};

/// Trains on an in-memory series. With an empty `out_dir` nothing is written.
TrainArtifacts train_series(const TrainConfig& cfg, const SpatialTemporalSeries& series,
                            const std::filesystem::path& out_dir, std::ostream& log);
TrainArtifacts cmd_train(const TrainConfig& cfg, const std::filesystem::path& dataset,
                         const std::filesystem::path& out_dir, std::ostream& log);

struct EvalOptions {
  SplitName split = SplitName::Test;
  bool oracle = false;  // replace predictions by the truth (pipeline self-check)
};

struct EvalReport {
  std::vector<ErrorMetrics> metrics;  // horizons 1..H, then pooled
  double mae_reflected = 0.0;         // MAE of 2*truth - pred
  double trend_pred = 0.0;            // trend_loss(truth, pred)
  double trend_reflected = 0.0;       // trend_loss(truth, reflected)
  double trend_gap = 0.0;             // trend_loss(pred, reflected)
  double d_seq_true = 0.0;            // mean sequence score on true futures
  double d_seq_reflected = 0.0;       // mean sequence score on reflected futures
  std::filesystem::path metrics_csv;
};

EvalReport cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                    const EvalOptions& options, const std::filesystem::path& out_dir, std::ostream& log);

struct AblationRow {
  std::string name;
  std::string graph;        // dynamic | static
  std::string adversarial;  // full | seq-only | graph-only | none
  Combine delta1 = Combine::Add;
  Combine delta2 = Combine::Add;
  Index best_epoch = 0;
  double val_mae = 0.0;
  ErrorMetrics test;
};

/// The 8 core variants ({dynamic, static} x {full, seq-only, graph-only,
/// none}) followed, if requested, by the operator variants A-D.
std::vector<TrainConfig> ablation_configs(const TrainConfig& base, bool with_operator_variants,
                                          std::vector<AblationRow>* rows = nullptr);
std::vector<AblationRow> ablate_series(const TrainConfig& base, const SpatialTemporalSeries& series,
                                       bool with_operator_variants, const std::filesystem::path& out_dir,
                                       std::ostream& log);
std::vector<AblationRow> cmd_ablate(const TrainConfig& base, const std::filesystem::path& dataset,
                                    bool with_operator_variants, const std::filesystem::path& out_dir,
                                    std::ostream& log);

struct NoiseReport {
  double sigma = 0.0;
  ErrorMetrics clean;
  ErrorMetrics noisy;
  std::string mae_increment;
  std::string rmse_increment;
  std::string increment_cell() const { return mae_increment + "/" + rmse_increment; }
};

NoiseReport noise_series(const TrainConfig& cfg, const SpatialTemporalSeries& series, double sigma,
                         std::uint64_t noise_seed, const std::filesystem::path& out_dir, std::ostream& log);
NoiseReport cmd_noise(const TrainConfig& cfg, const std::filesystem::path& dataset, double sigma,
                      std::uint64_t noise_seed, const std::filesystem::path& out_dir, std::ostream& log);

struct GradcheckRow {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  bool pass = false;
};

inline constexpr double kGradcheckTolerance = 1e-4;

/// Finite-difference oracle over every differentiable primitive and the
/// composed generator objective on a 4-node toy (T = 3, H = 2).
std::vector<GradcheckRow> run_gradcheck();
bool cmd_gradcheck(const std::filesystem::path& out_dir, std::ostream& log);

/// The toy used by the gradient oracle: 4 nodes, 2 features, T = 3, H = 2.
ModelConfig gradcheck_toy_model();

struct ExportReport {
  std::vector<std::filesystem::path> csv_files;
  double max_row_error = 0.0;  // max |row sum - 1|
  bool identical = true;       // every exported matrix bit-equal to the first
};

inline const std::vector<Index> kDefaultExportSteps = {2, 4, 6, 8, 10, 12};

ExportReport cmd_export_graphs(const std::filesystem::path& checkpoint, const std::vector<Index>& steps,
                               const std::filesystem::path& out_dir, std::ostream& log);

void cmd_synth(const SynthConfig& cfg, const std::filesystem::path& out, std::ostream& log);

}  // namespace tgcn
