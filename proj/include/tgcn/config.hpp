#pragma once

// Training configuration: flat key=value files, overridable key by key.

#include "tgcn/adversary.hpp"
#include "tgcn/data.hpp"
#include "tgcn/generator.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace tgcn {

struct TrainConfig {
  double lr = 0.003;
  Index batch_size = 64;
  Index epochs = 100;
  std::uint64_t seed = 0;
  double alpha = 0.01;
  double beta = 1.0;
  Index embed_dim = 6;
  double dropout_rate = 0.1;
  Index input_steps = 12;
  Index horizon = 12;
  Index hidden = 64;
  Index gru_layers = 2;
  Index gcn_layers = 2;
  Combine delta1 = Combine::Add;
  Combine delta2 = Combine::Add;
  double lambda = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  bool layer_norm = true;
  bool static_graph = false;
  bool no_adv = false;
  bool seq_only = false;
  bool graph_only = false;
  Index patience = 15;
  SplitRatios split{0.6, 0.2, 0.2};
  double mask_eps = 1.0;
  Index target_channel = 0;
  Index micro_batch = 0;  // windows per forward pass; 0 picks one from the node count
  double leaky_slope = 0.2;

  void validate() const;

  /// Sets one field from its text form. Keys use underscores; dashes are
  /// accepted too so command-line names map directly.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;

  /// Dataset presets: embedding width and split ratios per benchmark name
  /// (PEMS03, PEMS04, PEMS07, PEMS08, METR-LA, PEMS-BAY; case-insensitive).
  void apply_profile(const std::string& name);

  ModelConfig model_config(Index nodes, Index features) const;
  AdvConfig adv_config() const;  // ablation flags applied
  Index micro_batch_for(Index nodes) const;

  static TrainConfig from_file(const std::filesystem::path& path);
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
};

/// Reads "key=value" lines; '#' starts a comment.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

}  // namespace tgcn
