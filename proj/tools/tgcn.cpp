// tgcn: train, evaluate, ablate and inspect dynamic-graph traffic forecasters.

#include "tgcn/harness.hpp"

#include "CLI11.hpp"

#include <Eigen/Core>

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>

namespace {

using tgcn::Index;

/// Long-name flags that override config-file keys.
struct ConfigFlags {
  std::string config_path;
  std::string profile;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
    cmd.add_option("--profile", profile, "dataset preset (PEMS03, PEMS04, PEMS07, PEMS08, METR-LA, PEMS-BAY)");
    for (const char* key : {"lr", "batch-size", "epochs", "seed", "alpha", "beta", "de", "dropout", "hidden",
                            "gru-layers", "gcn-layers", "input-steps", "horizon", "variant", "delta1", "delta2",
                            "lambda", "lambda1", "lambda2", "lambda3", "patience", "split", "mask-eps",
                            "micro-batch", "leaky-slope", "layer-norm"})
      cmd.add_option(std::string("--") + key, values[key]);
    for (const char* key : {"static-graph", "no-adv", "seq-only", "graph-only"})
      cmd.add_flag(std::string("--") + key, switches[key]);
  }

  tgcn::TrainConfig resolve() const {
    std::map<std::string, std::string> kv;
    if (!config_path.empty()) kv = tgcn::read_key_values(config_path);
    if (!profile.empty()) kv["profile"] = profile;
    tgcn::TrainConfig cfg = tgcn::TrainConfig::from_map(kv);
    for (const auto& [k, v] : values)
      if (!v.empty()) cfg.set(k, v);
    for (const auto& [k, on] : switches)
      if (on) cfg.set(k, "1");
    cfg.validate();
    return cfg;
  }
};

void apply_thread_cap() {
  if (const char* env = std::getenv("TGCN_THREADS")) {
    const int n = std::atoi(env);
    if (n < 1) throw tgcn::ConfigError("TGCN_THREADS must be a positive integer");
    Eigen::setNbThreads(n);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic-graph traffic forecasting with adversarial trend losses"};
  app.require_subcommand(1);

  ConfigFlags train_flags, ablate_flags, noise_flags;
  std::string data, out = "out", checkpoint, split = "test";
  bool oracle = false, with_variants = true;
  double sigma = 1.0;
  std::uint64_t noise_seed = 7;
  std::vector<Index> steps = tgcn::kDefaultExportSteps;
  tgcn::SynthConfig synth;
  std::string synth_out = "synthetic.stts";

  auto* train = app.add_subcommand("train", "train a model and save a checkpoint");
  train_flags.attach(*train);
  train->add_option("--data", data, "STTS container or CSV")->required();
  train->add_option("--out", out, "output directory");

  auto* eval = app.add_subcommand("eval", "per-horizon metrics and trend diagnostics for a checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data)->required();
  eval->add_option("--split", split, "train, val or test");
  eval->add_flag("--oracle", oracle, "replace predictions by the truth");
  eval->add_option("--out", out);

  auto* ablate = app.add_subcommand("ablate", "train the variant matrix under one seed");
  ablate_flags.attach(*ablate);
  ablate->add_option("--data", data)->required();
  ablate->add_option("--out", out);
  ablate->add_flag("!--no-variants", with_variants, "skip the operator variants A-D");

  auto* noise = app.add_subcommand("noise", "clean versus Gaussian-polluted training");
  noise_flags.attach(*noise);
  noise->add_option("--data", data)->required();
  noise->add_option("--sigma", sigma)->check(CLI::NonNegativeNumber);
  noise->add_option("--noise-seed", noise_seed);
  noise->add_option("--out", out);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every primitive");
  gradcheck->add_option("--out", out);

  auto* export_graphs = app.add_subcommand("export-graphs", "dump normalised adjacencies as CSV and PGM");
  export_graphs->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  export_graphs->add_option("--steps", steps, "1-based time steps")->delimiter(',');
  export_graphs->add_option("--out", out);

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset");
  synth_cmd->add_option("--nodes", synth.nodes);
  synth_cmd->add_option("--steps", synth.steps);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--drift-period", synth.drift_period, "steps per adjacency rotation; inf for static");
  synth_cmd->add_option("--features", synth.features, "1 or 3");
  synth_cmd->add_option("--coupling", synth.coupling);
  synth_cmd->add_option("--noise-std", synth.noise_std);
  synth_cmd->add_option("--spike-rate", synth.spike_rate);
  synth_cmd->add_option("--out", synth_out, "output path (.stts or .csv)");

  CLI11_PARSE(app, argc, argv);

  try {
    apply_thread_cap();
    if (*train) {
      tgcn::cmd_train(train_flags.resolve(), data, out, std::cout);
    } else if (*eval) {
      tgcn::EvalOptions options;
      options.split = tgcn::parse_split_name(split);
      options.oracle = oracle;
      tgcn::cmd_eval(checkpoint, data, options, out, std::cout);
    } else if (*ablate) {
      tgcn::cmd_ablate(ablate_flags.resolve(), data, with_variants, out, std::cout);
    } else if (*noise) {
      tgcn::cmd_noise(noise_flags.resolve(), data, sigma, noise_seed, out, std::cout);
    } else if (*gradcheck) {
      return tgcn::cmd_gradcheck(out, std::cout) ? 0 : 1;
    } else if (*export_graphs) {
      tgcn::cmd_export_graphs(checkpoint, steps, out, std::cout);
    } else if (*synth_cmd) {
      synth.validate();
      tgcn::cmd_synth(synth, synth_out, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
