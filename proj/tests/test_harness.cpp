#include "doctest.h"

#include "tgcn/harness.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

using namespace tgcn;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "tgcn_test_harness" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string file_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Index line_count(const std::filesystem::path& p) {
  const std::string text = file_text(p);
  return static_cast<Index>(std::count(text.begin(), text.end(), '\n'));
}

SpatialTemporalSeries tiny_series(Index nodes = 5, Index steps = 240, std::uint64_t seed = 3) {
  SynthConfig s;
  s.nodes = nodes;
  s.steps = steps;
  s.seed = seed;
  return synthesize(s).series;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.hidden = 8;
  c.embed_dim = 2;
  c.input_steps = 4;
  c.horizon = 3;
  c.batch_size = 16;
  c.epochs = 2;
  return c;
}

}  // namespace

TEST_CASE("config defaults") {
  TrainConfig c;
  CHECK(c.lr == 0.003);
  CHECK(c.batch_size == 64);
  CHECK(c.alpha == 0.01);
  CHECK(c.beta == 1.0);
  CHECK(c.input_steps == 12);
  CHECK(c.horizon == 12);
  CHECK(c.hidden == 64);
  CHECK(c.gru_layers == 2);
  CHECK(c.gcn_layers == 2);
  CHECK(c.patience == 15);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config keys, aliases and dashes") {
  TrainConfig c;
  c.set("lr", "0.01");
  c.set("de", "10");
  c.set("static-graph", "true");
  c.set("batch", "32");
  c.set("split", "7:1:2");
  CHECK(c.lr == 0.01);
  CHECK(c.embed_dim == 10);
  CHECK(c.static_graph);
  CHECK(c.batch_size == 32);
  CHECK(c.split.train == doctest::Approx(0.7));
  CHECK(c.split.val == doctest::Approx(0.1));
  c.set("variant", "B");
  CHECK(c.delta1 == Combine::Hadamard);
  CHECK(c.delta2 == Combine::Hadamard);
  CHECK_THROWS_AS(c.set("learning_rate", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("lr", "fast"), ConfigError);
  CHECK_THROWS_AS(c.set("no_adv", "maybe"), ConfigError);
  CHECK_THROWS_AS(c.set("split", "6:2"), ConfigError);
}

TEST_CASE("config profiles set embedding width and split") {
  const std::map<std::string, Index> widths = {{"PEMS03", 4}, {"PEMS04", 6}, {"PEMS07", 10},
                                               {"PEMS08", 4}, {"METR-LA", 10}, {"PEMS-BAY", 10}};
  for (const auto& [name, width] : widths) {
    TrainConfig c;
    c.apply_profile(name);
    CHECK(c.embed_dim == width);
  }
  TrainConfig la;
  la.apply_profile("metr-la");
  CHECK(la.split.train == 0.7);
  CHECK(la.mask_eps == 0.1);
  CHECK_THROWS_AS(la.apply_profile("PEMS99"), ConfigError);
  // An explicit key wins over the profile regardless of order.
  TrainConfig m = TrainConfig::from_map({{"de", "3"}, {"profile", "PEMS07"}});
  CHECK(m.embed_dim == 3);
}

TEST_CASE("config file round trip") {
  auto dir = scratch("config");
  {
    std::ofstream out(dir / "run.cfg");
    out << "# comment\nlr = 0.005\n\nalpha=0.5  # trailing\nno-adv=0\nvariant=C\n";
  }
  TrainConfig c = TrainConfig::from_file(dir / "run.cfg");
  CHECK(c.lr == 0.005);
  CHECK(c.alpha == 0.5);
  CHECK(c.delta1 == Combine::Add);
  CHECK(c.delta2 == Combine::Hadamard);
  TrainConfig back = TrainConfig::from_map(c.to_map());
  CHECK(back.to_map() == c.to_map());
  {
    std::ofstream out(dir / "bad.cfg");
    out << "lr 0.1\n";
  }
  CHECK_THROWS_AS(TrainConfig::from_file(dir / "bad.cfg"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_file(dir / "missing.cfg"), InputError);
}

TEST_CASE("ablation flags map onto adversarial weights") {
  TrainConfig c;
  CHECK(c.adv_config().alpha == 0.01);
  CHECK(c.adv_config().beta == 1.0);
  c.no_adv = true;
  CHECK(c.adv_config().alpha == 0.0);
  CHECK(c.adv_config().beta == 0.0);
  c.no_adv = false;
  c.seq_only = true;
  CHECK(c.adv_config().alpha == 0.01);
  CHECK(c.adv_config().beta == 0.0);
  c.seq_only = false;
  c.graph_only = true;
  CHECK(c.adv_config().alpha == 0.0);
  CHECK(c.adv_config().beta == 1.0);
  c.no_adv = true;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("ablation matrix") {
  std::vector<AblationRow> rows;
  auto configs = ablation_configs(TrainConfig{}, true, &rows);
  REQUIRE(configs.size() == 12);
  REQUIRE(rows.size() == 12);
  std::set<std::string> names;
  for (const auto& r : rows) names.insert(r.name);
  CHECK(names.size() == 12);
  // static x none is the plain adaptive-graph recurrent baseline.
  auto it = std::find_if(rows.begin(), rows.end(), [](const AblationRow& r) { return r.name == "static/none"; });
  REQUIRE(it != rows.end());
  const TrainConfig& baseline = configs[static_cast<std::size_t>(it - rows.begin())];
  CHECK(baseline.static_graph);
  CHECK(baseline.adv_config().alpha == 0.0);
  CHECK(baseline.adv_config().beta == 0.0);
  CHECK(baseline.model_config(4, 1).static_graph);
  for (std::size_t i = 8; i < 12; ++i) {
    CHECK_FALSE(configs[i].static_graph);
    CHECK(configs[i].adv_config().alpha == 0.01);
  }
  CHECK(configs[8].delta1 == Combine::Concat);
  CHECK(configs[9].delta1 == Combine::Hadamard);
  CHECK(configs[10].delta2 == Combine::Hadamard);
  CHECK(configs[11].delta2 == Combine::Add);
  CHECK(ablation_configs(TrainConfig{}, false).size() == 8);
}

TEST_CASE("zero adversarial weights give pure L1 training") {
  TrainConfig cfg = tiny_config();
  cfg.no_adv = true;
  PreparedData data(tiny_series(), cfg.split, cfg.input_steps, cfg.horizon);
  Trainer<double> trainer(cfg, data.nodes(), data.features());
  const auto& train = data.windows(SplitName::Train);
  for (std::uint64_t s = 0; s < 3; ++s) {
    GanLossBundle log = trainer.step(train.batch<double>({0, 5, 9, 17}), s);
    CHECK(log.l_adv == 0.0);
    CHECK(log.l_total == log.l_p);
    CHECK(std::isnan(log.l_d_seq));
    CHECK(std::isnan(log.l_d_graph));
  }
  std::ostringstream row;
  write_loss_row(row, 1, 1, trainer.step(train.batch<double>({1}), 9));
  CHECK(row.str().find(",,") != std::string::npos);
  CHECK(row.str().find("nan") == std::string::npos);
}

TEST_CASE("reported total equals prediction plus adversarial loss") {
  TrainConfig cfg = tiny_config();
  PreparedData data(tiny_series(), cfg.split, cfg.input_steps, cfg.horizon);
  Trainer<double> trainer(cfg, data.nodes(), data.features());
  const auto& train = data.windows(SplitName::Train);
  for (std::uint64_t s = 0; s < 4; ++s) {
    GanLossBundle log = trainer.step(train.batch<double>({0, 3, 8, 11, 20}), s);
    CHECK(log.l_adv > 0.0);
    CHECK(std::abs(log.l_total - (log.l_p + log.l_adv)) < 1e-6);
    for (double score : {log.d_seq_real, log.d_seq_fake, log.d_graph_real, log.d_graph_fake}) {
      CHECK(score > 0.0);
      CHECK(score < 1.0);
    }
  }
}

TEST_CASE("micro-batching leaves the generator gradient unchanged") {
  TrainConfig whole = tiny_config();
  whole.dropout_rate = 0.0;
  TrainConfig chunked = whole;
  chunked.micro_batch = 2;
  PreparedData data(tiny_series(), whole.split, whole.input_steps, whole.horizon);
  Trainer<double> a(whole, data.nodes(), data.features());
  Trainer<double> b(chunked, data.nodes(), data.features());
  Batch<double> batch = data.windows(SplitName::Train).batch<double>({2, 4, 6, 8, 10});
  GanLossBundle la = a.step(batch, 1);
  GanLossBundle lb = b.step(batch, 1);
  CHECK(la.l_p == doctest::Approx(lb.l_p).epsilon(1e-12));
  CHECK(la.l_adv == doctest::Approx(lb.l_adv).epsilon(1e-12));
  auto pa = a.generator.parameters(), pb = b.generator.parameters();
  double worst = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i)
    worst = std::max(worst, (pa[i]->grad - pb[i]->grad).abs().maxCoeff());
  CHECK(worst < 1e-10);
}

TEST_CASE("non-finite prediction loss aborts with a diagnostic") {
  TrainConfig cfg = tiny_config();
  PreparedData data(tiny_series(), cfg.split, cfg.input_steps, cfg.horizon);
  Trainer<float> trainer(cfg, data.nodes(), data.features());
  Batch<float> batch = data.windows(SplitName::Train).batch<float>({0, 1});
  batch.targets.data.setConstant(3e38f);  // the summed error overflows
  CHECK_THROWS_AS(trainer.step(batch, 0), DivergenceError);
}

TEST_CASE("training is deterministic and writes its artifacts") {
  TrainConfig cfg = tiny_config();
  SpatialTemporalSeries series = tiny_series();
  std::ostringstream quiet;
  auto one = scratch("det_a"), two = scratch("det_b");
  TrainArtifacts a = train_series(cfg, series, one, quiet);
  TrainArtifacts b = train_series(cfg, series, two, quiet);
  for (const char* name : {"loss_log.csv", "epochs.csv", "summary.json", "test_metrics.csv", "model.tgcn"})
    CHECK(std::filesystem::exists(one / name));
  const std::string log = file_text(a.loss_log);
  CHECK(log.rfind(kLossLogHeader, 0) == 0);
  CHECK(log == file_text(b.loss_log));
  CHECK(file_text(a.checkpoint) == file_text(b.checkpoint));
  CHECK(a.fit.epochs.size() == 2);
  CHECK(a.test_metrics.size() == 4);
}

TEST_CASE("restored checkpoint predicts identically") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  SpatialTemporalSeries series = tiny_series();
  auto dir = scratch("restore");
  std::ostringstream quiet;
  TrainArtifacts run = train_series(cfg, series, dir, quiet);
  RestoredModel model = restore(run.checkpoint);
  PreparedData data(series, cfg.split, cfg.input_steps, cfg.horizon);
  CHECK(model.scaler.mean == data.scaler().mean);
  CHECK(model.scaler.std == data.scaler().std);
  auto metrics = model.trainer->evaluate(data.windows(SplitName::Test), model.scaler);
  CHECK(metrics.back().mae == run.test_metrics.back().mae);
  CHECK(model.config.to_map() == cfg.to_map());
}

TEST_CASE("eval: oracle predictions give zero error over 12 horizons plus average") {
  TrainConfig cfg = tiny_config();
  cfg.input_steps = 12;
  cfg.horizon = 12;
  cfg.epochs = 1;
  auto dir = scratch("eval");
  SpatialTemporalSeries series = tiny_series(4, 300);
  save_container(series, dir / "data.stts");
  std::ostringstream quiet;
  TrainArtifacts run = train_series(cfg, series, dir / "run", quiet);

  EvalOptions oracle{SplitName::Train, true};
  EvalReport zero = cmd_eval(run.checkpoint, dir / "data.stts", oracle, dir / "oracle", quiet);
  REQUIRE(zero.metrics.size() == 13);
  for (const auto& m : zero.metrics) {
    CHECK(m.mae == 0.0);
    CHECK(m.rmse == 0.0);
    CHECK(m.mape == 0.0);
  }
  CHECK(line_count(zero.metrics_csv) == 14);

  EvalReport real = cmd_eval(run.checkpoint, dir / "data.stts", EvalOptions{}, dir / "test", quiet);
  CHECK(real.metrics.back().mae == doctest::Approx(run.test_metrics.back().mae).epsilon(1e-9));
  CHECK(real.mae_reflected == doctest::Approx(real.metrics.back().mae).epsilon(1e-5));
  CHECK(real.trend_reflected == doctest::Approx(real.trend_pred).epsilon(1e-9));
  CHECK(real.trend_gap == doctest::Approx(2.0 * real.trend_pred).epsilon(1e-9));
  CHECK(real.trend_gap > 0.0);
  CHECK(real.d_seq_true > 0.0);
  CHECK(real.d_seq_true < 1.0);
  CHECK(real.d_seq_reflected > 0.0);
  CHECK(real.d_seq_reflected < 1.0);
  CHECK(std::filesystem::exists(dir / "test" / "eval_test.json"));

  save_container(tiny_series(5, 300), dir / "wider.stts");
  CHECK_THROWS_AS(cmd_eval(run.checkpoint, dir / "wider.stts", EvalOptions{}, dir / "bad", quiet), DimensionError);
}

TEST_CASE("graph export") {
  TrainConfig cfg = tiny_config();
  cfg.input_steps = 12;
  cfg.horizon = 2;
  cfg.epochs = 1;
  SpatialTemporalSeries series = tiny_series(4, 200);
  std::ostringstream quiet;
  auto dir = scratch("export");

  TrainArtifacts dynamic_run = train_series(cfg, series, dir / "dynamic", quiet);
  ExportReport dyn = cmd_export_graphs(dynamic_run.checkpoint, kDefaultExportSteps, dir / "dyn_graphs", quiet);
  CHECK(dyn.csv_files.size() == 6);
  for (const auto& f : dyn.csv_files) {
    CHECK(std::filesystem::exists(f));
    CHECK(std::filesystem::exists(std::filesystem::path(f).replace_extension(".pgm")));
  }
  CHECK(dyn.max_row_error < 1e-6);
  CHECK_FALSE(dyn.identical);

  cfg.static_graph = true;
  TrainArtifacts static_run = train_series(cfg, series, dir / "static", quiet);
  ExportReport stat = cmd_export_graphs(static_run.checkpoint, kDefaultExportSteps, dir / "static_graphs", quiet);
  CHECK(stat.identical);
  CHECK(stat.max_row_error < 1e-6);
  CHECK_THROWS_AS(cmd_export_graphs(static_run.checkpoint, {13}, dir / "bad", quiet), ConfigError);
}

TEST_CASE("gradient oracle report lists each primitive once and passes") {
  auto rows = run_gradcheck();
  std::set<std::string> names;
  for (const auto& r : rows) {
    CHECK_MESSAGE(r.pass, r.name << " rel. error " << r.max_rel_error);
    CHECK(r.entries > 0);
    names.insert(r.name);
  }
  CHECK(names.size() == rows.size());
  for (const char* required : {"matmul", "gram", "softmax", "layer_norm", "dropout", "sigmoid", "tanh",
                               "leaky_relu", "log_clamped", "composed_total_loss"})
    CHECK(names.count(required) == 1);
  std::ostringstream out;
  CHECK(cmd_gradcheck(scratch("gradcheck"), out));
  CHECK(out.str().find("FAIL") == std::string::npos);
}

TEST_CASE("noise report at sigma 0 shows no increment") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  std::ostringstream log;
  NoiseReport r = noise_series(cfg, tiny_series(), 0.0, 5, scratch("noise"), log);
  CHECK(r.increment_cell() == "+0.00%/+0.00%");
  CHECK(log.str().find("MAE/RMSE") != std::string::npos);
}

TEST_CASE("synth command writes a loadable container") {
  auto dir = scratch("synth");
  SynthConfig s;
  s.nodes = 3;
  s.steps = 50;
  s.features = 3;
  std::ostringstream log;
  cmd_synth(s, dir / "s.stts", log);
  SpatialTemporalSeries back = load_container(dir / "s.stts");
  CHECK(back.steps == 50);
  CHECK(back.nodes == 3);
  CHECK(back.features == 3);
  cmd_synth(s, dir / "s.csv", log);
  CHECK(load_container(dir / "s.csv").values.isApprox(back.values));
}

TEST_CASE("split names") {
  CHECK(parse_split_name("val") == SplitName::Val);
  CHECK(to_string(SplitName::Test) == "test");
  CHECK_THROWS_AS(parse_split_name("holdout"), ConfigError);
}

TEST_CASE("smoke training: validation MAE falls over the first five epochs") {
  TrainConfig cfg;
  cfg.hidden = 32;
  cfg.epochs = 5;
  std::ostringstream quiet;
  TrainArtifacts run = train_series(cfg, synthesize(16, 2880, 0, 288).series, {}, quiet);
  REQUIRE(run.fit.epochs.size() == 5);
  for (std::size_t e = 1; e < 5; ++e) CHECK(run.fit.epochs[e].val_mae < run.fit.epochs[e - 1].val_mae);
}
