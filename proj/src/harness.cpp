#include "tgcn/harness.hpp"

#include "tgcn/gradcheck.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace tgcn {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ------------------------------------------------------------- data plumbing

SplitName parse_split_name(const std::string& name) {
  if (name == "train") return SplitName::Train;
  if (name == "val" || name == "validation") return SplitName::Val;
  if (name == "test") return SplitName::Test;
  throw ConfigError("unknown split '" + name + "' (train, val, test)");
}

std::string_view to_string(SplitName s) {
  switch (s) {
    case SplitName::Train: return "train";
    case SplitName::Val: return "val";
    case SplitName::Test: return "test";
  }
  return "?";
}

PreparedData::PreparedData(const SpatialTemporalSeries& series, const SplitRatios& ratios, Index input_steps,
                           Index horizon, Index target_channel) {
  build(series, ratios, input_steps, horizon, target_channel, nullptr);
}

PreparedData::PreparedData(const SpatialTemporalSeries& series, const SplitRatios& ratios, Index input_steps,
                           Index horizon, Index target_channel, const Scaler& scaler) {
  build(series, ratios, input_steps, horizon, target_channel, &scaler);
}

void PreparedData::build(const SpatialTemporalSeries& series, const SplitRatios& ratios, Index input_steps,
                         Index horizon, Index target_channel, const Scaler* scaler) {
  series.validate();
  SeriesSplit parts = split(series, ratios, input_steps + horizon);
  scaler_ = scaler ? *scaler : Scaler::fit(parts.train);
  if (static_cast<Index>(scaler_.mean.size()) != series.features)
    throw DimensionError("scaler has " + std::to_string(scaler_.mean.size()) + " channels, data has " +
                         std::to_string(series.features));
  nodes_ = series.nodes;
  features_ = series.features;
  val_begin_ = parts.val_begin;
  test_begin_ = parts.test_begin;
  auto make = [&](SpatialTemporalSeries& raw) {
    auto raw_ptr = std::make_shared<const SpatialTemporalSeries>(raw);
    auto norm_ptr = std::make_shared<const SpatialTemporalSeries>(scaler_.apply(raw));
    return WindowedSamples(norm_ptr, raw_ptr, input_steps, horizon, target_channel);
  };
  train_.emplace(make(parts.train));
  val_.emplace(make(parts.val));
  test_.emplace(make(parts.test));
}

const WindowedSamples& PreparedData::windows(SplitName s) const {
  switch (s) {
    case SplitName::Train: return *train_;
    case SplitName::Val: return *val_;
    case SplitName::Test: return *test_;
  }
  throw ContractError("unknown split");
}

void write_loss_row(std::ostream& out, Index step, Index epoch, const GanLossBundle& b) {
  auto cell = [&](double v) -> std::ostream& {
    if (std::isnan(v)) return out << ",";
    return out << ',' << v;
  };
  out << step << ',' << epoch << std::setprecision(9);
  for (double v : {b.l_p, b.l_d_seq, b.l_d_graph, b.l_adv, b.l_total, b.d_seq_real, b.d_seq_fake, b.d_graph_real,
                   b.d_graph_fake})
    cell(v);
  out << '\n';
}

namespace {

void ensure_dir(const fs::path& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json metrics_json(const ErrorMetrics& m) {
  return {{"mae", m.mae}, {"rmse", m.rmse}, {"mape", m.mape}, {"count", m.count}};
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::vector<double> parse_list(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint metadata lacks '" + key + "'");
  std::vector<double> out;
  std::stringstream ss(it->second);
  for (std::string item; std::getline(ss, item, ',');) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size())
      throw FormatError("checkpoint metadata '" + key + "' holds a bad number '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void check_extents(const ModelConfig& model, const SpatialTemporalSeries& series) {
  if (model.nodes != series.nodes || model.features != series.features)
    throw DimensionError("checkpoint expects " + std::to_string(model.nodes) + " nodes x " +
                         std::to_string(model.features) + " features, dataset has " + std::to_string(series.nodes) +
                         " x " + std::to_string(series.features));
}

}  // namespace

RestoredModel restore(const fs::path& checkpoint) {
  Checkpoint ck = Checkpoint::load(checkpoint);
  ModelConfig model = ModelConfig::from_meta(ck.meta);
  std::map<std::string, std::string> train_keys;
  for (const auto& [k, v] : ck.meta)
    if (k.rfind("train.", 0) == 0) train_keys[k.substr(6)] = v;
  RestoredModel out;
  out.config = TrainConfig::from_map(train_keys);
  out.scaler.mean = parse_list(ck.meta, "scaler.mean");
  out.scaler.std = parse_list(ck.meta, "scaler.std");
  out.scaler.clamped.assign(out.scaler.std.size(), false);
  if (static_cast<Index>(out.scaler.mean.size()) != model.features || out.scaler.std.size() != out.scaler.mean.size())
    throw FormatError("checkpoint scaler does not match the model's feature count");
  out.trainer = std::make_unique<Trainer<float>>(out.config, model.nodes, model.features);
  if (out.trainer->generator.config().to_meta() != model.to_meta())
    throw FormatError("checkpoint model metadata disagrees with its training configuration");
  ck.get_all(out.trainer->named_parameters());
  return out;
}

// ---------------------------------------------------------------------- train

TrainArtifacts train_series(const TrainConfig& cfg, const SpatialTemporalSeries& series, const fs::path& out_dir,
                            std::ostream& log) {
  cfg.validate();
  PreparedData data(series, cfg.split, cfg.input_steps, cfg.horizon, cfg.target_channel);
  for (Index c = 0; c < data.features(); ++c)
    if (data.scaler().clamped[static_cast<std::size_t>(c)])
      log << "warning: channel " << c << " has zero variance on the training split; std clamped to "
          << Scaler::kMinStd << '\n';

  Trainer<float> trainer(cfg, data.nodes(), data.features());
  log << "train: " << data.nodes() << " nodes, " << data.features() << " features, "
      << data.windows(SplitName::Train).count() << " train / " << data.windows(SplitName::Val).count() << " val / "
      << data.windows(SplitName::Test).count() << " test windows, " << trainer.generator.parameter_count()
      << " generator parameters, micro-batch " << cfg.micro_batch_for(data.nodes()) << '\n';

  TrainArtifacts out;
  std::ofstream loss_file;
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    out.loss_log = out_dir / "loss_log.csv";
    loss_file.open(out.loss_log, std::ios::trunc);
  }
  out.fit = trainer.fit(data, out_dir.empty() ? nullptr : &loss_file, [&](const EpochRecord& r) {
    log << "  epoch " << std::setw(3) << r.epoch << "  train l_p " << fmt(r.train_l_p) << "  val MAE "
        << fmt(r.val_mae) << "  (" << fmt(r.seconds, 1) << " s)\n";
    log.flush();
  });
  out.val_metrics = trainer.evaluate(data.windows(SplitName::Val), data.scaler());
  out.test_metrics = trainer.evaluate(data.windows(SplitName::Test), data.scaler());
  log << "best epoch " << out.fit.best_epoch << ", val MAE " << fmt(out.val_metrics.back().mae) << ", test MAE/RMSE/MAPE "
      << fmt(out.test_metrics.back().mae) << "/" << fmt(out.test_metrics.back().rmse) << "/"
      << fmt(out.test_metrics.back().mape, 2) << "%\n";

  if (!out_dir.empty()) {
    loss_file.close();
    out.checkpoint = out_dir / "model.tgcn";
    trainer.to_checkpoint(data.scaler()).save(out.checkpoint);
    std::ofstream epochs(out_dir / "epochs.csv", std::ios::trunc);
    epochs << "epoch,train_l_p,val_mae,seconds\n" << std::setprecision(9);
    for (const auto& r : out.fit.epochs)
      epochs << r.epoch << ',' << r.train_l_p << ',' << r.val_mae << ',' << r.seconds << '\n';
    MetricAccumulator::write_csv(out.test_metrics, out_dir / "test_metrics.csv");
    json summary = {{"best_epoch", out.fit.best_epoch},
                    {"epochs_run", out.fit.epochs.size()},
                    {"stopped_early", out.fit.stopped_early},
                    {"steps", out.fit.steps},
                    {"val", metrics_json(out.val_metrics.back())},
                    {"test", metrics_json(out.test_metrics.back())},
                    {"config", cfg.to_map()}};
    write_json(summary, out_dir / "summary.json");
  }
  return out;
}

TrainArtifacts cmd_train(const TrainConfig& cfg, const fs::path& dataset, const fs::path& out_dir, std::ostream& log) {
  return train_series(cfg, load_container(dataset), out_dir, log);
}

// ----------------------------------------------------------------------- eval

EvalReport cmd_eval(const fs::path& checkpoint, const fs::path& dataset, const EvalOptions& options,
                    const fs::path& out_dir, std::ostream& log) {
  RestoredModel model = restore(checkpoint);
  SpatialTemporalSeries series = load_container(dataset);
  check_extents(model.trainer->generator.config(), series);
  const TrainConfig& cfg = model.config;
  PreparedData data(series, cfg.split, cfg.input_steps, cfg.horizon, cfg.target_channel, model.scaler);
  const WindowedSamples& windows = data.windows(options.split);

  auto p = model.trainer->predict_split(windows, model.scaler);
  if (options.oracle) p.pred.data = p.truth.data;

  EvalReport report;
  MetricAccumulator acc(cfg.horizon, cfg.mask_eps);
  acc.add(p.truth, p.pred, p.observed);
  report.metrics = acc.finish();

  // Trend diagnostics in double on the raw scale.
  Tape<double> tape;
  Var<double> truth = tape.constant(p.truth.cast<double>());
  Var<double> pred = tape.constant(p.pred.cast<double>());
  Var<double> observed = tape.constant(p.observed.cast<double>());
  Var<double> reflected = reflect_prediction(truth, pred);
  {
    const Eigen::ArrayXd t = truth.value(), r = reflected.value(), o = observed.value();
    report.mae_reflected = compute_metrics(t, r, cfg.mask_eps, &o).mae;
  }
  report.trend_pred = trend_loss(truth, pred).item();
  report.trend_reflected = trend_loss(truth, reflected).item();
  report.trend_gap = trend_loss(pred, reflected).item();

  // Sequence discriminator on true versus reflected futures (normalised).
  {
    const double mean = model.scaler.mean[0], sd = model.scaler.std[0];
    const Index w = windows.count(), h = cfg.horizon, n = data.nodes();
    Tensor<float> true_future({w, h, n}), refl_future({w, h, n});
    for (Index i = 0; i < true_future.size(); ++i) {
      true_future.data[i] = static_cast<float>((p.truth.data[i] - mean) / sd);
      refl_future.data[i] = static_cast<float>((reflected.value()[i] - mean) / sd);
    }
    double true_sum = 0, refl_sum = 0;
    Index count = 0;
    for (Index lo = 0; lo < w; lo += cfg.batch_size) {
      const Index hi = std::min(w, lo + cfg.batch_size);
      Tape<float> t;
      Var<float> hist = t.constant(detail::rows(p.history, lo, hi));
      true_sum += model.trainer->d_seq.scores(build_seq_sample(hist, t.constant(detail::rows(true_future, lo, hi))), false)
                      .value()
                      .template cast<double>()
                      .sum();
      refl_sum += model.trainer->d_seq.scores(build_seq_sample(hist, t.constant(detail::rows(refl_future, lo, hi))), false)
                      .value()
                      .template cast<double>()
                      .sum();
      count += (hi - lo) * n;
    }
    report.d_seq_true = true_sum / static_cast<double>(count);
    report.d_seq_reflected = refl_sum / static_cast<double>(count);
  }

  ensure_dir(out_dir);
  report.metrics_csv = out_dir / ("metrics_" + std::string(to_string(options.split)) + ".csv");
  MetricAccumulator::write_csv(report.metrics, report.metrics_csv);
  write_json({{"split", to_string(options.split)},
              {"windows", windows.count()},
              {"oracle", options.oracle},
              {"average", metrics_json(report.metrics.back())},
              {"mae_reflected", report.mae_reflected},
              {"trend_loss_pred", report.trend_pred},
              {"trend_loss_reflected", report.trend_reflected},
              {"trend_loss_pred_vs_reflected", report.trend_gap},
              {"d_seq_true_mean", report.d_seq_true},
              {"d_seq_reflected_mean", report.d_seq_reflected}},
             out_dir / ("eval_" + std::string(to_string(options.split)) + ".json"));

  log << "eval on " << to_string(options.split) << " (" << windows.count() << " windows)\n";
  log << "  horizon    MAE      RMSE     MAPE\n";
  for (std::size_t i = 0; i < report.metrics.size(); ++i) {
    const auto& m = report.metrics[i];
    log << "  " << std::setw(7) << (i + 1 == report.metrics.size() ? std::string("avg") : std::to_string(i + 1)) << "  "
        << std::setw(7) << fmt(m.mae) << "  " << std::setw(7) << fmt(m.rmse) << "  " << std::setw(6) << fmt(m.mape, 2)
        << "%\n";
  }
  log << "  reflected prediction: MAE " << fmt(report.mae_reflected) << ", trend loss vs truth "
      << fmt(report.trend_reflected) << " (prediction " << fmt(report.trend_pred) << "), trend gap to prediction "
      << fmt(report.trend_gap) << '\n'
      << "  sequence discriminator: true futures " << fmt(report.d_seq_true, 4) << ", reflected "
      << fmt(report.d_seq_reflected, 4) << '\n';
  return report;
}

// --------------------------------------------------------------------- ablate

std::vector<TrainConfig> ablation_configs(const TrainConfig& base, bool with_operator_variants,
                                          std::vector<AblationRow>* rows) {
  std::vector<TrainConfig> configs;
  auto push = [&](TrainConfig c, std::string name, std::string graph, std::string adv) {
    configs.push_back(c);
    if (rows) {
      AblationRow r;
      r.name = std::move(name);
      r.graph = std::move(graph);
      r.adversarial = std::move(adv);
      r.delta1 = c.delta1;
      r.delta2 = c.delta2;
      rows->push_back(r);
    }
  };
  for (bool is_static : {false, true}) {
    for (const char* adv : {"full", "seq-only", "graph-only", "none"}) {
      TrainConfig c = base;
      c.static_graph = is_static;
      c.no_adv = c.seq_only = c.graph_only = false;
      const std::string a = adv;
      if (a == "seq-only") c.seq_only = true;
      if (a == "graph-only") c.graph_only = true;
      if (a == "none") c.no_adv = true;
      const std::string graph = is_static ? "static" : "dynamic";
      push(c, graph + "/" + a, graph, a);
    }
  }
  if (with_operator_variants) {
    for (GraphVariant v : {GraphVariant::A, GraphVariant::B, GraphVariant::C, GraphVariant::D}) {
      TrainConfig c = base;
      c.static_graph = false;
      c.no_adv = c.seq_only = c.graph_only = false;
      GraphGenConfig g = with_variant(GraphGenConfig{}, v);
      c.delta1 = g.delta1;
      c.delta2 = g.delta2;
      push(c, "variant-" + std::string(to_string(v)), "dynamic", "full");
    }
  }
  return configs;
}

std::vector<AblationRow> ablate_series(const TrainConfig& base, const SpatialTemporalSeries& series,
                                       bool with_operator_variants, const fs::path& out_dir, std::ostream& log) {
  std::vector<AblationRow> rows;
  std::vector<TrainConfig> configs = ablation_configs(base, with_operator_variants, &rows);
  std::ostringstream quiet;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    log << "[" << i + 1 << "/" << configs.size() << "] " << rows[i].name << " ... ";
    log.flush();
    TrainArtifacts run = train_series(configs[i], series, out_dir.empty() ? fs::path{} : out_dir / rows[i].name, quiet);
    rows[i].best_epoch = run.fit.best_epoch;
    rows[i].val_mae = run.val_metrics.back().mae;
    rows[i].test = run.test_metrics.back();
    log << "val MAE " << fmt(rows[i].val_mae) << ", test MAE " << fmt(rows[i].test.mae) << '\n';
  }
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    std::ofstream csv(out_dir / "ablation.csv", std::ios::trunc);
    csv << "name,graph,adversarial,delta1,delta2,best_epoch,val_mae,test_mae,test_rmse,test_mape\n"
        << std::setprecision(9);
    for (const auto& r : rows)
      csv << r.name << ',' << r.graph << ',' << r.adversarial << ',' << to_string(r.delta1) << ','
          << to_string(r.delta2) << ',' << r.best_epoch << ',' << r.val_mae << ',' << r.test.mae << ','
          << r.test.rmse << ',' << r.test.mape << '\n';
  }
  return rows;
}

std::vector<AblationRow> cmd_ablate(const TrainConfig& base, const fs::path& dataset, bool with_operator_variants,
                                    const fs::path& out_dir, std::ostream& log) {
  return ablate_series(base, load_container(dataset), with_operator_variants, out_dir, log);
}

// ---------------------------------------------------------------------- noise

NoiseReport noise_series(const TrainConfig& cfg, const SpatialTemporalSeries& series, double sigma,
                         std::uint64_t noise_seed, const fs::path& out_dir, std::ostream& log) {
  NoiseReport report;
  report.sigma = sigma;
  SpatialTemporalSeries polluted = inject_gaussian_noise(series, sigma, noise_seed);
  std::ostringstream quiet;
  log << "training on clean data ... ";
  log.flush();
  report.clean = train_series(cfg, series, out_dir.empty() ? fs::path{} : out_dir / "clean", quiet).test_metrics.back();
  log << "MAE/RMSE " << fmt(report.clean.mae, 2) << "/" << fmt(report.clean.rmse, 2) << "\ntraining on +N(0, "
      << sigma << "^2) data ... ";
  log.flush();
  report.noisy = train_series(cfg, polluted, out_dir.empty() ? fs::path{} : out_dir / "noisy", quiet).test_metrics.back();
  log << "MAE/RMSE " << fmt(report.noisy.mae, 2) << "/" << fmt(report.noisy.rmse, 2) << '\n';
  report.mae_increment = format_increment(report.clean.mae, report.noisy.mae);
  report.rmse_increment = format_increment(report.clean.rmse, report.noisy.rmse);

  std::ostringstream sigma_label;
  sigma_label << "+N(0," << sigma << "^2)";
  const std::string rows[3][2] = {
      {"clean", fmt(report.clean.mae, 2) + "/" + fmt(report.clean.rmse, 2)},
      {sigma_label.str(), fmt(report.noisy.mae, 2) + "/" + fmt(report.noisy.rmse, 2)},
      {"+Delta errors", report.increment_cell()}};
  log << "\n  data              MAE/RMSE\n";
  for (const auto& r : rows) log << "  " << std::left << std::setw(16) << r[0] << "  " << r[1] << std::right << '\n';
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    std::ofstream csv(out_dir / "noise.csv", std::ios::trunc);
    csv << "row,mae_rmse\n";
    for (const auto& r : rows) csv << r[0] << ',' << r[1] << '\n';
  }
  return report;
}

NoiseReport cmd_noise(const TrainConfig& cfg, const fs::path& dataset, double sigma, std::uint64_t noise_seed,
                      const fs::path& out_dir, std::ostream& log) {
  return noise_series(cfg, load_container(dataset), sigma, noise_seed, out_dir, log);
}

// ------------------------------------------------------------------ gradcheck

ModelConfig gradcheck_toy_model() {
  ModelConfig cfg;
  cfg.nodes = 4;
  cfg.features = 2;
  cfg.outputs = 1;
  cfg.input_steps = 3;
  cfg.horizon = 2;
  cfg.hidden = 3;
  cfg.embed_dim = 2;
  cfg.graph.dropout_rate = 0.1;
  return cfg;
}

std::vector<GradcheckRow> run_gradcheck() {
  using V = Var<double>;
  std::vector<GradcheckRow> rows;
  auto record = [&](const std::string& name, const GradientComparison& r) {
    rows.push_back({name, r.max_rel_error, r.entries, r.max_rel_error < kGradcheckTolerance});
  };
  auto unary = [&](const std::string& name, const std::function<V(const V&)>& op, Shape shape, std::uint64_t seed,
                   double lo = -1.0, double hi = 1.0) {
    CounterRng rng(seed);
    std::vector<Tensor<double>> in{random_tensor(std::move(shape), rng, lo, hi)};
    record(name, compare_gradients(
                     [&](Tape<double>&, const std::vector<V>& v) { return random_projection(op(v[0]), seed + 99); }, in));
  };
  auto binary = [&](const std::string& name, const std::function<V(const V&, const V&)>& op, Shape a, Shape b,
                    std::uint64_t seed) {
    CounterRng rng(seed);
    std::vector<Tensor<double>> in{random_tensor(std::move(a), rng), random_tensor(std::move(b), rng)};
    record(name, compare_gradients(
                     [&](Tape<double>&, const std::vector<V>& v) { return random_projection(op(v[0], v[1]), seed + 99); },
                     in));
  };

  unary("reshape", [](const V& x) { return reshape(x, {6, 4}); }, {2, 3, 4}, 1);
  unary("broadcast_to", [](const V& x) { return broadcast_to(x, {5, 3, 4}); }, {3, 1}, 2);
  unary("slice", [](const V& x) { return slice(x, 1, 1, 3); }, {2, 3, 4}, 3);
  binary("concat", [](const V& a, const V& b) { return concat<double>({a, b}, 2); }, {2, 3, 4}, {2, 3, 2}, 4);
  unary("transpose", [](const V& x) { return transpose(x, {2, 0, 1}); }, {2, 3, 4}, 5);
  unary("transpose2d", [](const V& x) { return transpose2d(x); }, {4, 3}, 6);
  binary("matmul", [](const V& a, const V& b) { return matmul(a, b); }, {2, 3, 4}, {2, 4, 5}, 7);
  unary("gram", [](const V& x) { return gram(x); }, {4, 3}, 8);
  binary("add", [](const V& a, const V& b) { return add(a, b); }, {2, 3, 4}, {3, 1}, 9);
  binary("subtract", [](const V& a, const V& b) { return subtract(a, b); }, {2, 3, 4}, {2, 1, 4}, 10);
  binary("hadamard", [](const V& a, const V& b) { return hadamard(a, b); }, {2, 3, 4}, {3, 4}, 11);
  unary("scale", [](const V& x) { return scale(x, -1.7); }, {3, 4}, 12);
  unary("add_scalar", [](const V& x) { return add_scalar(x, 0.3); }, {3, 4}, 13);
  unary("sigmoid", [](const V& x) { return sigmoid(x); }, {3, 4}, 14, -3, 3);
  unary("tanh", [](const V& x) { return tgcn::tanh(x); }, {3, 4}, 15, -2, 2);
  unary("leaky_relu", [](const V& x) { return leaky_relu(x, 0.2); }, {3, 4}, 16);
  unary("abs", [](const V& x) { return tgcn::abs(x); }, {3, 4}, 17);
  unary("log_clamped", [](const V& x) { return log_clamped(x, 1e-12); }, {3, 4}, 18, 0.2, 2.0);
  unary("clamp", [](const V& x) { return clamp(x, -0.5, 0.5); }, {3, 4}, 19);
  unary("sum", [](const V& x) { return sum(x, 1); }, {2, 3, 4}, 20);
  unary("mean", [](const V& x) { return mean(x, 0); }, {2, 3, 4}, 21);
  unary("sum_all", [](const V& x) { return sum_all(hadamard(x, x)); }, {2, 3}, 22);
  unary("mean_all", [](const V& x) { return mean_all(hadamard(x, x)); }, {2, 3}, 23);
  unary("softmax", [](const V& x) { return softmax(x, 1); }, {3, 5}, 24, -2, 2);
  {
    CounterRng rng(25);
    std::vector<Tensor<double>> in{random_tensor({3, 5}, rng, -2, 2), random_tensor({5}, rng, 0.5, 1.5),
                                   random_tensor({5}, rng)};
    record("layer_norm", compare_gradients(
                             [](Tape<double>&, const std::vector<V>& v) {
                               return random_projection(layer_norm(v[0], 1, v[1], v[2]), 124);
                             },
                             in));
  }
  unary("dropout", [](const V& x) { return dropout(x, 0.3, true, 7); }, {4, 5}, 26);
  unary("one_minus", [](const V& x) { return one_minus(x); }, {3, 4}, 27);

  // Composed generator objective: L1 + alpha * seq term + beta * graph term.
  {
    ModelConfig cfg = gradcheck_toy_model();
    Generator<double> model(cfg, 0);
    CounterRng xr(100), yr(200);
    Tensor<double> x = random_tensor({2, 3, 4, 2}, xr, -1, 1, false);
    Tensor<double> target = random_tensor({2, 2, 4, 1}, yr, -1, 1, false);
    auto d_seq = MlpDiscriminator<double>::sequence(cfg.input_steps + cfg.horizon, 0.2, 300);
    auto d_graph = MlpDiscriminator<double>::graph(cfg.nodes, 0.2, 301);
    AdvConfig adv;
    const Tensor<double> history = detail::channel(x, 0);
    const Tensor<double> real_future = detail::drop_last_axis(target);
    record("composed_total_loss",
           compare_gradients(
               [&](Tape<double>& tape) {
                 V pred = model.forward(tape.constant(x), true, 3);
                 V l_p = l1_prediction_loss(tape.constant(target), pred);
                 V hist = tape.constant(history), real = tape.constant(real_future);
                 V fake = reshape(pred, {2, 2, 4});
                 V l_adv = gen_adv_loss(d_seq, d_graph, build_seq_sample(hist, real), build_seq_sample(hist, fake),
                                        build_graph_sample(real), build_graph_sample(fake), adv);
                 return add(l_p, l_adv);
               },
               model.parameters()));
  }
  return rows;
}

bool cmd_gradcheck(const fs::path& out_dir, std::ostream& log) {
  std::vector<GradcheckRow> rows = run_gradcheck();
  bool ok = true;
  log << "  primitive              max rel. error   entries  result\n";
  for (const auto& r : rows) {
    ok = ok && r.pass;
    std::ostringstream err;
    err << std::scientific << std::setprecision(2) << r.max_rel_error;
    log << "  " << std::left << std::setw(22) << r.name << std::right << std::setw(14) << err.str() << std::setw(10)
        << r.entries << "  " << (r.pass ? "pass" : "FAIL") << '\n';
  }
  log << (ok ? "all " : "NOT all ") << rows.size() << " checks below " << kGradcheckTolerance << '\n';
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    std::ofstream csv(out_dir / "gradcheck.csv", std::ios::trunc);
    csv << "name,max_rel_error,entries,pass\n" << std::setprecision(6);
    for (const auto& r : rows) csv << r.name << ',' << r.max_rel_error << ',' << r.entries << ',' << r.pass << '\n';
  }
  return ok;
}

// ------------------------------------------------------------- export graphs

ExportReport cmd_export_graphs(const fs::path& checkpoint, const std::vector<Index>& steps, const fs::path& out_dir,
                               std::ostream& log) {
  RestoredModel model = restore(checkpoint);
  Generator<float>& g = model.trainer->generator;
  ExportReport report;
  ensure_dir(out_dir);
  RowMatrix<double> first;
  for (Index t : steps) {
    if (t < 1 || t > g.config().input_steps)
      throw ConfigError("export step " + std::to_string(t) + " outside 1.." + std::to_string(g.config().input_steps));
    Tape<float> tape;
    RowMatrix<double> a = g.adjacency(tape, t).normalized().cast<double>();
    report.max_row_error = std::max(report.max_row_error, (a.rowwise().sum().array() - 1.0).abs().maxCoeff());
    if (first.size() == 0) {
      first = a;
    } else if (std::memcmp(first.data(), a.data(), sizeof(double) * static_cast<std::size_t>(a.size())) != 0) {
      report.identical = false;
    }
    const fs::path stem = out_dir / ("adjacency_t" + std::to_string(t));
    export_adjacency(a, stem);
    report.csv_files.push_back(fs::path(stem) += ".csv");
  }
  log << "exported " << steps.size() << " adjacency matrices to " << out_dir.string() << " (max |row sum - 1| "
      << report.max_row_error << ", " << (report.identical ? "all identical" : "time-varying") << ")\n";
  return report;
}

// ---------------------------------------------------------------------- synth

void cmd_synth(const SynthConfig& cfg, const fs::path& out, std::ostream& log) {
  SyntheticDataset data = synthesize(cfg);
  if (out.extension() == ".csv") {
    save_csv(data.series, out);
  } else {
    save_container(data.series, out);
  }
  const RowMatrix<double>& base = data.adjacency.base();
  Index edges = 0;
  for (Index i = 0; i < base.rows(); ++i)
    for (Index j = 0; j < base.cols(); ++j) edges += base(i, j) > 0 ? 1 : 0;
  log << "wrote " << out.string() << ": " << cfg.steps << " steps x " << cfg.nodes << " nodes x " << cfg.features
      << " features, " << edges << " directed edges, drift period " << cfg.drift_period << '\n';
}

}  // namespace tgcn
