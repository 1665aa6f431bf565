#pragma once

// Alternating adversarial training: per batch one step on each
// discriminator against detached predictions, then one generator step on
// L1 + adversarial loss with both discriminators frozen.

#include "tgcn/adam.hpp"
#include "tgcn/adversary.hpp"
#include "tgcn/checkpoint.hpp"
#include "tgcn/config.hpp"
#include "tgcn/data.hpp"
#include "tgcn/generator.hpp"

#include <charconv>
#include <chrono>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>

namespace tgcn {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SplitName { Train, Val, Test };
SplitName parse_split_name(const std::string& name);
std::string_view to_string(SplitName s);

/// A series cut into chronological splits, scaled with train statistics,
/// and windowed.
class PreparedData {
 public:
  PreparedData(const SpatialTemporalSeries& series, const SplitRatios& ratios, Index input_steps, Index horizon,
               Index target_channel = 0);
  /// Reuses a fitted scaler (evaluation of a saved model).
  PreparedData(const SpatialTemporalSeries& series, const SplitRatios& ratios, Index input_steps, Index horizon,
               Index target_channel, const Scaler& scaler);

  const Scaler& scaler() const { return scaler_; }
  const WindowedSamples& windows(SplitName s) const;
  Index nodes() const { return nodes_; }
  Index features() const { return features_; }
  Index val_begin() const { return val_begin_; }
  Index test_begin() const { return test_begin_; }

 private:
  void build(const SpatialTemporalSeries& series, const SplitRatios& ratios, Index input_steps, Index horizon,
             Index target_channel, const Scaler* scaler);
  Scaler scaler_;
  Index nodes_ = 0, features_ = 0, val_begin_ = 0, test_begin_ = 0;
  std::optional<WindowedSamples> train_, val_, test_;
};

struct EpochRecord {
  Index epoch = 0;
  double train_l_p = 0.0;  // mean over the epoch's batches
  double val_mae = 0.0;    // raw scale, pooled over horizons
  double seconds = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> epochs;
  Index best_epoch = 0;
  double best_val_mae = std::numeric_limits<double>::infinity();
  Index steps = 0;
  bool stopped_early = false;
};

/// Loss-log header shared by every writer.
inline constexpr const char* kLossLogHeader =
    "step,epoch,l_p,l_d_seq,l_d_graph,l_adv,l_total,d_seq_real,d_seq_fake,d_graph_real,d_graph_fake";

void write_loss_row(std::ostream& out, Index step, Index epoch, const GanLossBundle& b);

namespace detail {

template <typename S>
Tensor<S> rows(const Tensor<S>& t, Index begin, Index end) {
  const Index stride = t.size() / t.shape[0];
  Shape shape = t.shape;
  shape[0] = end - begin;
  return Tensor<S>(std::move(shape), Buffer<S>(t.data.segment(begin * stride, (end - begin) * stride)));
}

/// Channel `c` of [B, T, N, F] as [B, T, N].
template <typename S>
Tensor<S> channel(const Tensor<S>& x, Index c) {
  const Index b = x.shape[0], t = x.shape[1], n = x.shape[2], f = x.shape[3];
  Tensor<S> out({b, t, n});
  for (Index i = 0; i < b * t * n; ++i) out.data[i] = x.data[i * f + c];
  return out;
}

template <typename S>
Tensor<S> drop_last_axis(const Tensor<S>& x) {
  Shape s(x.shape.begin(), x.shape.end() - 1);
  return Tensor<S>(std::move(s), x.data);
}

}  // namespace detail

template <typename S>
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, Index nodes, Index features)
      : cfg_(cfg),
        adv_(cfg.adv_config()),
        generator(cfg.model_config(nodes, features), derive_seed(cfg.seed, 11)),
        d_seq(MlpDiscriminator<S>::sequence(cfg.input_steps + cfg.horizon, cfg.leaky_slope, derive_seed(cfg.seed, 12))),
        d_graph(MlpDiscriminator<S>::graph(nodes, cfg.leaky_slope, derive_seed(cfg.seed, 13))) {
    cfg_.validate();
    const AdamConfig adam{cfg.lr};
    opt_g_ = Adam<S>(generator.parameters(), adam);
    opt_ds_ = Adam<S>(d_seq.parameters(), adam);
    opt_dg_ = Adam<S>(d_graph.parameters(), adam);
  }
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainConfig& config() const { return cfg_; }
  const AdvConfig& adv_config() const { return adv_; }
  Index nodes() const { return generator.config().nodes; }

  std::vector<std::pair<std::string, Tensor<S>*>> named_parameters() {
    auto out = generator.named_parameters();
    for (auto& p : d_seq.named_parameters("d_seq")) out.push_back(p);
    for (auto& p : d_graph.named_parameters("d_graph")) out.push_back(p);
    return out;
  }

  /// One alternating update on a batch. Windows are processed in chunks of
  /// `micro_batch_for(N)`; chunk losses are weighted by their share of the
  /// batch, so gradients equal those of the whole batch.
  GanLossBundle step(const Batch<S>& batch, std::uint64_t seed) {
    const Index b = batch.inputs.shape[0];
    const Index micro = cfg_.micro_batch_for(nodes());
    const Index chunks = (b + micro - 1) / micro;
    const Tensor<S> history = detail::channel(batch.inputs, adv_.target_channel);
    const Tensor<S> real_future = detail::drop_last_axis(batch.targets);

    // (1) generator forward; predictions are kept as plain values for the
    // discriminators. A single chunk keeps its tape for the generator step.
    Tensor<S> fake_future({b, cfg_.horizon, nodes()});
    std::optional<Tape<S>> kept;
    Var<S> kept_pred;
    for (Index c = 0; c < chunks; ++c) {
      const Index lo = c * micro, hi = std::min(b, lo + micro);
      Tape<S>& tape = chunks == 1 ? kept.emplace() : scratch_.emplace();
      Var<S> pred = generator.forward(tape.constant(detail::rows(batch.inputs, lo, hi)), true, derive_seed(seed, c));
      fake_future.data.segment(lo * cfg_.horizon * nodes(), pred.size()) = pred.value();
      if (chunks == 1) kept_pred = pred;
    }
    scratch_.reset();

    // (2) discriminator steps on detached predictions.
    GanLossBundle log;
    log.l_d_seq = log.l_d_graph = log.d_seq_real = log.d_seq_fake = log.d_graph_real = log.d_graph_fake =
        std::numeric_limits<double>::quiet_NaN();
    if (adv_.alpha > 0.0) {
      Tape<S> tape;
      Var<S> hist = tape.constant(history);
      Var<S> real = d_seq.scores(build_seq_sample(hist, tape.constant(real_future)), true);
      Var<S> fake = d_seq.scores(build_seq_sample(hist, tape.constant(fake_future)), true);
      Var<S> loss = bce_pair_loss(real, fake);
      opt_ds_.zero_grad();
      tape.backward(loss);
      opt_ds_.step();
      log.l_d_seq = static_cast<double>(loss.item());
      log.d_seq_real = static_cast<double>(real.value().mean());
      log.d_seq_fake = static_cast<double>(fake.value().mean());
    }
    if (adv_.beta > 0.0) {
      Tape<S> tape;
      Var<S> real = d_graph.scores(flatten_graphs(build_graph_sample(tape.constant(real_future))), true);
      Var<S> fake = d_graph.scores(flatten_graphs(build_graph_sample(tape.constant(fake_future))), true);
      Var<S> loss = bce_pair_loss(real, fake);
      opt_dg_.zero_grad();
      tape.backward(loss);
      opt_dg_.step();
      log.l_d_graph = static_cast<double>(loss.item());
      log.d_graph_real = static_cast<double>(real.value().mean());
      log.d_graph_fake = static_cast<double>(fake.value().mean());
    }

    // (3) generator step with frozen discriminators.
    opt_g_.zero_grad();
    for (Index c = 0; c < chunks; ++c) {
      const Index lo = c * micro, hi = std::min(b, lo + micro);
      Tape<S>& tape = chunks == 1 ? *kept : scratch_.emplace();
      Var<S> pred = chunks == 1
                        ? kept_pred
                        : generator.forward(tape.constant(detail::rows(batch.inputs, lo, hi)), true, derive_seed(seed, c));
      const S share = static_cast<S>(hi - lo) / static_cast<S>(b);
      Var<S> observed = tape.constant(detail::rows(batch.observed, lo, hi));
      Var<S> l_p = l1_prediction_loss(tape.constant(detail::rows(batch.targets, lo, hi)), pred, &observed);
      if (!std::isfinite(static_cast<double>(l_p.item())))
        throw DivergenceError("prediction loss became non-finite (" + std::to_string(static_cast<double>(l_p.item())) +
                              "); lower the learning rate or check the input scaling");
      Var<S> hist = tape.constant(detail::rows(history, lo, hi));
      Var<S> fake = reshape(pred, {hi - lo, cfg_.horizon, nodes()});
      Var<S> real = tape.constant(detail::rows(real_future, lo, hi));
      Var<S> l_adv = gen_adv_loss(d_seq, d_graph, build_seq_sample(hist, real), build_seq_sample(hist, fake),
                                  build_graph_sample(real), build_graph_sample(fake), adv_);
      Var<S> total = add(l_p, l_adv);
      tape.backward(scale(total, share));
      log.l_p += static_cast<double>(share) * static_cast<double>(l_p.item());
      log.l_adv += static_cast<double>(share) * static_cast<double>(l_adv.item());
      log.l_total += static_cast<double>(share) * static_cast<double>(total.item());
    }
    scratch_.reset();
    opt_g_.step();
    return log;
  }

  /// Normalised predictions [B, H, N, 1] without dropout.
  Tensor<S> predict(const Tensor<S>& inputs) {
    const Index b = inputs.shape[0], micro = cfg_.micro_batch_for(nodes());
    Tensor<S> out({b, cfg_.horizon, nodes(), 1});
    for (Index lo = 0; lo < b; lo += micro) {
      const Index hi = std::min(b, lo + micro);
      Tape<S> tape;
      Var<S> pred = generator.forward(tape.constant(detail::rows(inputs, lo, hi)), false, 0);
      out.data.segment(lo * cfg_.horizon * nodes(), pred.size()) = pred.value();
    }
    return out;
  }

  /// Raw-scale predictions and truths for every window of a split.
  struct Predictions {
    Tensor<S> truth, pred, observed;  // [W, H, N, 1]
    Tensor<S> history;                // [W, T, N], normalised target channel
  };

  Predictions predict_split(const WindowedSamples& windows, const Scaler& scaler) {
    const Index w = windows.count(), h = cfg_.horizon, n = nodes();
    Predictions out{Tensor<S>({w, h, n, 1}), Tensor<S>({w, h, n, 1}), Tensor<S>({w, h, n, 1}),
                    Tensor<S>({w, cfg_.input_steps, n})};
    const double mean = scaler.mean[static_cast<std::size_t>(adv_.target_channel)];
    const double sd = scaler.std[static_cast<std::size_t>(adv_.target_channel)];
    for (Index lo = 0; lo < w; lo += cfg_.batch_size) {
      const Index hi = std::min(w, lo + cfg_.batch_size);
      std::vector<Index> ids(static_cast<std::size_t>(hi - lo));
      std::iota(ids.begin(), ids.end(), lo);
      Batch<S> batch = windows.batch<S>(ids);
      Tensor<S> pred = predict(batch.inputs);
      const Index len = (hi - lo) * h * n;
      out.pred.data.segment(lo * h * n, len) = (pred.data.template cast<double>() * sd + mean).template cast<S>();
      out.truth.data.segment(lo * h * n, len) = batch.raw_targets.data;
      out.observed.data.segment(lo * h * n, len) = batch.observed.data;
      Tensor<S> hist = detail::channel(batch.inputs, adv_.target_channel);
      out.history.data.segment(lo * cfg_.input_steps * n, hist.size()) = hist.data;
    }
    return out;
  }

  /// Per-horizon raw-scale metrics; the last row pools all horizons.
  std::vector<ErrorMetrics> evaluate(const WindowedSamples& windows, const Scaler& scaler) {
    Predictions p = predict_split(windows, scaler);
    MetricAccumulator acc(cfg_.horizon, cfg_.mask_eps);
    acc.add(p.truth, p.pred, p.observed);
    return acc.finish();
  }

  /// Epoch loop with validation MAE after every epoch, early stopping on it,
  /// and the best parameters restored at the end.
  FitResult fit(const PreparedData& data, std::ostream* loss_log = nullptr,
                const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    FitResult result;
    const WindowedSamples& train = data.windows(SplitName::Train);
    std::vector<Index> order(static_cast<std::size_t>(train.count()));
    std::vector<Tensor<S>> best;
    Index since_best = 0;
    if (loss_log) *loss_log << kLossLogHeader << '\n';

    for (Index epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      const auto start = std::chrono::steady_clock::now();
      std::iota(order.begin(), order.end(), Index{0});
      CounterRng shuffle(derive_seed(cfg_.seed, 1000 + static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

      double l_p_sum = 0.0;
      Index batches = 0;
      for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg_.batch_size)) {
        const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg_.batch_size));
        std::vector<Index> ids(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
        ++result.steps;
        GanLossBundle log = step(train.batch<S>(ids), derive_seed(cfg_.seed, static_cast<std::uint64_t>(result.steps)));
        if (loss_log) write_loss_row(*loss_log, result.steps, epoch, log);
        l_p_sum += log.l_p;
        ++batches;
      }

      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_l_p = batches ? l_p_sum / static_cast<double>(batches) : 0.0;
      rec.val_mae = evaluate(data.windows(SplitName::Val), data.scaler()).back().mae;
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.epochs.push_back(rec);
      if (on_epoch) on_epoch(rec);

      if (rec.val_mae < result.best_val_mae) {
        result.best_val_mae = rec.val_mae;
        result.best_epoch = epoch;
        since_best = 0;
        best.clear();
        for (auto& [name, t] : named_parameters()) best.push_back(*t);
      } else if (++since_best >= cfg_.patience) {
        result.stopped_early = true;
        break;
      }
    }
    if (!best.empty()) {
      std::size_t i = 0;
      for (auto& [name, t] : named_parameters()) t->data = best[i++].data;
    }
    return result;
  }

  Checkpoint to_checkpoint(const Scaler& scaler) {
    Checkpoint ck;
    ck.meta = generator.config().to_meta();
    for (const auto& [k, v] : cfg_.to_map()) ck.meta["train." + k] = v;
    auto join = [](const std::vector<double>& xs) {
      std::string s;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        char buf[32];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, xs[i]);
        s += (i ? "," : "") + std::string(buf, ptr);
      }
      return s;
    };
    ck.meta["scaler.mean"] = join(scaler.mean);
    ck.meta["scaler.std"] = join(scaler.std);
    ck.put_all(named_parameters());
    return ck;
  }

 private:
  TrainConfig cfg_;
  AdvConfig adv_;

 public:
  Generator<S> generator;
  MlpDiscriminator<S> d_seq, d_graph;

 private:
  Adam<S> opt_g_, opt_ds_, opt_dg_;
  std::optional<Tape<S>> scratch_;
};

/// A trained model restored from a checkpoint.
struct RestoredModel {
  TrainConfig config;
  Scaler scaler;
  std::unique_ptr<Trainer<float>> trainer;
};

RestoredModel restore(const std::filesystem::path& checkpoint);

}  // namespace tgcn
