#pragma once

// Sequence- and graph-level discriminators, their binary cross-entropy
// objectives, the generator's adversarial term, and the trend diagnostics.
//
// Prediction tensors are [B, H, N, O] (batched) or [H, N] / [H, N, O]
// (single window). Losses over batched tensors are sums per window averaged
// over the batch.

#include "tgcn/ops.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace tgcn {

inline constexpr double kLogFloor = 1e-12;

struct AdvConfig {
  double alpha = 0.01;  // sequence-level weight
  double beta = 1.0;    // graph-level weight
  Index target_channel = 0;
  double leaky_slope = 0.2;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta))
      throw ConfigError("adversarial weights must be finite and non-negative");
    if (target_channel < 0) throw ConfigError("target channel must be non-negative");
  }
};

/// Three affine layers with LeakyReLU between them and a clamped sigmoid.
template <typename S>
class MlpDiscriminator {
 public:
  MlpDiscriminator() = default;
  MlpDiscriminator(std::vector<Index> widths, double slope, std::uint64_t seed) : slope_(slope) {
    if (widths.size() != 4) throw ConfigError("discriminator needs exactly three affine layers");
    CounterRng rng(seed);
    for (std::size_t l = 0; l < 3; ++l) {
      const Index in = widths[l], out = widths[l + 1];
      if (in < 1 || out < 1) throw ConfigError("discriminator widths must be positive");
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      Tensor<S> w({in, out}, true), b({out}, true);
      for (auto& v : w.data) v = static_cast<S>(rng.uniform(-bound, bound));
      for (auto& v : b.data) v = static_cast<S>(rng.uniform(-bound, bound));
      weights.push_back(std::move(w));
      biases.push_back(std::move(b));
    }
  }

  /// (T+H) -> 64 -> 32 -> 1
  static MlpDiscriminator sequence(Index length, double slope, std::uint64_t seed) {
    return MlpDiscriminator({length, 64, 32, 1}, slope, seed);
  }
  /// N*N -> 128 -> 64 -> 1
  static MlpDiscriminator graph(Index nodes, double slope, std::uint64_t seed) {
    return MlpDiscriminator({nodes * nodes, 128, 64, 1}, slope, seed);
  }

  Index input_width() const { return weights.empty() ? 0 : weights.front().shape[0]; }

  /// Scores for samples [M, in] -> [M], strictly inside (0, 1).
  /// With `trainable` false the parameters enter the tape as constants.
  Var<S> scores(const Var<S>& samples, bool trainable) {
    if (samples.rank() != 2 || samples.dim(1) != input_width())
      throw DimensionError("discriminator expects [M," + std::to_string(input_width()) + "], got " +
                           shape_str(samples.shape()));
    Tape<S>& tape = samples.tape();
    auto param = [&](Tensor<S>& t) { return trainable ? tape.leaf(t) : tape.constant(t); };
    Var<S> h = samples;
    for (std::size_t l = 0; l < 3; ++l) {
      h = add(matmul(h, param(weights[l])), param(biases[l]));
      if (l < 2) h = leaky_relu(h, static_cast<S>(slope_));
    }
    const S eps = std::numeric_limits<S>::epsilon();
    return reshape(clamp(sigmoid(h), eps, S(1) - eps), {samples.dim(0)});
  }

  std::vector<std::pair<std::string, Tensor<S>*>> named_parameters(const std::string& prefix) {
    std::vector<std::pair<std::string, Tensor<S>*>> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.emplace_back(prefix + ".fc" + std::to_string(l) + ".weights", &weights[l]);
      out.emplace_back(prefix + ".fc" + std::to_string(l) + ".bias", &biases[l]);
    }
    return out;
  }

  std::vector<Tensor<S>*> parameters() {
    std::vector<Tensor<S>*> out;
    for (auto& [name, t] : named_parameters("")) out.push_back(t);
    return out;
  }

  std::vector<Tensor<S>> weights;
  std::vector<Tensor<S>> biases;

 private:
  double slope_ = 0.2;
};

/// Per-node history ‖ future samples. [T,N] and [H,N] give [N, T+H];
/// batched [B,T,N] and [B,H,N] give [B*N, T+H] (window-major).
template <typename S>
Var<S> build_seq_sample(const Var<S>& history, const Var<S>& future) {
  if (history.rank() != future.rank() || (history.rank() != 2 && history.rank() != 3))
    throw DimensionError("seq sample: expected [T,N]/[H,N] or [B,T,N]/[B,H,N], got " +
                         shape_str(history.shape()) + " and " + shape_str(future.shape()));
  const Index r = history.rank();
  const Index n = history.dim(r - 1);
  if (future.dim(r - 1) != n || (r == 3 && future.dim(0) != history.dim(0)))
    throw DimensionError("seq sample: history " + shape_str(history.shape()) + " and future " +
                         shape_str(future.shape()) + " disagree on nodes or windows");
  Var<S> joint = concat<S>({history, future}, r - 2);
  const Index len = joint.dim(r - 2);
  if (r == 2) return transpose2d(joint);
  return reshape(transpose(joint, {0, 2, 1}), {joint.dim(0) * n, len});
}

/// Row-softmax of the horizon Gram matrix. [H,N] -> [N,N]; [B,H,N] -> [B,N,N].
template <typename S>
Var<S> build_graph_sample(const Var<S>& future) {
  if (future.rank() == 2) return softmax(gram(transpose2d(future)), 1);
  if (future.rank() == 3) return softmax(matmul(transpose(future, {0, 2, 1}), future), 2);
  throw DimensionError("graph sample: expected [H,N] or [B,H,N], got " + shape_str(future.shape()));
}

/// -mean(log real) - mean(log(1 - fake)), logs clamped at 1e-12.
template <typename S>
Var<S> bce_pair_loss(const Var<S>& real_scores, const Var<S>& fake_scores) {
  const S floor = static_cast<S>(kLogFloor);
  Var<S> real_term = mean_all(log_clamped(real_scores, floor));
  Var<S> fake_term = mean_all(log_clamped(one_minus(fake_scores), floor));
  return scale(add(real_term, fake_term), S(-1));
}

/// Discriminator objective; `fake` should already be detached from the generator.
template <typename S>
Var<S> discriminator_loss(MlpDiscriminator<S>& d, const Var<S>& real, const Var<S>& fake) {
  return bce_pair_loss(d.scores(real, true), d.scores(fake, true));
}

template <typename S>
Var<S> d_seq_loss(MlpDiscriminator<S>& d, const Var<S>& real_samples, const Var<S>& fake_samples) {
  return discriminator_loss(d, real_samples, fake_samples);
}

/// Graph samples may be passed as [M, N, N]; they are flattened to [M, N*N].
template <typename S>
Var<S> flatten_graphs(const Var<S>& graphs) {
  if (graphs.rank() == 2 && graphs.dim(0) == graphs.dim(1)) return reshape(graphs, {1, graphs.size()});
  if (graphs.rank() == 3) return reshape(graphs, {graphs.dim(0), graphs.dim(1) * graphs.dim(2)});
  throw DimensionError("graph samples must be [N,N] or [M,N,N], got " + shape_str(graphs.shape()));
}

template <typename S>
Var<S> d_graph_loss(MlpDiscriminator<S>& d, const Var<S>& real_graphs, const Var<S>& fake_graphs) {
  return discriminator_loss(d, flatten_graphs(real_graphs), flatten_graphs(fake_graphs));
}

/// The generator's side of one discriminator:
/// -mean(log(1 - D(real))) - mean(log D(fake)), with D frozen.
/// The real term carries no generator gradient; it is kept for the loss value.
template <typename S>
Var<S> generator_term(MlpDiscriminator<S>& d, const Var<S>& real, const Var<S>& fake) {
  const S floor = static_cast<S>(kLogFloor);
  Var<S> real_term = mean_all(log_clamped(one_minus(d.scores(real, false)), floor));
  Var<S> fake_term = mean_all(log_clamped(d.scores(fake, false), floor));
  return scale(add(real_term, fake_term), S(-1));
}

/// alpha * seq term + beta * graph term. A zero weight drops its term
/// entirely; both zero gives an exact constant 0.
template <typename S>
Var<S> gen_adv_loss(MlpDiscriminator<S>& d_seq, MlpDiscriminator<S>& d_graph, const Var<S>& real_seq,
                    const Var<S>& fake_seq, const Var<S>& real_graphs, const Var<S>& fake_graphs,
                    const AdvConfig& cfg) {
  cfg.validate();
  Var<S> total = fake_seq.tape().scalar(S(0));
  if (cfg.alpha > 0.0)
    total = add(total, scale(generator_term(d_seq, real_seq, fake_seq), static_cast<S>(cfg.alpha)));
  if (cfg.beta > 0.0)
    total = add(total, scale(generator_term(d_graph, flatten_graphs(real_graphs), flatten_graphs(fake_graphs)),
                             static_cast<S>(cfg.beta)));
  return total;
}

struct GanLossBundle {
  double l_p = 0.0;
  double l_d_seq = 0.0;
  double l_d_graph = 0.0;
  double l_adv = 0.0;
  double l_total = 0.0;
  double d_seq_real = 0.0;  // mean discriminator scores, for logging
  double d_seq_fake = 0.0;
  double d_graph_real = 0.0;
  double d_graph_fake = 0.0;
};

namespace detail {

inline Index horizon_axis(Index rank) { return rank == 4 ? 1 : 0; }

template <typename S>
void check_pair(const char* name, const Var<S>& truth, const Var<S>& pred) {
  if (truth.shape() != pred.shape())
    throw DimensionError(std::string(name) + ": truth " + shape_str(truth.shape()) + " and prediction " +
                         shape_str(pred.shape()) + " differ");
  if (truth.rank() < 2 || truth.rank() > 4)
    throw DimensionError(std::string(name) + ": expected [H,N], [H,N,O] or [B,H,N,O], got " +
                         shape_str(truth.shape()));
}

template <typename S>
Var<S> per_window(const Var<S>& total, Index rank, Index batch) {
  return rank == 4 ? scale(total, S(1) / static_cast<S>(batch)) : total;
}

}  // namespace detail

/// Sum of |truth - pred| over horizon, nodes and channels, averaged over
/// windows. An optional `weights` tensor (same shape, 0 for missing entries)
/// masks the sum.
template <typename S>
Var<S> l1_prediction_loss(const Var<S>& truth, const Var<S>& pred, const Var<S>* weights = nullptr) {
  detail::check_pair("l1 loss", truth, pred);
  Var<S> err = abs(subtract(pred, truth));
  if (weights) err = hadamard(err, *weights);
  return detail::per_window(sum_all(err), truth.rank(), truth.dim(0));
}

/// 2 * truth - pred: the same pointwise L1 error with the deviation mirrored.
template <typename S>
Var<S> reflect_prediction(const Var<S>& truth, const Var<S>& pred) {
  detail::check_pair("reflect", truth, pred);
  return subtract(scale(truth, S(2)), pred);
}

/// Forward difference along `axis`: x[t+1] - x[t].
template <typename S>
Var<S> forward_difference(const Var<S>& x, Index axis) {
  const Index len = x.dim(axis);
  if (len < 2) throw DimensionError("forward difference needs at least two steps along the axis");
  return subtract(slice(x, axis, 1, len), slice(x, axis, 0, len - 1));
}

/// L1 distance between the forward-difference trends of truth and pred
/// along the horizon axis. Diagnostic only.
template <typename S>
Var<S> trend_loss(const Var<S>& truth, const Var<S>& pred) {
  detail::check_pair("trend loss", truth, pred);
  const Index axis = detail::horizon_axis(truth.rank());
  if (truth.dim(axis) < 2) throw DimensionError("trend loss needs a horizon of at least 2");
  Var<S> gap = abs(subtract(forward_difference(truth, axis), forward_difference(pred, axis)));
  return detail::per_window(sum_all(gap), truth.rank(), truth.dim(0));
}

}  // namespace tgcn
