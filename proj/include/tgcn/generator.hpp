#pragma once

// Graph-convolutional GRU forecaster. Activations are laid out node-major,
// [N, B, F], so graph propagation is a single [N,N] x [N, B*F] product and the
// per-node convolution weights act as a batch over the leading axis.

#include "tgcn/dagg.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace tgcn {

struct ModelConfig {
  Index nodes = 0;
  Index features = 1;      // F, input channels
  Index outputs = 1;       // O, predicted channels
  Index input_steps = 12;  // T
  Index horizon = 12;      // H
  Index hidden = 64;       // F'
  Index gru_layers = 2;
  Index gcn_layers = 2;
  Index embed_dim = 6;  // d_e
  GraphGenConfig graph; // graph.dropout_rate is also the head dropout rate
  bool static_graph = false;  // time-invariant <e_i, e_j> scores, E_nt = E_node

  Index combined_dim() const { return static_graph ? embed_dim : combined_width(graph.delta1, embed_dim); }
  void validate() const;

  std::map<std::string, std::string> to_meta() const;
  static ModelConfig from_meta(const std::map<std::string, std::string>& meta);
};

template <typename S>
struct GcnParamPool {
  Tensor<S> weights;  // d' x F_in x F_out
  Tensor<S> bias;     // d' x F_out

  static GcnParamPool init(Index dim, Index in, Index out, std::uint64_t seed) {
    GcnParamPool pool;
    pool.weights = Tensor<S>({dim, in, out}, true);
    pool.bias = Tensor<S>({dim, out}, true);
    CounterRng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : pool.weights.data) v = static_cast<S>(rng.uniform(-bound, bound));
    for (auto& v : pool.bias.data) v = static_cast<S>(rng.uniform(-bound, bound));
    return pool;
  }
  Index dim() const { return weights.shape[0]; }
  Index in() const { return weights.shape[1]; }
  Index out() const { return weights.shape[2]; }
};

template <typename S>
struct GruLayerParams {
  std::vector<GcnParamPool<S>> update;     // z
  std::vector<GcnParamPool<S>> reset;      // r
  std::vector<GcnParamPool<S>> candidate;  // c

  /// Each gate is a `depth`-deep stack: (input + hidden) -> hidden -> ... -> hidden.
  static GruLayerParams init(Index dim, Index input, Index hidden, Index depth, CounterRng& rng) {
    GruLayerParams layer;
    for (auto* gate : {&layer.update, &layer.reset, &layer.candidate})
      for (Index k = 0; k < depth; ++k)
        gate->push_back(GcnParamPool<S>::init(dim, k == 0 ? input + hidden : hidden, hidden, rng.next_seed()));
    return layer;
  }
};

template <typename S>
struct OutputHead {
  Tensor<S> norm_gain;    // F'
  Tensor<S> norm_offset;  // F'
  Tensor<S> weights;      // F' x (H*O)
  Tensor<S> bias;         // H*O

  static OutputHead init(Index hidden, Index horizon, Index outputs, std::uint64_t seed) {
    OutputHead head;
    head.norm_gain = Tensor<S>({hidden}, Buffer<S>::Ones(hidden), true);
    head.norm_offset = Tensor<S>({hidden}, true);
    head.weights = Tensor<S>({hidden, horizon * outputs}, true);
    head.bias = Tensor<S>({horizon * outputs}, true);
    CounterRng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (auto& v : head.weights.data) v = static_cast<S>(rng.uniform(-bound, bound));
    for (auto& v : head.bias.data) v = static_cast<S>(rng.uniform(-bound, bound));
    return head;
  }
};

/// H_out = (I + Norm(A)) H_in W_node + b_node, with W_node and b_node
/// contracted from the pools by each node's combined embedding.
/// `h` is [N, F_in] or node-major [N, B, F_in]; the result keeps its rank.
template <typename S>
Var<S> node_adaptive_gcn(const Var<S>& h, const Var<S>& propagation, const Var<S>& e_nt,
                         const Var<S>& weight_pool, const Var<S>& bias_pool) {
  if (h.rank() != 2 && h.rank() != 3)
    throw DimensionError("gcn: input must be [N,F] or [N,B,F], got " + shape_str(h.shape()));
  const Index n = h.dim(0), b = h.rank() == 3 ? h.dim(1) : 1, in = h.dim(h.rank() - 1);
  if (weight_pool.rank() != 3 || bias_pool.rank() != 2)
    throw DimensionError("gcn: pools must be [d,in,out] and [d,out]");
  const Index dim = weight_pool.dim(0), out = weight_pool.dim(2);
  if (propagation.shape() != Shape{n, n} || e_nt.shape() != Shape{n, dim} || weight_pool.dim(1) != in ||
      bias_pool.shape() != Shape{dim, out})
    throw DimensionError("gcn: input " + shape_str(h.shape()) + ", propagation " +
                         shape_str(propagation.shape()) + ", embedding " + shape_str(e_nt.shape()) +
                         ", pools " + shape_str(weight_pool.shape()) + "/" + shape_str(bias_pool.shape()) +
                         " are inconsistent");
  Var<S> mixed = reshape(matmul(propagation, reshape(h, {n, b * in})), {n, b, in});
  Var<S> node_weights = reshape(matmul(e_nt, reshape(weight_pool, {dim, in * out})), {n, in, out});
  Var<S> node_bias = reshape(matmul(e_nt, bias_pool), {n, 1, out});
  Var<S> y = add(matmul(mixed, node_weights), node_bias);
  return h.rank() == 2 ? reshape(y, {n, out}) : y;
}

template <typename S>
struct BoundPool {
  Var<S> weights, bias;
};

template <typename S>
struct BoundGruLayer {
  std::vector<BoundPool<S>> update, reset, candidate;
};

template <typename S>
BoundGruLayer<S> bind(Tape<S>& tape, GruLayerParams<S>& layer) {
  BoundGruLayer<S> bound;
  auto bind_stack = [&](std::vector<GcnParamPool<S>>& stack, std::vector<BoundPool<S>>& out) {
    for (auto& pool : stack) out.push_back({tape.leaf(pool.weights), tape.leaf(pool.bias)});
  };
  bind_stack(layer.update, bound.update);
  bind_stack(layer.reset, bound.reset);
  bind_stack(layer.candidate, bound.candidate);
  return bound;
}

/// Gate stack: consecutive graph convolutions sharing one adjacency and E_nt.
template <typename S>
Var<S> gcn_stack(Var<S> h, const Var<S>& propagation, const Var<S>& e_nt,
                 const std::vector<BoundPool<S>>& stack) {
  for (const auto& pool : stack) h = node_adaptive_gcn(h, propagation, e_nt, pool.weights, pool.bias);
  return h;
}

/// z = sigma(G_z(x|h)), r = sigma(G_r(x|h)), c = tanh(G_c(x|r*h)),
/// h' = z * h + (1 - z) * c.
template <typename S>
Var<S> gru_step(const Var<S>& x, const Var<S>& h_prev, const BoundGruLayer<S>& layer,
                const Var<S>& propagation, const Var<S>& e_nt) {
  const Index axis = x.rank() - 1;
  Var<S> joint = concat<S>({x, h_prev}, axis);
  Var<S> z = sigmoid(gcn_stack(joint, propagation, e_nt, layer.update));
  Var<S> r = sigmoid(gcn_stack(joint, propagation, e_nt, layer.reset));
  Var<S> c = tanh(gcn_stack(concat<S>({x, hadamard(r, h_prev)}, axis), propagation, e_nt, layer.candidate));
  return add(hadamard(z, h_prev), hadamard(one_minus(z), c));
}

template <typename S>
class Generator {
 public:
  Generator() = default;
  Generator(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    CounterRng rng(seed);
    GraphGenConfig bank_cfg = cfg_.graph;
    if (cfg_.static_graph) bank_cfg.delta1 = Combine::Add;
    bank = EmbeddingBank<S>::init(cfg_.nodes, cfg_.input_steps, cfg_.embed_dim, bank_cfg, rng.next_seed());
    for (Index l = 0; l < cfg_.gru_layers; ++l)
      layers.push_back(GruLayerParams<S>::init(cfg_.combined_dim(), l == 0 ? cfg_.features : cfg_.hidden,
                                               cfg_.hidden, cfg_.gcn_layers, rng));
    head = OutputHead<S>::init(cfg_.hidden, cfg_.horizon, cfg_.outputs, rng.next_seed());
  }

  const ModelConfig& config() const { return cfg_; }

  std::vector<std::pair<std::string, Tensor<S>*>> named_parameters() {
    std::vector<std::pair<std::string, Tensor<S>*>> out{{"embed.node", &bank.e_node},
                                                        {"embed.time", &bank.e_time},
                                                        {"embed.norm_gain", &bank.norm_gain},
                                                        {"embed.norm_offset", &bank.norm_offset}};
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto add_stack = [&](const char* gate, std::vector<GcnParamPool<S>>& stack) {
        for (std::size_t k = 0; k < stack.size(); ++k) {
          const std::string prefix = "gru" + std::to_string(l) + "." + gate + ".gcn" + std::to_string(k);
          out.emplace_back(prefix + ".weights", &stack[k].weights);
          out.emplace_back(prefix + ".bias", &stack[k].bias);
        }
      };
      add_stack("update", layers[l].update);
      add_stack("reset", layers[l].reset);
      add_stack("candidate", layers[l].candidate);
    }
    out.emplace_back("head.norm_gain", &head.norm_gain);
    out.emplace_back("head.norm_offset", &head.norm_offset);
    out.emplace_back("head.weights", &head.weights);
    out.emplace_back("head.bias", &head.bias);
    return out;
  }

  std::vector<Tensor<S>*> parameters() {
    std::vector<Tensor<S>*> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  Index parameter_count() {
    Index n = 0;
    for (auto* t : parameters()) n += t->size();
    return n;
  }

  /// Adjacency at 1-based step t, built on `tape` from the current embeddings.
  DynamicAdjacency<S> adjacency(Tape<S>& tape, Index t, bool training = false, std::uint64_t seed = 0) {
    BankVars<S> vars = tgcn::bind(tape, bank);
    return adjacency(vars, t, training, seed);
  }

  /// x: [B, T, N, F] -> prediction [B, H, N, O].
  Var<S> forward(const Var<S>& x, bool training, std::uint64_t seed) {
    Tape<S>& tape = x.tape();
    const Index n = cfg_.nodes, steps = cfg_.input_steps;
    if (x.rank() != 4 || x.dim(1) != steps || x.dim(2) != n || x.dim(3) != cfg_.features)
      throw DimensionError("forward: expected input [B," + std::to_string(steps) + "," + std::to_string(n) +
                           "," + std::to_string(cfg_.features) + "], got " + shape_str(x.shape()));
    if (!x.value().allFinite()) throw InputError("forward: input contains non-finite values");
    const Index batch = x.dim(0);

    BankVars<S> emb = tgcn::bind(tape, bank);
    std::vector<BoundGruLayer<S>> bound;
    for (auto& layer : layers) bound.push_back(tgcn::bind(tape, layer));

    // Propagation matrix and E_nt per step, shared by every layer and gate.
    std::vector<Var<S>> props, e_nts;
    for (Index t = 1; t <= steps; ++t) {
      if (cfg_.static_graph && t > 1) {
        props.push_back(props.front());
        e_nts.push_back(e_nts.front());
        continue;
      }
      props.push_back(adjacency(emb, t, training, derive_seed(seed, static_cast<std::uint64_t>(t))).propagation);
      e_nts.push_back(cfg_.static_graph ? emb.e_node : node_time_embedding(emb, t, cfg_.graph.delta1));
    }

    Var<S> seq = transpose(x, {1, 2, 0, 3});  // [T, N, B, F]
    std::vector<Var<S>> inputs;
    for (Index t = 0; t < steps; ++t) inputs.push_back(reshape(slice(seq, 0, t, t + 1), {n, batch, cfg_.features}));

    Var<S> h;
    for (Index l = 0; l < cfg_.gru_layers; ++l) {
      h = tape.constant({n, batch, cfg_.hidden}, Buffer<S>::Zero(n * batch * cfg_.hidden));
      for (Index t = 0; t < steps; ++t) {
        h = gru_step(inputs[t], h, bound[l], props[t], e_nts[t]);
        inputs[t] = h;
      }
    }

    Var<S> gain = tape.leaf(head.norm_gain), offset = tape.leaf(head.norm_offset);
    Var<S> z = dropout(layer_norm(h, 2, gain, offset), cfg_.graph.dropout_rate, training, derive_seed(seed, 0));
    Var<S> y = add(matmul(reshape(z, {n * batch, cfg_.hidden}), tape.leaf(head.weights)), tape.leaf(head.bias));
    return transpose(reshape(y, {n, batch, cfg_.horizon, cfg_.outputs}), {1, 2, 0, 3});
  }

 private:
  DynamicAdjacency<S> adjacency(const BankVars<S>& emb, Index t, bool training, std::uint64_t seed) {
    if (cfg_.static_graph) {
      GraphGenConfig spatial_only = cfg_.graph;
      spatial_only.lambda1 = 1.0;
      spatial_only.lambda2 = spatial_only.lambda3 = 0.0;
      return build_term_adjacency(emb, t, spatial_only);
    }
    return build_adjacency(emb, t, cfg_.graph, training, seed);
  }

  ModelConfig cfg_;

 public:
  EmbeddingBank<S> bank;
  std::vector<GruLayerParams<S>> layers;
  OutputHead<S> head;
};

}  // namespace tgcn
