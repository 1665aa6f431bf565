#pragma once

// Dynamic adaptive graph generation: spatial (per-node) and temporal
// (per-input-step) embeddings are combined into one factor per node, and the
// pairwise inner products of those factors form the adjacency scores at each
// input step.

#include "tgcn/ops.hpp"

#include <cmath>
#include <filesystem>
#include <string>
#include <string_view>

namespace tgcn {

enum class Combine { Add, Hadamard, Concat };

/// The four operator pairings compared in the graph-construction study:
/// A = concat/concat, B = hadamard/hadamard, C = add/hadamard, D = hadamard/add.
enum class GraphVariant { A, B, C, D };

std::string_view to_string(Combine op);
Combine parse_combine(std::string_view name);
std::string_view to_string(GraphVariant v);
GraphVariant parse_variant(std::string_view name);

inline Index combined_width(Combine op, Index embed_dim) {
  return op == Combine::Concat ? 2 * embed_dim : embed_dim;
}

struct GraphGenConfig {
  Combine delta1 = Combine::Add;
  Combine delta2 = Combine::Add;
  double lambda = 1.0;  // overall score weight
  // Per-term weights of the additive expansion (spatial, cross, temporal).
  // Only the term-weighted route reads them.
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double dropout_rate = 0.1;
  bool layer_norm_enabled = true;

  void validate() const;
};

GraphGenConfig with_variant(GraphGenConfig base, GraphVariant variant);

template <typename S>
struct EmbeddingBank {
  Tensor<S> e_node;       // N x d_e
  Tensor<S> e_time;       // T x d_e, one row per input step
  Tensor<S> norm_gain;    // d'; shared by both factors so equal operators give symmetric scores
  Tensor<S> norm_offset;  // d'

  /// Embeddings uniform in [-1/sqrt(d_e), 1/sqrt(d_e)]; gain 1, offset 0.
  static EmbeddingBank init(Index nodes, Index steps, Index embed_dim, const GraphGenConfig& cfg,
                            std::uint64_t seed) {
    if (nodes < 1 || steps < 1 || embed_dim < 1)
      throw ConfigError("embedding bank extents must be positive");
    EmbeddingBank bank;
    CounterRng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    bank.e_node = Tensor<S>({nodes, embed_dim}, true);
    bank.e_time = Tensor<S>({steps, embed_dim}, true);
    for (auto& v : bank.e_node.data) v = static_cast<S>(rng.uniform(-bound, bound));
    for (auto& v : bank.e_time.data) v = static_cast<S>(rng.uniform(-bound, bound));
    const Index width = combined_width(cfg.delta1, embed_dim);
    bank.norm_gain = Tensor<S>({width}, Buffer<S>::Ones(width), true);
    bank.norm_offset = Tensor<S>({width}, true);
    return bank;
  }

  Index nodes() const { return e_node.shape[0]; }
  Index steps() const { return e_time.shape[0]; }
  Index dim() const { return e_node.shape[1]; }

  std::vector<Tensor<S>*> parameters() { return {&e_node, &e_time, &norm_gain, &norm_offset}; }
};

template <typename S>
struct BankVars {
  Var<S> e_node, e_time, norm_gain, norm_offset;
};

template <typename S>
BankVars<S> bind(Tape<S>& tape, EmbeddingBank<S>& bank) {
  return {tape.leaf(bank.e_node), tape.leaf(bank.e_time), tape.leaf(bank.norm_gain),
          tape.leaf(bank.norm_offset)};
}

/// Per-step adjacency. `time_step` is 1-based.
template <typename S>
struct DynamicAdjacency {
  Var<S> scores;       // N x N raw inner products
  Var<S> propagation;  // I_N + row_softmax(scores)
  Index time_step = 0;

  RowMatrix<S> score_matrix() const { return to_matrix(scores); }
  RowMatrix<S> normalized() const {
    RowMatrix<S> p = to_matrix(propagation);
    p.diagonal().array() -= S(1);
    return p;
  }
};

/// Combines one node row with one time row.
template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, 1> combine(const Eigen::Matrix<S, Eigen::Dynamic, 1>& node_row,
                                            const Eigen::Matrix<S, Eigen::Dynamic, 1>& time_row,
                                            Combine op) {
  if (node_row.size() != time_row.size())
    throw DimensionError("combine: node row length " + std::to_string(node_row.size()) +
                         " != time row length " + std::to_string(time_row.size()));
  switch (op) {
    case Combine::Add:
      return node_row + time_row;
    case Combine::Hadamard:
      return node_row.cwiseProduct(time_row);
    case Combine::Concat: {
      Eigen::Matrix<S, Eigen::Dynamic, 1> out(2 * node_row.size());
      out << node_row, time_row;
      return out;
    }
  }
  throw ConfigError("combine: unknown operator");
}

/// Tape form: every row of `node_rows` [N, d] combined with `time_row` [d].
template <typename S>
Var<S> combine(const Var<S>& node_rows, const Var<S>& time_row, Combine op) {
  if (node_rows.rank() != 2 || time_row.rank() != 1 || node_rows.dim(1) != time_row.dim(0))
    throw DimensionError("combine: node rows " + shape_str(node_rows.shape()) +
                         " incompatible with time row " + shape_str(time_row.shape()));
  switch (op) {
    case Combine::Add:
      return add(node_rows, time_row);
    case Combine::Hadamard:
      return hadamard(node_rows, time_row);
    case Combine::Concat:
      return concat<S>({node_rows, broadcast_to(time_row, node_rows.shape())}, 1);
  }
  throw ConfigError("combine: unknown operator");
}

template <typename S>
Var<S> time_row(const BankVars<S>& bank, Index step) {
  const Index steps = bank.e_time.dim(0);
  if (step < 1 || step > steps)
    throw DimensionError("time step " + std::to_string(step) + " outside [1, " +
                         std::to_string(steps) + "]");
  return reshape(slice(bank.e_time, 0, step - 1, step), {bank.e_time.dim(1)});
}

/// E_nt at one step: E_node combined with the step's time row via delta1.
template <typename S>
Var<S> node_time_embedding(const BankVars<S>& bank, Index step, Combine delta1) {
  return combine(bank.e_node, time_row(bank, step), delta1);
}

namespace detail {

template <typename S>
DynamicAdjacency<S> finish_adjacency(const Var<S>& scores, Index step) {
  Tape<S>& tape = scores.tape();
  Var<S> prop = add(softmax(scores, 1), identity(tape, scores.dim(0)));
  return {scores, prop, step};
}

}  // namespace detail

/// A_ij = lambda * <Dpt(LN(e_i d1 e_t)), Dpt(LN(e_j d2 e_t))>, followed by
/// row softmax and the identity connection.
template <typename S>
DynamicAdjacency<S> build_adjacency(const BankVars<S>& bank, Index step, const GraphGenConfig& cfg,
                                    bool training, std::uint64_t seed) {
  cfg.validate();
  Var<S> row = time_row(bank, step);
  auto factor = [&](Combine op) {
    Var<S> f = combine(bank.e_node, row, op);
    return cfg.layer_norm_enabled ? layer_norm(f, 1, bank.norm_gain, bank.norm_offset) : f;
  };
  Var<S> product;
  if (cfg.delta1 == cfg.delta2 && (!training || cfg.dropout_rate == 0.0)) {
    product = gram(factor(cfg.delta1));
  } else {
    Var<S> left = dropout(factor(cfg.delta1), cfg.dropout_rate, training, derive_seed(seed, 1));
    Var<S> right = dropout(factor(cfg.delta2), cfg.dropout_rate, training, derive_seed(seed, 2));
    product = matmul(left, transpose2d(right));
  }
  Var<S> scores = scale(product, static_cast<S>(cfg.lambda));
  return detail::finish_adjacency(scores, step);
}

template <typename S>
DynamicAdjacency<S> build_variant_adjacency(const BankVars<S>& bank, Index step,
                                            GraphVariant variant, const GraphGenConfig& base,
                                            bool training, std::uint64_t seed) {
  return build_adjacency(bank, step, with_variant(base, variant), training, seed);
}

/// Differentiable term-weighted scores for add/add without LN or dropout:
/// lambda1 <e_i,e_j> + lambda2 (<e_i,e_t> + <e_j,e_t>) + lambda3 <e_t,e_t>.
/// lambda2 = lambda3 = 0 gives the static adaptive graph.
template <typename S>
DynamicAdjacency<S> build_term_adjacency(const BankVars<S>& bank, Index step,
                                         const GraphGenConfig& cfg) {
  const Index n = bank.e_node.dim(0);
  Var<S> scores = scale(matmul(bank.e_node, transpose2d(bank.e_node)), static_cast<S>(cfg.lambda1));
  if (cfg.lambda2 != 0.0 || cfg.lambda3 != 0.0) {
    Var<S> row = reshape(time_row(bank, step), {bank.e_time.dim(1), 1});
    Var<S> u = matmul(bank.e_node, row);  // [N,1]
    Var<S> cross = add(broadcast_to(u, {n, n}), transpose2d(broadcast_to(u, {n, n})));
    Var<S> temporal = matmul(transpose2d(row), row);  // [1,1]
    scores = add(scores, scale(cross, static_cast<S>(cfg.lambda2)));
    scores = add(scores, scale(temporal, static_cast<S>(cfg.lambda3)));
  }
  return detail::finish_adjacency(scores, step);
}

template <typename S>
struct ExpandedTerms {
  RowMatrix<S> spatial;   // <e_i, e_j>
  RowMatrix<S> cross;     // <e_i, e_t> + <e_j, e_t>
  RowMatrix<S> temporal;  // <e_t, e_t> everywhere

  RowMatrix<S> weighted(double l1, double l2, double l3) const {
    return static_cast<S>(l1) * spatial + static_cast<S>(l2) * cross + static_cast<S>(l3) * temporal;
  }
};

/// Splits add/add scores into their spatial, cross and temporal parts.
/// Only exact without layer norm and dropout, so anything else is rejected.
template <typename S>
ExpandedTerms<S> expand_terms(const EmbeddingBank<S>& bank, Index step, const GraphGenConfig& cfg) {
  if (cfg.delta1 != Combine::Add || cfg.delta2 != Combine::Add)
    throw ContractError("expand_terms requires add/add operators");
  if (cfg.layer_norm_enabled || cfg.dropout_rate != 0.0)
    throw ContractError("expand_terms requires layer norm and dropout to be disabled");
  if (step < 1 || step > bank.steps())
    throw DimensionError("time step " + std::to_string(step) + " outside [1, " +
                         std::to_string(bank.steps()) + "]");
  const Index n = bank.nodes(), d = bank.dim();
  Eigen::Map<const RowMatrix<S>> nodes(bank.e_node.data.data(), n, d);
  Eigen::Matrix<S, Eigen::Dynamic, 1> t =
      Eigen::Map<const RowMatrix<S>>(bank.e_time.data.data(), bank.steps(), d).row(step - 1).transpose();
  Eigen::Matrix<S, Eigen::Dynamic, 1> u = nodes * t;
  ExpandedTerms<S> terms;
  terms.spatial = nodes * nodes.transpose();
  terms.cross = u.replicate(1, n) + u.transpose().replicate(n, 1);
  terms.temporal = RowMatrix<S>::Constant(n, n, t.dot(t));
  return terms;
}

/// Writes `<stem>.csv` (row-major, 9 significant digits) and `<stem>.pgm`
/// (8-bit greyscale, min-max scaled) for one normalised adjacency.
void export_adjacency(const RowMatrix<double>& normalized, const std::filesystem::path& stem);

}  // namespace tgcn
