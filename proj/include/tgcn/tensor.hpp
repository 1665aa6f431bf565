#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tgcn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename S>
using Buffer = Eigen::Array<S, Eigen::Dynamic, 1>;

template <typename S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Raised when an operation is called outside the regime where it is defined.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

inline Index numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

inline void check_shape(const Shape& shape) {
  for (Index e : shape)
    if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
}

/// Dense row-major array with an optional gradient slot. Model parameters
/// live in these; a Tape borrows them as leaves and flushes adjoints back.
template <typename S>
struct Tensor {
  Shape shape;
  Buffer<S> data;
  Buffer<S> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s, bool track = false)
      : shape(std::move(s)), requires_grad(track) {
    check_shape(shape);
    data = Buffer<S>::Zero(numel(shape));
  }
  Tensor(Shape s, Buffer<S> values, bool track = false)
      : shape(std::move(s)), data(std::move(values)), requires_grad(track) {
    check_shape(shape);
    if (data.size() != numel(shape))
      throw DimensionError("data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
  }

  Index size() const { return data.size(); }
  bool has_grad() const { return grad.size() == data.size() && grad.size() > 0; }
  void zero_grad() { grad.resize(0); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(shape, data.template cast<T>().eval(), requires_grad);
    return out;
  }
};

template <typename S>
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy.
template <typename S>
class Var {
 public:
  Var() = default;
  Var(Tape<S>* tape, Index id) : tape_(tape), id_(id) {}

  Tape<S>& tape() const { return *tape_; }
  Index id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const;
  Index rank() const { return static_cast<Index>(shape().size()); }
  Index dim(Index axis) const;
  Index size() const { return value().size(); }
  const Buffer<S>& value() const;
  const Buffer<S>& grad() const;
  bool requires_grad() const;
  S item() const;

 private:
  Tape<S>* tape_ = nullptr;
  Index id_ = -1;
};

/// Reverse-mode computation record. Nodes are appended during the forward
/// pass; backward() replays adjoints from the root down to node 0, visiting
/// each node once. One tape per training context, single writer.
template <typename S>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Index)>;

  struct Node {
    Shape shape;
    std::shared_ptr<const Buffer<S>> value;
    Buffer<S> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Tensor<S>* sink = nullptr;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<S> constant(Shape shape, Buffer<S> value) {
    return push(std::move(shape), std::make_shared<const Buffer<S>>(std::move(value)), false,
                nullptr, nullptr);
  }
  Var<S> constant(const Tensor<S>& t) { return constant(t.shape, t.data); }
  Var<S> scalar(S v) { return constant({1}, Buffer<S>::Constant(1, v)); }

  /// Parameter leaf. Adjoints reach `t.grad` after backward() iff
  /// t.requires_grad.
  Var<S> leaf(Tensor<S>& t) {
    return push(t.shape, std::make_shared<const Buffer<S>>(t.data), t.requires_grad, nullptr,
                t.requires_grad ? &t : nullptr);
  }

  /// Appends an interior node. The backward callback runs only if some parent
  /// tracks gradients.
  Var<S> record(Shape shape, Buffer<S> value, std::initializer_list<Var<S>> parents,
                BackwardFn fn) {
    return record_shared(std::move(shape), std::make_shared<const Buffer<S>>(std::move(value)),
                         any_tracks(parents), std::move(fn));
  }
  Var<S> record(Shape shape, Buffer<S> value, const std::vector<Var<S>>& parents,
                BackwardFn fn) {
    bool track = false;
    for (const auto& p : parents) track = track || p.requires_grad();
    return record_shared(std::move(shape), std::make_shared<const Buffer<S>>(std::move(value)),
                         track, std::move(fn));
  }
  Var<S> record_shared(Shape shape, std::shared_ptr<const Buffer<S>> value, bool track,
                       BackwardFn fn) {
    return push(std::move(shape), std::move(value), track, track ? std::move(fn) : nullptr,
                nullptr);
  }

  /// Runs reverse accumulation from a scalar root. Interior adjoints are
  /// released as soon as they have been propagated.
  void backward(const Var<S>& root) {
    if (&root.tape() != this) throw ContractError("backward root belongs to another tape");
    if (root.size() != 1)
      throw ContractError("backward root must be scalar, got shape " + shape_str(root.shape()));
    for (auto& n : nodes_) n.grad.resize(0);
    nodes_[root.id()].grad = Buffer<S>::Ones(1);
    for (Index i = root.id(); i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, i);
      // Interior adjoints are consumed once; keep only the root and leaves.
      if (!n.sink && i != root.id()) n.grad = Buffer<S>();
    }
    for (auto& n : nodes_) {
      if (!n.sink) continue;
      if (n.sink->grad.size() != n.value->size()) n.sink->grad = Buffer<S>::Zero(n.value->size());
      if (n.grad.size() > 0) n.sink->grad += n.grad;
    }
  }

  const Node& node(Index id) const { return nodes_[id]; }
  const Buffer<S>& value(Index id) const { return *nodes_[id].value; }
  const Buffer<S>& grad(Index id) const { return nodes_[id].grad; }
  bool tracks(Index id) const { return nodes_[id].requires_grad; }

  /// Adjoint slot of a parent, zero-initialised on first touch.
  Buffer<S>& grad_slot(Index id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Buffer<S>::Zero(n.value->size());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  static bool any_tracks(std::initializer_list<Var<S>> parents) {
    for (const auto& p : parents)
      if (p.requires_grad()) return true;
    return false;
  }

  Var<S> push(Shape shape, std::shared_ptr<const Buffer<S>> value, bool track, BackwardFn fn,
              Tensor<S>* sink) {
    if (value->size() != numel(shape))
      throw DimensionError("node value length does not match shape " + shape_str(shape));
    nodes_.push_back(Node{std::move(shape), std::move(value), {}, track, std::move(fn), sink});
    return Var<S>(this, static_cast<Index>(nodes_.size()) - 1);
  }

  std::vector<Node> nodes_;
};

template <typename S>
const Shape& Var<S>::shape() const {
  return tape_->node(id_).shape;
}
template <typename S>
Index Var<S>::dim(Index axis) const {
  const Shape& s = shape();
  if (axis < 0) axis += static_cast<Index>(s.size());
  return s.at(static_cast<std::size_t>(axis));
}
template <typename S>
const Buffer<S>& Var<S>::value() const {
  return tape_->value(id_);
}
template <typename S>
const Buffer<S>& Var<S>::grad() const {
  return tape_->grad(id_);
}
template <typename S>
bool Var<S>::requires_grad() const {
  return tape_->tracks(id_);
}
template <typename S>
S Var<S>::item() const {
  if (size() != 1) throw DimensionError("item() on non-scalar " + shape_str(shape()));
  return value()(0);
}

// Counter-based random stream: every draw is a pure function of
// (seed, counter), so dropout masks and initialisers replay exactly.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed ^ mix64(stream ^ 0xD1B54A32D192ED03ULL));
}

/// Uniform in [0, 1).
inline double uniform01(std::uint64_t seed, std::uint64_t counter) {
  return static_cast<double>(mix64(seed ^ mix64(counter)) >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two counter draws.
inline double standard_normal(std::uint64_t seed, std::uint64_t counter) {
  double u1 = uniform01(seed, 2 * counter);
  double u2 = uniform01(seed, 2 * counter + 1);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Sequential helper over the counter stream.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}
  double uniform() { return uniform01(seed_, counter_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return standard_normal(seed_, counter_++); }
  std::uint64_t next_seed() { return derive_seed(seed_, counter_++); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace tgcn
