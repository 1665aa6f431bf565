#pragma once

#include "tgcn/ops.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace tgcn {

struct GradientComparison {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  Index worst_entry = 0;
  std::size_t entries = 0;
};

using Objective = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

inline constexpr double kGradDenominatorFloor = 1e-8;

/// Compares reverse-mode gradients of a scalar objective against central
/// finite differences. Relative error uses max(|g_reverse|, floor) as the
/// denominator. Inputs without requires_grad are held fixed.
inline GradientComparison compare_gradients(const Objective& objective,
                                            std::vector<Tensor<double>>& inputs,
                                            double eps = 1e-5, double floor = kGradDenominatorFloor) {
  auto evaluate = [&](bool with_grad) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    vars.reserve(inputs.size());
    for (auto& in : inputs) vars.push_back(tape.leaf(in));
    Var<double> out = objective(tape, vars);
    if (out.size() != 1) throw ContractError("gradient check objective must be scalar");
    if (with_grad) tape.backward(out);
    return out.item();
  };

  for (auto& in : inputs) in.zero_grad();
  evaluate(true);

  GradientComparison result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double>& in = inputs[k];
    if (!in.requires_grad) continue;
    Buffer<double> reverse = in.has_grad() ? Buffer<double>(in.grad) : Buffer<double>::Zero(in.size());
    for (Index i = 0; i < in.size(); ++i) {
      const double saved = in.data[i];
      in.data[i] = saved + eps;
      const double up = evaluate(false);
      in.data[i] = saved - eps;
      const double down = evaluate(false);
      in.data[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double rel = std::abs(reverse[i] - fd) / std::max(std::abs(reverse[i]), floor);
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_input = k;
        result.worst_entry = i;
      }
      ++result.entries;
    }
  }
  return result;
}

/// Same oracle for objectives that bind their own parameter tensors (a whole
/// model, for instance). Every tensor in `params` is perturbed in place.
inline GradientComparison compare_gradients(const std::function<Var<double>(Tape<double>&)>& objective,
                                            const std::vector<Tensor<double>*>& params,
                                            double eps = 1e-5, double floor = kGradDenominatorFloor) {
  auto evaluate = [&](bool with_grad) {
    Tape<double> tape;
    Var<double> out = objective(tape);
    if (out.size() != 1) throw ContractError("gradient check objective must be scalar");
    if (with_grad) tape.backward(out);
    return out.item();
  };
  for (auto* p : params) p->zero_grad();
  evaluate(true);
  std::vector<Buffer<double>> reverse;
  for (auto* p : params) reverse.push_back(p->has_grad() ? p->grad : Buffer<double>::Zero(p->size()));

  GradientComparison result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<double>& p = *params[k];
    for (Index i = 0; i < p.size(); ++i) {
      const double saved = p.data[i];
      p.data[i] = saved + eps;
      const double up = evaluate(false);
      p.data[i] = saved - eps;
      const double down = evaluate(false);
      p.data[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double rel = std::abs(reverse[k][i] - fd) / std::max(std::abs(reverse[k][i]), floor);
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_input = k;
        result.worst_entry = i;
      }
      ++result.entries;
    }
  }
  return result;
}

/// Random tensor with entries uniform in [lo, hi).
inline Tensor<double> random_tensor(Shape shape, CounterRng& rng, double lo = -1.0, double hi = 1.0,
                                    bool track = true) {
  Tensor<double> t(std::move(shape), track);
  for (Index i = 0; i < t.size(); ++i) t.data[i] = rng.uniform(lo, hi);
  return t;
}

/// Projects a node onto fixed random weights so every output entry carries
/// a distinct adjoint.
inline Var<double> random_projection(const Var<double>& y, std::uint64_t seed) {
  CounterRng rng(seed);
  Buffer<double> w(y.size());
  for (Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1 : 1);
  Var<double> weights = y.tape().constant(y.shape(), std::move(w));
  return sum_all(hadamard(y, weights));
}

}  // namespace tgcn
