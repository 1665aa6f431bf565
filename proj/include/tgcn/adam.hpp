#pragma once

#include "tgcn/tensor.hpp"

#include <cmath>
#include <vector>

namespace tgcn {

struct AdamConfig {
  double lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct AdamMoments {
  Buffer<S> m;
  Buffer<S> v;
};

/// One bias-corrected Adam update of `param` in place; `step` is 1-based.
template <typename S>
void adam_update(Buffer<S>& param, const Buffer<S>& grad, AdamMoments<S>& state, long step,
                 const AdamConfig& cfg) {
  if (state.m.size() != param.size()) state.m = Buffer<S>::Zero(param.size());
  if (state.v.size() != param.size()) state.v = Buffer<S>::Zero(param.size());
  if (grad.size() != param.size())
    throw DimensionError("adam: gradient length " + std::to_string(grad.size()) +
                         " does not match parameter length " + std::to_string(param.size()));
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  state.m = b1 * state.m + (S(1) - b1) * grad;
  state.v = b2 * state.v + (S(1) - b2) * grad.square();
  const S step_size = static_cast<S>(cfg.lr / c1);
  const S inv_c2 = static_cast<S>(1.0 / c2);
  param -= step_size * state.m / ((state.v * inv_c2).sqrt() + static_cast<S>(cfg.eps));
}

/// Adam over a fixed parameter group. Tensors without a gradient are
/// treated as having zero gradient.
template <typename S>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor<S>*> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg), state_(params_.size()) {}

  void step() {
    ++steps_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<S>& p = *params_[i];
      if (p.has_grad()) {
        adam_update(p.data, p.grad, state_[i], steps_, cfg_);
      } else {
        Buffer<S> zero = Buffer<S>::Zero(p.size());
        adam_update(p.data, zero, state_[i], steps_, cfg_);
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  long steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  const AdamMoments<S>& moments(std::size_t i) const { return state_.at(i); }

 private:
  std::vector<Tensor<S>*> params_;
  AdamConfig cfg_;
  std::vector<AdamMoments<S>> state_;
  long steps_ = 0;
};

}  // namespace tgcn
