#pragma once

#include <unordered_map>

#include "gsavatar/core/nn.hpp"

namespace gsavatar {

// Scales gradients in place so the global L2 norm is at most max_norm;
// returns the pre-clip norm.
inline real clip_global_norm(const std::vector<Var>& params, real max_norm) {
  real sq = 0;
  for (const auto& p : params) {
    if (!p->grad_ready) continue;
    for (real g : p->grad.v) sq += g * g;
  }
  real norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    real s = max_norm / norm;
    for (const auto& p : params) {
      if (!p->grad_ready) continue;
      for (auto& g : p->grad.v) g *= s;
    }
  }
  return norm;
}

class Adam {
 public:
  Adam(real beta1 = 0.9, real beta2 = 0.999, real eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Var>& params, real lr) {
    ++t_;
    real bc1 = 1.0 - std::pow(beta1_, real(t_));
    real bc2 = 1.0 - std::pow(beta2_, real(t_));
    for (const auto& p : params) {
      if (!p->grad_ready) continue;
      Slot& s = slots_[p.get()];
      if (s.m.numel() != p->val.numel()) {
        s.m = Tensor(p->val.shape);
        s.v = Tensor(p->val.shape);
      }
      for (long i = 0; i < p->val.numel(); ++i) {
        real g = p->grad.v[size_t(i)];
        s.m.v[size_t(i)] = beta1_ * s.m.v[size_t(i)] + (1 - beta1_) * g;
        s.v.v[size_t(i)] = beta2_ * s.v.v[size_t(i)] + (1 - beta2_) * g * g;
        real mhat = s.m.v[size_t(i)] / bc1;
        real vhat = s.v.v[size_t(i)] / bc2;
        p->val.v[size_t(i)] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  long steps() const { return t_; }

 private:
  struct Slot {
    Tensor m, v;
  };
  real beta1_, beta2_, eps_;
  long t_ = 0;
  std::unordered_map<Node*, Slot> slots_;
};

// Linear warmup to base_lr, then cosine decay to ~0 over the remaining steps.
inline real warmup_cosine_lr(long step, long total, long warmup, real base_lr) {
  if (total <= 0) return base_lr;
  if (warmup > 0 && step < warmup) return base_lr * real(step + 1) / real(warmup);
  long span = std::max(1L, total - warmup);
  real p = real(std::min(step, total) - warmup) / real(span);
  return base_lr * 0.5 * (1.0 + std::cos(kPi * p));
}

// Linear decay from base_lr to final_factor*base_lr across `total` units.
inline real linear_decay_lr(long step, long total, real base_lr, real final_factor) {
  if (total <= 1) return base_lr;
  real p = real(std::min(step, total - 1)) / real(total - 1);
  return base_lr * ((1.0 - p) + p * final_factor);
}

}  // namespace gsavatar
