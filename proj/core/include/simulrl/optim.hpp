#pragma once

#include <span>
#include <vector>

namespace simulrl {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

// Adam with bias correction; step() descends along `grad`.
class Adam {
 public:
  Adam(AdamConfig cfg, std::size_t size);
  Adam(AdamConfig cfg, AdamState state);

  void step(std::span<double> params, std::span<const double> grad, double lr);

  const AdamState& state() const { return state_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  AdamState state_;
};

double l2_norm(std::span<const double> v);

// Rescales `grad` in place so its norm is at most max_norm; returns the norm
// before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(std::span<double> grad, double max_norm);

}  // namespace simulrl
