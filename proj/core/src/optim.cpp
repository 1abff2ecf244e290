#include "simulrl/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace simulrl {

Adam::Adam(AdamConfig cfg, std::size_t size) : cfg_(cfg) {
  state_.m.assign(size, 0.0);
  state_.v.assign(size, 0.0);
}

Adam::Adam(AdamConfig cfg, AdamState state) : cfg_(cfg), state_(std::move(state)) {
  if (state_.m.size() != state_.v.size()) throw std::invalid_argument("Adam: moment sizes differ");
}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != state_.m.size() || grad.size() != params.size())
    throw std::invalid_argument("Adam: size mismatch");
  ++state_.step;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(state_.step));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(state_.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state_.m[i] = cfg_.beta1 * state_.m[i] + (1.0 - cfg_.beta1) * grad[i];
    state_.v[i] = cfg_.beta2 * state_.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double mhat = state_.m[i] / bc1;
    const double vhat = state_.v[i] / bc2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * params[i]);
  }
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  const double norm = l2_norm(grad);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

}  // namespace simulrl
