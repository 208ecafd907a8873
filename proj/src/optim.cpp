#include "hnas/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hnas {

AdamState make_adam_state(std::span<const Tensor> params, const AdamOptions& options) {
  AdamState state;
  state.options = options;
  for (const auto& p : params) {
    state.first_moment.push_back(Array::Zero(p.size()));
    state.second_moment.push_back(Array::Zero(p.size()));
  }
  return state;
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  if (params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but state tracks " +
                     std::to_string(state.first_moment.size()));
  }
  const auto& o = state.options;
  if (lr <= 0.0) lr = o.lr;
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    Array& m = state.first_moment[i];
    Array& v = state.second_moment[i];
    if (m.size() != p.size()) throw ShapeError("adam_step: moment buffer does not match parameter");
    const Array& g = p.grad();
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.square();
    Array& w = p.mutable_data();
    if (o.weight_decay != 0.0) w -= lr * o.weight_decay * w;
    w -= lr * (m / c1) / ((v / c2).sqrt() + o.eps);
  }
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), state_(make_adam_state(params_, options)) {}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double cosine_lr(long step, const CosineSchedule& schedule) {
  if (step < 0 || step > schedule.total_steps) {
    throw std::out_of_range("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(schedule.total_steps) + "]");
  }
  if (schedule.total_steps == 0) return schedule.base_lr;
  const double t = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  return schedule.min_lr +
         0.5 * (schedule.base_lr - schedule.min_lr) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace hnas
