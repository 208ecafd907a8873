#pragma once

#include "hnas/tensor.hpp"

#include <span>
#include <vector>

namespace hnas {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // decoupled
};

struct AdamState {
  AdamOptions options;
  std::vector<Array> first_moment;
  std::vector<Array> second_moment;
  long step = 0;
};

AdamState make_adam_state(std::span<const Tensor> params, const AdamOptions& options);

// One bias-corrected Adam update with decoupled weight decay, reading each
// parameter's accumulated gradient. `lr` overrides options.lr when positive.
void adam_step(std::span<Tensor> params, AdamState& state, double lr = -1.0);

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  void step(double lr = -1.0) { adam_step(params_, state_, lr); }
  void zero_grad();

  const AdamState& state() const { return state_; }
  std::span<Tensor> params() { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

struct CosineSchedule {
  double base_lr = 1e-3;
  double min_lr = 0.0;
  long total_steps = 1;
};

// Half-cosine from base_lr at step 0 to min_lr at total_steps.
double cosine_lr(long step, const CosineSchedule& schedule);

}  // namespace hnas
