#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "vseg/gradcore/params.hpp"
#include "vseg/gradcore/tape.hpp"

namespace vseg::grad {

struct AdamConfig {
  double initial_lr = 1e-3;
  double decay_rate = 0.99;
  std::int64_t decay_interval = 1;  // steps per decay_rate factor
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step_count = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;

  /// initial_lr * decay_rate^(step_count / decay_interval), non-staircase.
  double effective_lr() const;
};

/// One bias-corrected Adam update of every weight in `params`. The learning
/// rate is the schedule value before the step counter advances. Weights absent
/// from `grads` are treated as having zero gradient. A non-finite gradient
/// throws NumericError naming the parameter, leaving params and state untouched.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state);

}  // namespace vseg::grad
