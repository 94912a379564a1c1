#include "vseg/gradcore/adam.hpp"

#include <cmath>

#include "vseg/error.hpp"

namespace vseg::grad {

std::size_t ModelParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : weights) total += t.size();
  return total;
}

double AdamState::effective_lr() const {
  if (config.decay_interval <= 0) throw ConfigError("adam: decay_interval must be positive");
  return config.initial_lr *
         std::pow(config.decay_rate, static_cast<double>(step_count) /
                                         static_cast<double>(config.decay_interval));
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    auto it = params.weights.find(name);
    if (it == params.weights.end()) continue;
    if (!(g.shape() == it->second.shape())) {
      throw ShapeError("shape", "adam: gradient for '" + name + "' has shape " +
                                    to_string(g.shape()) + ", parameter has " +
                                    to_string(it->second.shape()));
    }
    if (!all_finite(g)) throw NumericError("adam: non-finite gradient for parameter '" + name + "'");
  }

  const double lr = state.effective_lr();
  const AdamConfig& cfg = state.config;
  const std::int64_t t = state.step_count + 1;
  const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));

  for (auto& [name, w] : params.weights) {
    Tensor& m = state.first_moment[name];
    Tensor& v = state.second_moment[name];
    if (m.empty()) m = Tensor(w.shape());
    if (v.empty()) v = Tensor(w.shape());
    auto git = grads.find(name);
    const float* g = git == grads.end() ? nullptr : git->second.data();
    float* p = w.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g ? g[i] : 0.0;
      const double mi = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
      m.data()[i] = static_cast<float>(mi);
      v.data()[i] = static_cast<float>(vi);
      const double m_hat = mi / correction1;
      const double v_hat = vi / correction2;
      p[i] = static_cast<float>(p[i] - lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
  state.step_count = t;
}

}  // namespace vseg::grad
