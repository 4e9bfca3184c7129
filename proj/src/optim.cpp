#include "starnet/optim.hpp"

#include <cmath>

#include "starnet/error.hpp"

namespace starnet {

AdamState make_adam_state(std::span<const NamedParam> params, const AdamConfig& config) {
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0)) {
    throw Error(ErrorCode::kConfig, "adam: betas must be in [0, 1)");
  }
  if (!(config.epsilon > 0.0)) throw Error(ErrorCode::kConfig, "adam: epsilon must be positive");
  AdamState state;
  state.config = config;
  for (const NamedParam& p : params) {
    state.first_moment.emplace_back(p.param->value.rows(), p.param->value.cols(), 0.0);
    state.second_moment.emplace_back(p.param->value.rows(), p.param->value.cols(), 0.0);
  }
  return state;
}

void adam_step(std::span<const NamedParam> params, AdamState& state, double lr) {
  if (params.size() != state.first_moment.size()) {
    throw Error(ErrorCode::kShapeMismatch, "adam_step: parameter count differs from optimizer state");
  }
  if (!(lr >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "adam_step: lr must be >= 0");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param& p = *params[i].param;
    if (p.value.rows() != state.first_moment[i].rows() || p.value.cols() != state.first_moment[i].cols() ||
        p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "adam_step: shape mismatch for " + params[i].name);
    }
  }
  ++state.step;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i].param->value.storage();
    auto& grad = params[i].param->grad.storage();
    auto& m = state.first_moment[i].storage();
    auto& v = state.second_moment[i].storage();
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * grad[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] -= lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

double LrSchedule::at(std::size_t step) const {
  if (decay_steps == 0) return lr0;
  return lr0 * std::pow(decay, static_cast<double>(step) / static_cast<double>(decay_steps));
}

}  // namespace starnet
