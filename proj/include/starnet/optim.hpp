#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "starnet/matrix.hpp"
#include "starnet/param.hpp"

namespace starnet {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::size_t step = 0;
};

AdamState make_adam_state(std::span<const NamedParam> params, const AdamConfig& config = {});

// One bias-corrected Adam update of every parameter from its grad buffer.
void adam_step(std::span<const NamedParam> params, AdamState& state, double lr);

// lr0 * decay^(step / decay_steps).
struct LrSchedule {
  double lr0 = 1e-3;
  double decay = 0.01;
  std::size_t decay_steps = 1;

  double at(std::size_t step) const;
};

}  // namespace starnet
