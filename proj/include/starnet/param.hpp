#pragma once

#include <functional>
#include <string>
#include <vector>

#include "starnet/matrix.hpp"

namespace starnet {

// A learnable tensor with its gradient buffer.
struct Param {
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::size_t rows, std::size_t cols, double fill = 0.0)
      : value(rows, cols, fill), grad(rows, cols, 0.0) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { grad.fill(0.0); }
};

struct NamedParam {
  std::string name;
  Param* param;
};

// Non-learned state that still travels with a checkpoint (BN running stats).
struct NamedBuffer {
  std::string name;
  std::vector<double>* buffer;
};

}  // namespace starnet
