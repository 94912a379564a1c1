#pragma once

#include <map>
#include <string>

#include "vseg/gradcore/ops.hpp"
#include "vseg/gradcore/tensor.hpp"

namespace vseg::grad {

/// Learnable tensors keyed by dotted name, plus batch-norm running statistics
/// keyed by the owning layer's name.
struct ModelParams {
  std::map<std::string, Tensor> weights;
  std::map<std::string, BatchNormState> batch_norm;

  /// Number of learnable scalars.
  std::size_t parameter_count() const;
};

}  // namespace vseg::grad
