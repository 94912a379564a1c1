#include "vseg/gradcore/tensor.hpp"

#include <cmath>
#include <cstring>

#include "vseg/error.hpp"

namespace vseg::grad {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) +
         "," + std::to_string(s.w) + ")";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("shape", "negative dimension in " + to_string(shape));
  }
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape.numel()) {
    throw ShapeError("shape", "tensor of shape " + to_string(shape) + " needs " +
                                  std::to_string(shape.numel()) + " values, got " +
                                  std::to_string(data_.size()));
  }
}

float Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("shape", "item() on non-scalar tensor " + to_string(shape_));
  }
  return data_[0];
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
  return a.shape() == b.shape() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

bool all_finite(const Tensor& t) noexcept {
  for (float v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double squared_norm(const Tensor& t) noexcept {
  double acc = 0.0;
  for (float v : t.values()) acc += static_cast<double>(v) * v;
  return acc;
}

}  // namespace vseg::grad
