#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vseg::grad {

/// Rank-4 shape in (batch, channels, height, width) order.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t plane() const noexcept {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense row-major float32 tensor of rank 4.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor scalar(float value) { return Tensor({1, 1, 1, 1}, value); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }

  std::size_t offset(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  float& operator()(int n, int c, int y, int x) noexcept { return data_[offset(n, c, y, x)]; }
  float operator()(int n, int c, int y, int x) const noexcept { return data_[offset(n, c, y, x)]; }

  float* plane(int n, int c) noexcept { return data_.data() + offset(n, c, 0, 0); }
  const float* plane(int n, int c) const noexcept { return data_.data() + offset(n, c, 0, 0); }

  /// Value of a single-element tensor.
  float item() const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;
bool all_finite(const Tensor& t) noexcept;
/// Squared L2 norm accumulated in double.
double squared_norm(const Tensor& t) noexcept;

}  // namespace vseg::grad
