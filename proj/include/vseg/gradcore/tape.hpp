#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vseg/gradcore/tensor.hpp"

namespace vseg::grad {

class Tape;

/// Handle to a tensor value produced under a Tape. Values are immutable and
/// shared; a Var is cheap to copy.
class Var {
 public:
  Var() = default;

  const Tensor& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  bool defined() const noexcept { return static_cast<bool>(value_); }
  bool requires_grad() const noexcept { return node_ >= 0; }

 private:
  friend class Tape;
  Var(std::shared_ptr<const Tensor> value, std::ptrdiff_t node)
      : value_(std::move(value)), node_(node) {}

  std::shared_ptr<const Tensor> value_;
  std::ptrdiff_t node_ = -1;
};

/// Gradient destination handed to a backward function. Input gradients are
/// zero-initialised on first access and accumulated across consumers.
class GradSink {
 public:
  bool wants(std::size_t input) const;
  Tensor& slot(std::size_t input);

 private:
  friend class Tape;
  GradSink(Tape& tape, std::size_t node) : tape_(tape), node_(node) {}

  Tape& tape_;
  std::size_t node_;
};

using BackwardFn = std::function<void(const Tensor& grad_out, GradSink& sink)>;

/// Parameter name -> gradient, shaped like the parameter.
using Gradients = std::map<std::string, Tensor>;

/// Ordered record of differentiable operations. Nodes are appended in
/// evaluation order, which is a valid topological order for the reverse sweep.
class Tape {
 public:
  enum class Mode { record, inference };

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return mode_ == Mode::record; }

  /// Value that never receives a gradient.
  static Var constant(Tensor value);

  /// Named learnable leaf. Under Mode::inference this is a constant.
  Var parameter(const std::string& name, Tensor value);

  /// Appends an operation. The backward function is kept only when recording
  /// and at least one input requires a gradient.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);
  /// Same, for ops whose backward function keeps a reference to the output.
  Var record(std::shared_ptr<const Tensor> value, const std::vector<Var>& inputs,
             BackwardFn backward);

  /// Reverse sweep from a single-element loss. Every registered parameter
  /// appears in the result; parameters not on the path get zeros.
  Gradients backward(const Var& loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class GradSink;

  struct Node {
    Shape shape;
    std::vector<std::ptrdiff_t> inputs;
    BackwardFn backward;
    std::string parameter;
  };

  Mode mode_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace vseg::grad
