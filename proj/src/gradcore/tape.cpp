#include "vseg/gradcore/tape.hpp"

#include "vseg/error.hpp"

namespace vseg::grad {

bool GradSink::wants(std::size_t input) const {
  const auto& inputs = tape_.nodes_[node_].inputs;
  return input < inputs.size() && inputs[input] >= 0;
}

Tensor& GradSink::slot(std::size_t input) {
  const std::ptrdiff_t target = tape_.nodes_[node_].inputs.at(input);
  if (target < 0) {
    throw std::logic_error("gradient requested for an input that does not need one");
  }
  Tensor& g = tape_.grads_[static_cast<std::size_t>(target)];
  if (g.empty()) g = Tensor(tape_.nodes_[static_cast<std::size_t>(target)].shape);
  return g;
}

Var Tape::constant(Tensor value) {
  return Var(std::make_shared<const Tensor>(std::move(value)), -1);
}

Var Tape::parameter(const std::string& name, Tensor value) {
  if (!recording()) return constant(std::move(value));
  Node node;
  node.shape = value.shape();
  node.parameter = name;
  nodes_.push_back(std::move(node));
  return Var(std::make_shared<const Tensor>(std::move(value)),
             static_cast<std::ptrdiff_t>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  return record(std::make_shared<const Tensor>(std::move(value)), inputs, std::move(backward));
}

Var Tape::record(std::shared_ptr<const Tensor> value, const std::vector<Var>& inputs,
                 BackwardFn backward) {
  bool any = false;
  for (const Var& in : inputs) any = any || in.requires_grad();
  if (!recording() || !any) return Var(std::move(value), -1);

  Node node;
  node.shape = value->shape();
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) node.inputs.push_back(in.node_);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(std::move(value), static_cast<std::ptrdiff_t>(nodes_.size() - 1));
}

Gradients Tape::backward(const Var& loss) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw ShapeError("shape", "backward() needs a single-element loss, got " +
                                  (loss.defined() ? to_string(loss.shape()) : "undefined"));
  }

  grads_.assign(nodes_.size(), Tensor());
  if (loss.requires_grad()) {
    grads_[static_cast<std::size_t>(loss.node_)] = Tensor(loss.shape(), 1.0f);
    for (std::ptrdiff_t i = loss.node_; i >= 0; --i) {
      const auto idx = static_cast<std::size_t>(i);
      Node& node = nodes_[idx];
      if (grads_[idx].empty() || !node.backward) continue;
      GradSink sink(*this, idx);
      node.backward(grads_[idx], sink);
      grads_[idx] = Tensor();
    }
  }

  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].parameter.empty()) continue;
    Tensor g = grads_[i].empty() ? Tensor(nodes_[i].shape) : std::move(grads_[i]);
    auto [it, inserted] = out.emplace(nodes_[i].parameter, std::move(g));
    if (!inserted) throw std::logic_error("parameter registered twice: " + nodes_[i].parameter);
  }
  grads_.clear();
  return out;
}

}  // namespace vseg::grad
