#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "hiros/error.hpp"
#include "hiros/tensor/tensor.hpp"

namespace hiros::tensor {

// Handle to a value recorded on a Graph.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

// Reverse-mode tape. Nodes are appended in evaluation order, so walking the
// tape backwards is a valid topological order for gradient propagation.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&)>;

  Graph() = default;
  // An untracked graph records values only: nothing requires grad and no
  // backward closures are kept. Used for inference.
  explicit Graph(bool track_gradients) : tracking_(track_gradients) {}

  bool tracking() const noexcept { return tracking_; }

  Var constant(Tensor value) { return push(std::move(value), false, nullptr, {}); }

  // A leaf whose gradient is tracked but which is not bound to a Parameter.
  Var variable(Tensor value) { return push(std::move(value), true, nullptr, {}); }

  // A leaf bound to a Parameter; backward() accumulates into param.grad.
  Var parameter(Parameter& param) { return push(param.value, true, &param, {}); }

  // Records an op result. backward is invoked only if requires_grad.
  Var record(Tensor value, bool requires_grad, BackwardFn backward) {
    return push(std::move(value), requires_grad, nullptr, std::move(backward));
  }

  const Tensor& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  // Gradient buffer of a node; valid after backward() for nodes that require grad.
  Tensor& grad(Var v) {
    Node& n = node(v);
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  // Propagates d(loss)/d(node) through the tape and adds parameter gradients
  // into their Parameter::grad. Calling it twice accumulates twice.
  void backward(Var loss) {
    if (nodes_.empty() || loss.id >= nodes_.size()) {
      throw StateError("backward called before a forward pass was recorded");
    }
    if (node(loss).value.size() != 1) {
      throw StateError("backward requires a scalar loss, got shape " +
                       shape_str(node(loss).value.shape()));
    }
    for (auto& n : nodes_) {
      if (n.requires_grad) {
        if (n.grad.empty()) {
          n.grad = Tensor(n.value.shape());
        } else {
          n.grad.zero();
        }
      }
    }
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backward) n.backward(*this);
    }
    for (auto& n : nodes_) {
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, Parameter* param, BackwardFn backward) {
    if (!tracking_) {
      requires_grad = false;
      param = nullptr;
      backward = nullptr;
    }
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, param, std::move(backward)});
    return Var{nodes_.size() - 1};
  }

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw StateError("variable does not belong to this graph");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw StateError("variable does not belong to this graph");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  bool tracking_ = true;
};

}  // namespace hiros::tensor
