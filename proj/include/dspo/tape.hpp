#pragma once
// Reverse-mode autodiff tape. Nodes are appended in forward execution order,
// so reverse index order is a valid topological order for the backward pass.
// A tape and the Vars pointing into it belong to one thread.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dspo/tensor.hpp"

namespace dspo {

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the node's own id (for reading its cached output) and the
  // gradient flowing into that output; pushes contributions into inputs
  // through grad_buffer().
  using Backward = std::function<void(Tape&, std::size_t self, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  // Appends an op result. Throws Error(Numeric) if `value` is not finite.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
             Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::string_view op(std::size_t id) const { return nodes_.at(id).op; }

  Tensor& grad_buffer(std::size_t id);

  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  void backward(Var loss);
  // Gradient of the last backward() w.r.t. v; zeros if v was unreachable.
  Tensor grad(Var v) const;
  std::vector<Tensor> gradients(Var loss, std::span<const Var> wrt);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    std::optional<Tensor> grad;
    Backward backward;
    bool requires_grad = false;
  };

  void check_owned(Var v) const;

  std::deque<Node> nodes_;
};

}  // namespace dspo
