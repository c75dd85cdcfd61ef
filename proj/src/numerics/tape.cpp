#include "dspo/tape.hpp"

#include "dspo/error.hpp"

namespace dspo {

const Tensor& Var::value() const {
  if (!tape_) fail(ErrorKind::Dimension, "use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) fail(ErrorKind::Numeric, "non-finite constant on tape");
  nodes_.push_back(Node{"constant", std::move(value), std::nullopt, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  if (!value.all_finite()) fail(ErrorKind::Numeric, "non-finite variable on tape");
  nodes_.push_back(Node{"variable", std::move(value), std::nullopt, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (v.tape_ != this) fail(ErrorKind::Dimension, "Var belongs to a different tape");
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
                 Backward backward) {
  if (!value.all_finite()) {
    fail(ErrorKind::Numeric, "non-finite output from " + std::string(op) + " with shape " +
                                 shape_string(value.shape()));
  }
  bool needs_grad = false;
  for (Var in : inputs) {
    check_owned(in);
    needs_grad = needs_grad || nodes_[in.id_].requires_grad;
  }
  nodes_.push_back(Node{op, std::move(value), std::nullopt,
                        needs_grad ? std::move(backward) : Backward{}, needs_grad});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_.at(id);
  if (!node.grad) node.grad = Tensor::zeros(node.value.shape());
  return *node.grad;
}

void Tape::backward(Var loss) {
  check_owned(loss);
  const Tensor& out = nodes_[loss.id_].value;
  if (out.size() != 1) {
    fail(ErrorKind::Dimension, "backward needs a scalar loss, got shape " + shape_string(out.shape()));
  }
  for (Node& node : nodes_) node.grad.reset();
  grad_buffer(loss.id_)[0] = 1.0;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || !node.grad || !node.backward) continue;
    node.backward(*this, id, *node.grad);
  }
}

Tensor Tape::grad(Var v) const {
  check_owned(v);
  const Node& node = nodes_[v.id_];
  return node.grad ? *node.grad : Tensor::zeros(node.value.shape());
}

std::vector<Tensor> Tape::gradients(Var loss, std::span<const Var> wrt) {
  backward(loss);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (Var v : wrt) out.push_back(grad(v));
  return out;
}

}  // namespace dspo
