#include "rlcf/nn/tape.hpp"

namespace rlcf::nn {

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), Matrix(), false, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back({std::move(value), Matrix(), grad_enabled_, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::param(const Tensor& t) {
  if (auto it = params_.find(&t); it != params_.end()) return Var(this, it->second);
  Var v = leaf(t.value);
  params_.emplace(&t, v.id_);
  return v;
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward fn) {
  bool needs = false;
  if (grad_enabled_) {
    for (Var in : inputs) needs = needs || nodes_[idx(in)].requires_grad;
  }
  nodes_.push_back({std::move(value), Matrix(), needs, needs ? std::move(fn) : nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Matrix& Tape::grad_slot(Var v) {
  Node& n = nodes_[idx(v)];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!grad_enabled_) throw std::logic_error("backward() on a no-grad tape");
  const std::size_t start = idx(loss);
  if (nodes_[start].value.size() != 1) throw std::logic_error("backward() needs a scalar loss");
  if (!nodes_[start].requires_grad) return;
  grad_slot(loss).setConstant(1.0);
  for (std::size_t i = start + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    // The closure may grow other nodes' grads but never reallocates nodes_.
    n.backward(*this, n.grad);
  }
}

const Matrix* Tape::param_grad(const Tensor& t) const {
  auto it = params_.find(&t);
  if (it == params_.end()) return nullptr;
  const Node& n = nodes_[static_cast<std::size_t>(it->second)];
  return n.grad.size() ? &n.grad : nullptr;
}

}  // namespace rlcf::nn
