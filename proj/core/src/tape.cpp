#include "dmt/tape.hpp"

#include <string>

#include "dmt/errors.hpp"

namespace dmt {

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw InvalidArgument("tape: invalid variable");
  return nodes_[v.id];
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.ref = &value;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = recording();
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Parameter& param, bool frozen) {
  Node n;
  n.ref = &param.value;
  if (recording() && !frozen) {
    n.requires_grad = true;
    n.param = &param;
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.ref ? *n.ref : n.value;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.grad.empty()) return n.grad;
  return Tensor(value(v).shape());
}

Var Tape::record(Tensor value, bool needs_grad, Adjoint adjoint) {
  Node n;
  n.value = std::move(value);
  if (recording() && needs_grad) {
    n.requires_grad = true;
    n.adjoint = std::move(adjoint);
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

bool Tape::any_requires_grad(std::initializer_list<Var> vars) const {
  if (!recording()) return false;
  for (Var v : vars) {
    if (node(v).requires_grad) return true;
  }
  return false;
}

Tensor* Tape::grad_buffer(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw InvalidArgument("tape: invalid variable");
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor((n.ref ? *n.ref : n.value).shape());
  return &n.grad;
}

void Tape::backward(Var out, double seed) {
  if (!recording()) throw InvalidArgument("tape: backward on a no-grad tape");
  if (value(out).numel() != 1) {
    throw ShapeError("tape: backward needs a scalar output, got " + shape_to_string(value(out).shape()));
  }
  for (auto& n : nodes_) {
    if (!n.grad.empty()) n.grad = Tensor();
  }
  Tensor* g = grad_buffer(out);
  if (!g) return;
  (*g)[0] = seed;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.adjoint) continue;
    n.adjoint(*this, i);
  }
  for (auto& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    auto& dst = n.param->grad;
    if (dst.shape() != n.grad.shape()) dst = Tensor(n.grad.shape());
    for (std::size_t k = 0; k < dst.numel(); ++k) dst[k] += n.grad[k];
  }
}

}  // namespace dmt
