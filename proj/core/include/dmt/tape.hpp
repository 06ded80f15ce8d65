#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>

#include "dmt/parameter.hpp"
#include "dmt/tensor.hpp"

namespace dmt {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

enum class GradMode { kRecord, kNoGrad };

/// Reverse-mode tape over a closed set of primitives (see ops.hpp).
///
/// Primitives append nodes in execution order; backward() walks them in
/// reverse and calls each node's adjoint. Parameter leaves reference the
/// caller's Parameter and, after backward(), add their gradient into
/// Parameter::grad. Parameters never read by the tape keep a zero gradient.
class Tape {
 public:
  using Adjoint = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(GradMode mode = GradMode::kRecord) : mode_(mode) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == GradMode::kRecord; }

  /// Value without gradient. The reference overload does not copy; the
  /// tensor must outlive the tape.
  Var constant(Tensor value);
  Var constant_ref(const Tensor& value);
  Var constant_ref(Tensor&&) = delete;  // a temporary would dangle by backward()

  /// Leaf whose gradient is readable through grad() after backward().
  Var input(Tensor value);

  /// Leaf bound to a Parameter. Frozen or no-grad reads act as constants.
  Var parameter(Parameter& param, bool frozen = false);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  /// Gradient of the last backward() output with respect to v; a zero
  /// tensor when nothing flowed into v.
  Tensor grad(Var v) const;

  /// Seeds d(out)/d(out) = seed and propagates. `out` must hold one element.
  void backward(Var out, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }

  // Primitive-author interface.
  Var record(Tensor value, bool needs_grad, Adjoint adjoint);
  bool any_requires_grad(std::initializer_list<Var> vars) const;
  const Tensor& out_grad(std::size_t self) const { return nodes_[self].grad; }
  /// Gradient buffer of v (allocated on first use) or nullptr if v takes none.
  Tensor* grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Adjoint adjoint;
  };

  const Node& node(Var v) const;

  GradMode mode_;
  std::deque<Node> nodes_;
};

}  // namespace dmt
