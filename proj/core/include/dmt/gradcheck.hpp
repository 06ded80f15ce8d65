#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dmt/tape.hpp"

namespace dmt {

/// Scalar function of a list of tensors, expressed with tape primitives.
/// `params[i]` is the tape leaf for the i-th checked tensor.
using ScalarComputation = std::function<Var(Tape&, const std::vector<Var>& params)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-5;
  // Denominator floor of the relative error: |a - n| / max(|a|, |n|, floor).
  // Keep it above the rounding noise of the difference (~ eps * sum|terms| / h)
  // so that structurally zero gradients do not dominate.
  double magnitude_floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  double tolerance = 0.0;
  bool passed = true;

  std::string summary() const;
};

/// Compares the tape gradient of `computation` with the central difference
/// (f(x+h) - f(x-h)) / 2h for every entry of every tensor in `params`.
/// The tensors are perturbed in place and restored. Throws InvalidArgument
/// when two forward passes at the same point disagree.
GradCheckReport run_grad_check(const ScalarComputation& computation, std::vector<Tensor>& params,
                               const GradCheckOptions& options = {});

/// Same check with the entries of ParameterSets bound through
/// Tape::parameter(). `build` receives the tape and must read the parameters
/// itself; used for whole-model checks.
GradCheckReport run_grad_check(const std::function<Var(Tape&)>& build, std::vector<Parameter*> params,
                               const GradCheckOptions& options = {});

}  // namespace dmt
