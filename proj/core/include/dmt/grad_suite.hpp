#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmt/gradcheck.hpp"

namespace dmt {

struct GradSuiteResult {
  std::string component;
  GradCheckReport report;
};

/// Finite-difference checks of every differentiable piece on small random
/// inputs: the tape primitives, the encoder, the adapter, each distillation
/// loss, and the summed loss end to end through student encoder + adapter
/// (16x16 input, p=4, D'=8 -> D=16, two blocks, two fused teachers).
/// Parameters are moved away from the small init scale so that every
/// nonlinearity is exercised.
///
/// Component checks contract tensor outputs with random weights; the
/// resulting sums cancel, leaving ~1e-9 rounding noise in each difference,
/// so they use a 1e-5 magnitude floor. The end-to-end loss check keeps
/// `end_to_end`.
std::vector<GradSuiteResult> run_gradient_suites(std::uint64_t seed);

inline constexpr GradCheckOptions kComponentGradCheck{1e-5, 1e-4, 1e-5};
inline constexpr GradCheckOptions kEndToEndGradCheck{1e-5, 1e-4, 1e-6};

/// The end-to-end entry alone.
GradSuiteResult run_end_to_end_grad_check(std::uint64_t seed, const GradCheckOptions& options = kEndToEndGradCheck);

}  // namespace dmt
