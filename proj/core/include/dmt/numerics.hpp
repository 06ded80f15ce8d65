#pragma once

#include <span>
#include <vector>

namespace dmt {

/// Probability vector exp(v_j) / sum_d exp(v_d), evaluated with the row max
/// subtracted. Throws InvalidArgument on empty input and NumericError on any
/// non-finite entry (including -Inf: no masked softmax).
std::vector<double> softmax(std::span<const double> v);

/// KL(p || q) = sum_j p_j log(p_j / q_j).
///
/// Both arguments must be probability vectors: equal length (ShapeError),
/// strictly positive entries and unit sum within 1e-6 (InvalidArgument).
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// gamma * (x - mean) / sqrt(var + eps) + beta with the population variance.
/// Needs at least two entries; eps may be zero but not negative.
std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gamma,
                               std::span<const double> beta, double eps = 1e-6);

/// Exact GELU, x * Phi(x) with the erf-based normal CDF.
double gelu(double x);
double gelu_derivative(double x);

// Unchecked row kernels shared by the tape primitives.
namespace kernel {

void softmax(std::span<const double> in, std::span<double> out);
void log_softmax(std::span<const double> in, std::span<double> out);

}  // namespace kernel

}  // namespace dmt
