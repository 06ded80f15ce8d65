#pragma once

#include <cstddef>
#include <vector>

#include "dmt/tape.hpp"

// Differentiable primitives. All matrices are rank 2 and row-major; vectors
// used as biases / LN affine terms may be rank 1 or 1 x n.
namespace dmt::ops {

Var matmul(Tape& t, Var a, Var b);     // [m,k] x [k,n]
Var matmul_nt(Tape& t, Var a, Var b);  // [m,k] x [n,k]^T
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double factor);
Var add_bias(Tape& t, Var x, Var bias);  // row broadcast
Var linear(Tape& t, Var x, Var weight, Var bias);
Var gelu(Tape& t, Var x);
Var softmax_rows(Tape& t, Var x);
Var log_softmax_rows(Tape& t, Var x);
Var layer_norm_rows(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-6);
Var l2_normalize_rows(Tape& t, Var x);
Var sum(Tape& t, Var x);   // -> [1]
Var mean(Tape& t, Var x);  // -> [1]
Var transpose(Tape& t, Var x);
Var reshape(Tape& t, Var x, Shape shape);
Var slice_rows(Tape& t, Var x, std::size_t begin, std::size_t count);
Var slice_cols(Tape& t, Var x, std::size_t begin, std::size_t count);
Var concat_rows(Tape& t, const std::vector<Var>& parts);
Var concat_cols(Tape& t, const std::vector<Var>& parts);

/// (1/rows) * sum_i KL(softmax(logits_i) || softmax(target_i)), softmax over
/// columns. The target is a constant. Student-side gradient per row is
/// p * (log p - log q - KL_i), which is exactly zero when the rows agree.
Var kl_softmax_rows(Tape& t, Var logits, const Tensor& target_logits);

}  // namespace dmt::ops
