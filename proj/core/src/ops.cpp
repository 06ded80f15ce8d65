#include "dmt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dmt/errors.hpp"
#include "dmt/numerics.hpp"

namespace dmt::ops {

namespace {

void require_matrix(const Tensor& x, const char* op) {
  if (x.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_to_string(x.shape()));
  }
}

// Length of a bias-like vector (rank 1 or a single row).
std::size_t vector_length(const Tensor& v, const char* op) {
  if (v.rank() == 1) return v.shape()[0];
  if (v.rank() == 2 && v.shape()[0] == 1) return v.shape()[1];
  throw ShapeError(std::string(op) + ": expected a vector, got " + shape_to_string(v.shape()));
}

// The kernels below accumulate four inner-dimension terms per pass over a
// row of c, which keeps c in registers for longer. Summation order is fixed,
// so results are reproducible run to run.

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t k4 = k - k % 4;
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    std::size_t p = 0;
    for (; p < k4; p += 4) {
      const double a0 = ai[p], a1 = ai[p + 1], a2 = ai[p + 2], a3 = ai[p + 3];
      const double* b0 = b + p * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += (a0 * b0[j] + a1 * b1[j]) + (a2 * b2[j] + a3 * b3[j]);
    }
    for (; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t k4 = k - k % 4;
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      std::size_t p = 0;
      for (; p < k4; p += 4) {
        s0 += ai[p] * bj[p];
        s1 += ai[p + 1] * bj[p + 1];
        s2 += ai[p + 2] * bj[p + 2];
        s3 += ai[p + 3] * bj[p + 3];
      }
      for (; p < k; ++p) s0 += ai[p] * bj[p];
      c[i * n + j] += (s0 + s1) + (s2 + s3);
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t m4 = m - m % 4;
  std::size_t i = 0;
  for (; i < m4; i += 4) {
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    const double* b0 = b + i * n;
    const double* b1 = b0 + n;
    const double* b2 = b1 + n;
    const double* b3 = b2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const double x0 = a0[p], x1 = a1[p], x2 = a2[p], x3 = a3[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += (x0 * b0[j] + x1 * b1[j]) + (x2 * b2[j] + x3 * b3[j]);
    }
  }
  for (; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_to_string(av.shape()) + " x " +
                     shape_to_string(bv.shape()));
  }
  Tensor out({m, n});
  gemm_nn(av.storage().data(), bv.storage().data(), out.storage().data(), m, k, n);
  return t.record(std::move(out), t.any_requires_grad({a, b}), [a, b, m, k, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* ga = tp.grad_buffer(a)) {
      gemm_nt(g.storage().data(), tp.value(b).storage().data(), ga->storage().data(), m, n, k);
    }
    if (Tensor* gb = tp.grad_buffer(b)) {
      gemm_tn(tp.value(a).storage().data(), g.storage().data(), gb->storage().data(), m, k, n);
    }
  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_matrix(av, "matmul_nt");
  require_matrix(bv, "matmul_nt");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k) {
    throw ShapeError("matmul_nt: inner dimensions differ " + shape_to_string(av.shape()) + " x " +
                     shape_to_string(bv.shape()) + "^T");
  }
  Tensor out({m, n});
  gemm_nt(av.storage().data(), bv.storage().data(), out.storage().data(), m, k, n);
  return t.record(std::move(out), t.any_requires_grad({a, b}), [a, b, m, k, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* ga = tp.grad_buffer(a)) {
      gemm_nn(g.storage().data(), tp.value(b).storage().data(), ga->storage().data(), m, n, k);
    }
    if (Tensor* gb = tp.grad_buffer(b)) {
      gemm_tn(g.storage().data(), tp.value(a).storage().data(), gb->storage().data(), m, n, k);
    }
  });
}

Var add(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "add");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  return t.record(std::move(out), t.any_requires_grad({a, b}), [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    for (Var v : {a, b}) {
      if (Tensor* gv = tp.grad_buffer(v)) {
        for (std::size_t i = 0; i < g.numel(); ++i) (*gv)[i] += g[i];
      }
    }
  });
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "sub");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  return t.record(std::move(out), t.any_requires_grad({a, b}), [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* ga = tp.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i];
    }
    if (Tensor* gb = tp.grad_buffer(b)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  return t.record(std::move(out), t.any_requires_grad({a, b}), [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* ga = tp.grad_buffer(a)) {
      const Tensor& bv2 = tp.value(b);
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bv2[i];
    }
    if (Tensor* gb = tp.grad_buffer(b)) {
      const Tensor& av2 = tp.value(a);
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * av2[i];
    }
  });
}

Var scale(Tape& t, Var a, double factor) {
  const Tensor& av = t.value(a);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * factor;
  return t.record(std::move(out), t.any_requires_grad({a}), [a, factor](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* ga = tp.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * factor;
    }
  });
}

Var add_bias(Tape& t, Var x, Var bias) {
  const Tensor& xv = t.value(x);
  const Tensor& bv = t.value(bias);
  require_matrix(xv, "add_bias");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (vector_length(bv, "add_bias") != n) {
    throw ShapeError("add_bias: bias " + shape_to_string(bv.shape()) + " does not match " +
                     shape_to_string(xv.shape()));
  }
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
  }
  return t.record(std::move(out), t.any_requires_grad({x, bias}), [x, bias, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* gx = tp.grad_buffer(x)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i];
    }
    if (Tensor* gb = tp.grad_buffer(bias)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += g[i * n + j];
      }
    }
  });
}

Var linear(Tape& t, Var x, Var weight, Var bias) { return add_bias(t, matmul(t, x, weight), bias); }

Var gelu(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = dmt::gelu(xv[i]);
  return t.record(std::move(out), t.any_requires_grad({x}), [x](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* gx = tp.grad_buffer(x)) {
      const Tensor& xv2 = tp.value(x);
      for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * gelu_derivative(xv2[i]);
    }
  });
}

Var softmax_rows(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  require_matrix(xv, "softmax_rows");
  xv.check_finite("softmax_rows");
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < m; ++i) kernel::softmax(xv.row(i), out.row(i));
  const bool needs_grad = t.any_requires_grad({x});
  Tensor y = needs_grad ? out : Tensor();
  return t.record(std::move(out), needs_grad, [x, m, n, y = std::move(y)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    Tensor* gx = tp.grad_buffer(x);
    if (!gx) return;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) (*gx)[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

Var log_softmax_rows(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  require_matrix(xv, "log_softmax_rows");
  xv.check_finite("log_softmax_rows");
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out(xv.shape());
  Tensor probs(xv.shape());
  for (std::size_t i = 0; i < m; ++i) {
    kernel::log_softmax(xv.row(i), out.row(i));
    kernel::softmax(xv.row(i), probs.row(i));
  }
  return t.record(std::move(out), t.any_requires_grad({x}),
                  [x, m, n, probs = std::move(probs)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.out_grad(self);
                    Tensor* gx = tp.grad_buffer(x);
                    if (!gx) return;
                    for (std::size_t i = 0; i < m; ++i) {
                      double total = 0.0;
                      for (std::size_t j = 0; j < n; ++j) total += g[i * n + j];
                      for (std::size_t j = 0; j < n; ++j) {
                        (*gx)[i * n + j] += g[i * n + j] - probs[i * n + j] * total;
                      }
                    }
                  });
}

Var layer_norm_rows(Tape& t, Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = t.value(x);
  const Tensor& gv = t.value(gamma);
  const Tensor& bv = t.value(beta);
  require_matrix(xv, "layer_norm_rows");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (n < 2) throw InvalidArgument("layer_norm_rows: need at least 2 features");
  if (vector_length(gv, "layer_norm_rows") != n || vector_length(bv, "layer_norm_rows") != n) {
    throw ShapeError("layer_norm_rows: gamma/beta do not match feature count");
  }
  if (!(eps >= 0.0)) throw InvalidArgument("layer_norm_rows: eps must be non-negative");
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> rstd(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = xv.row(i);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * rstd[i];
      xhat[i * n + j] = h;
      out[i * n + j] = gv[j] * h + bv[j];
    }
  }
  return t.record(
      std::move(out), t.any_requires_grad({x, gamma, beta}),
      [x, gamma, beta, m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        if (Tensor* gg = tp.grad_buffer(gamma)) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) (*gg)[j] += g[i * n + j] * xhat[i * n + j];
          }
        }
        if (Tensor* gb = tp.grad_buffer(beta)) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) (*gb)[j] += g[i * n + j];
          }
        }
        if (Tensor* gx = tp.grad_buffer(x)) {
          const Tensor& gv2 = tp.value(gamma);
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_g = 0.0, mean_gx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double gh = g[i * n + j] * gv2[j];
              mean_g += gh;
              mean_gx += gh * xhat[i * n + j];
            }
            mean_g *= inv_n;
            mean_gx *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double gh = g[i * n + j] * gv2[j];
              (*gx)[i * n + j] += rstd[i] * (gh - mean_g - xhat[i * n + j] * mean_gx);
            }
          }
        }
      });
}

Var l2_normalize_rows(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  require_matrix(xv, "l2_normalize_rows");
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out(xv.shape());
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (double v : xv.row(i)) ss += v * v;
    norms[i] = std::max(std::sqrt(ss), 1e-12);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] / norms[i];
  }
  Tensor y = out;
  return t.record(std::move(out), t.any_requires_grad({x}),
                  [x, m, n, y = std::move(y), norms = std::move(norms)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.out_grad(self);
                    Tensor* gx = tp.grad_buffer(x);
                    if (!gx) return;
                    for (std::size_t i = 0; i < m; ++i) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
                      for (std::size_t j = 0; j < n; ++j) {
                        (*gx)[i * n + j] += (g[i * n + j] - y[i * n + j] * dot) / norms[i];
                      }
                    }
                  });
}

Var sum(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  double total = 0.0;
  for (double v : xv.storage()) total += v;
  return t.record(Tensor::scalar(total), t.any_requires_grad({x}), [x](Tape& tp, std::size_t self) {
    const double g = tp.out_grad(self)[0];
    if (Tensor* gx = tp.grad_buffer(x)) {
      for (auto& v : gx->storage()) v += g;
    }
  });
}

Var mean(Tape& t, Var x) { return scale(t, sum(t, x), 1.0 / static_cast<double>(t.value(x).numel())); }

Var transpose(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  require_matrix(xv, "transpose");
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  }
  return t.record(std::move(out), t.any_requires_grad({x}), [x, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* gx = tp.grad_buffer(x)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) (*gx)[i * n + j] += g[j * m + i];
      }
    }
  });
}

Var reshape(Tape& t, Var x, Shape shape) {
  Tensor out = t.value(x).reshaped(std::move(shape));
  return t.record(std::move(out), t.any_requires_grad({x}), [x](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* gx = tp.grad_buffer(x)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i];
    }
  });
}

Var slice_rows(Tape& t, Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = t.value(x);
  require_matrix(xv, "slice_rows");
  const std::size_t n = xv.cols();
  if (count == 0 || begin + count > xv.rows()) throw ShapeError("slice_rows: range out of bounds");
  Tensor out({count, n});
  std::copy_n(xv.storage().begin() + static_cast<std::ptrdiff_t>(begin * n), count * n, out.storage().begin());
  return t.record(std::move(out), t.any_requires_grad({x}), [x, begin, count, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* gx = tp.grad_buffer(x)) {
      for (std::size_t i = 0; i < count * n; ++i) (*gx)[begin * n + i] += g[i];
    }
  });
}

Var slice_cols(Tape& t, Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = t.value(x);
  require_matrix(xv, "slice_cols");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (count == 0 || begin + count > n) throw ShapeError("slice_cols: range out of bounds");
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = xv[i * n + begin + j];
  }
  return t.record(std::move(out), t.any_requires_grad({x}), [x, begin, count, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* gx = tp.grad_buffer(x)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < count; ++j) (*gx)[i * n + begin + j] += g[i * count + j];
      }
    }
  });
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = t.value(parts[0]).cols();
  std::size_t total = 0;
  bool needs_grad = false;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    if (v.cols() != n) throw ShapeError("concat_rows: column counts differ");
    total += v.rows();
    needs_grad = needs_grad || t.any_requires_grad({p});
  }
  Tensor out({total, n});
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    std::copy(v.storage().begin(), v.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += v.numel();
  }
  return t.record(std::move(out), needs_grad, [parts](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t len = tp.value(p).numel();
      if (Tensor* gp = tp.grad_buffer(p)) {
        for (std::size_t i = 0; i < len; ++i) (*gp)[i] += g[off + i];
      }
      off += len;
    }
  });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = t.value(parts[0]).rows();
  std::size_t total = 0;
  bool needs_grad = false;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    if (v.rank() != 2 || v.rows() != m) throw ShapeError("concat_cols: row counts differ");
    total += v.cols();
    needs_grad = needs_grad || t.any_requires_grad({p});
  }
  Tensor out({m, total});
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    const std::size_t w = v.cols();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < w; ++j) out[i * total + offset + j] = v[i * w + j];
    }
    offset += w;
  }
  return t.record(std::move(out), needs_grad, [parts, m, total](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t w = tp.value(p).cols();
      if (Tensor* gp = tp.grad_buffer(p)) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < w; ++j) (*gp)[i * w + j] += g[i * total + off + j];
        }
      }
      off += w;
    }
  });
}

Var kl_softmax_rows(Tape& t, Var logits, const Tensor& target_logits) {
  const Tensor& sv = t.value(logits);
  require_matrix(sv, "kl_softmax_rows");
  require_same_shape(sv, target_logits, "kl_softmax_rows");
  sv.check_finite("kl_softmax_rows: student logits");
  target_logits.check_finite("kl_softmax_rows: target logits");
  const std::size_t m = sv.rows(), n = sv.cols();
  Tensor p(sv.shape());
  Tensor log_ratio(sv.shape());
  std::vector<double> row_kl(m);
  std::vector<double> log_p(n), log_q(n);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    kernel::softmax(sv.row(i), p.row(i));
    kernel::log_softmax(sv.row(i), log_p);
    kernel::log_softmax(target_logits.row(i), log_q);
    double kl = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = log_p[j] - log_q[j];
      log_ratio[i * n + j] = d;
      kl += p[i * n + j] * d;
    }
    row_kl[i] = kl;
    total += kl;
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  return t.record(Tensor::scalar(total * inv_m), t.any_requires_grad({logits}),
                  [logits, m, n, inv_m, p = std::move(p), log_ratio = std::move(log_ratio),
                   row_kl = std::move(row_kl)](Tape& tp, std::size_t self) {
                    Tensor* gs = tp.grad_buffer(logits);
                    if (!gs) return;
                    const double g = tp.out_grad(self)[0] * inv_m;
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t j = 0; j < n; ++j) {
                        (*gs)[i * n + j] += g * p[i * n + j] * (log_ratio[i * n + j] - row_kl[i]);
                      }
                    }
                  });
}

}  // namespace dmt::ops
