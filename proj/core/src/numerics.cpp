#include "dmt/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dmt/errors.hpp"

namespace dmt {

namespace kernel {

void softmax(std::span<const double> in, std::span<double> out) {
  const double peak = *std::max_element(in.begin(), in.end());
  double total = 0.0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    out[j] = std::exp(in[j] - peak);
    total += out[j];
  }
  const double inv = 1.0 / total;
  for (std::size_t j = 0; j < in.size(); ++j) out[j] *= inv;
}

void log_softmax(std::span<const double> in, std::span<double> out) {
  const double peak = *std::max_element(in.begin(), in.end());
  double total = 0.0;
  for (double v : in) total += std::exp(v - peak);
  const double log_total = std::log(total);
  for (std::size_t j = 0; j < in.size(); ++j) out[j] = in[j] - peak - log_total;
}

}  // namespace kernel

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("softmax: empty vector");
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("softmax: non-finite input");
  }
  std::vector<double> out(v.size());
  kernel::softmax(v, out);
  return out;
}

static void require_probability(std::span<const double> p, const char* name) {
  double total = 0.0;
  for (double x : p) {
    if (!std::isfinite(x)) throw NumericError(std::string("kl_divergence: non-finite entry in ") + name);
    if (x <= 0.0) throw InvalidArgument(std::string("kl_divergence: non-positive entry in ") + name);
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw InvalidArgument(std::string("kl_divergence: ") + name + " does not sum to 1");
  }
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ShapeError("kl_divergence: length mismatch " + std::to_string(p.size()) + " vs " +
                     std::to_string(q.size()));
  }
  if (p.empty()) throw InvalidArgument("kl_divergence: empty vectors");
  require_probability(q, "q");
  require_probability(p, "p");
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) kl += p[j] * std::log(p[j] / q[j]);
  return kl;
}

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gamma,
                               std::span<const double> beta, double eps) {
  const std::size_t d = x.size();
  if (d < 2) throw InvalidArgument("layer_norm: need at least 2 features");
  if (gamma.size() != d || beta.size() != d) throw ShapeError("layer_norm: gamma/beta length mismatch");
  if (!(eps >= 0.0)) throw InvalidArgument("layer_norm: eps must be non-negative");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  const double rstd = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) out[j] = gamma[j] * ((x[j] - mean) * rstd) + beta[j];
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return cdf + x * pdf;
}

}  // namespace dmt
