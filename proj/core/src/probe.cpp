#include "dmt/probe.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dmt/errors.hpp"
#include "dmt/numerics.hpp"

namespace dmt {

Tensor class_token_features(const ViTEncoder& encoder, const Dataset& data) {
  const std::size_t d = encoder.config().embed_dim;
  Tensor out({data.size(), d});
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor tokens = encoder.encode(data.image(i)).tokens;
    std::copy_n(tokens.row(0).begin(), d, out.row(i).begin());
  }
  return out;
}

namespace {

std::size_t predict(const double* x, const std::vector<double>& w, const std::vector<double>& b, std::size_t f,
                    std::size_t k, std::vector<double>& logits) {
  for (std::size_t c = 0; c < k; ++c) {
    double z = b[c];
    for (std::size_t j = 0; j < f; ++j) z += x[j] * w[j * k + c];
    logits[c] = z;
  }
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

}  // namespace

ProbeResult probe_features(const Tensor& train_x, std::span<const std::uint8_t> train_y, const Tensor& test_x,
                           std::span<const std::uint8_t> test_y, const ProbeOptions& options) {
  if (train_x.rank() != 2 || test_x.rank() != 2 || train_x.cols() != test_x.cols()) {
    throw ShapeError("probe: feature matrices " + shape_to_string(train_x.shape()) + " and " +
                     shape_to_string(test_x.shape()) + " do not line up");
  }
  if (train_x.rows() != train_y.size() || test_x.rows() != test_y.size()) {
    throw ShapeError("probe: feature rows and label counts differ");
  }
  if (train_y.empty() || test_y.empty()) throw InvalidArgument("probe: empty split");
  std::vector<std::uint8_t> classes(train_y.begin(), train_y.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw InvalidArgument("probe: training labels contain a single class");

  const std::size_t n = train_x.rows(), f = train_x.cols();
  const std::size_t k = static_cast<std::size_t>(std::max(*std::max_element(train_y.begin(), train_y.end()),
                                                          *std::max_element(test_y.begin(), test_y.end()))) + 1;

  std::vector<double> mu(f, 0.0), sd(f, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) mu[j] += train_x(i, j);
  }
  for (auto& m : mu) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) sd[j] += (train_x(i, j) - mu[j]) * (train_x(i, j) - mu[j]);
  }
  for (auto& s : sd) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s < 1e-12) s = 1.0;
  }
  auto standardize = [&](const Tensor& x) {
    Tensor z(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < f; ++j) z(i, j) = (x(i, j) - mu[j]) / sd[j];
    }
    return z;
  };
  const Tensor xs = standardize(train_x);
  const Tensor ts = standardize(test_x);

  // Full-batch softmax regression with Adam.
  std::vector<double> w(f * k, 0.0), b(k, 0.0);
  std::vector<double> mw(w.size(), 0.0), vw(w.size(), 0.0), mb(k, 0.0), vb(k, 0.0);
  std::vector<double> gw(w.size()), gb(k), logits(k), p(k);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (std::size_t t = 1; t <= options.epochs; ++t) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = &xs.storage()[i * f];
      predict(x, w, b, f, k, logits);
      kernel::softmax(logits, p);
      p[train_y[i]] -= 1.0;
      for (std::size_t c = 0; c < k; ++c) {
        gb[c] += p[c];
        for (std::size_t j = 0; j < f; ++j) gw[j * k + c] += x[j] * p[c];
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t q = 0; q < w.size(); ++q) {
      const double g = gw[q] * inv_n + options.weight_decay * w[q];
      mw[q] = b1 * mw[q] + (1 - b1) * g;
      vw[q] = b2 * vw[q] + (1 - b2) * g * g;
      w[q] -= options.lr * (mw[q] / c1) / (std::sqrt(vw[q] / c2) + eps);
    }
    for (std::size_t c = 0; c < k; ++c) {
      const double g = gb[c] * inv_n;
      mb[c] = b1 * mb[c] + (1 - b1) * g;
      vb[c] = b2 * vb[c] + (1 - b2) * g * g;
      b[c] -= options.lr * (mb[c] / c1) / (std::sqrt(vb[c] / c2) + eps);
    }
  }

  auto accuracy = [&](const Tensor& x, std::span<const std::uint8_t> y) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      if (predict(&x.storage()[i * f], w, b, f, k, logits) == y[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(x.rows());
  };
  return ProbeResult{accuracy(xs, train_y), accuracy(ts, test_y)};
}

ProbeResult linear_probe(const ViTEncoder& encoder, const Dataset& train, const Dataset& test,
                         const ProbeOptions& options) {
  return probe_features(class_token_features(encoder, train), train.labels, class_token_features(encoder, test),
                        test.labels, options);
}

}  // namespace dmt
