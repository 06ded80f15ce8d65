#include "naive.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

Mat to_mat(const dmt::Tensor& t) {
  const std::size_t r = t.rows(), c = t.cols();
  Mat m(r, Vec(c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m[i][j] = t.storage()[i * c + j];
  return m;
}

dmt::Tensor to_tensor(const Mat& m) {
  std::vector<double> flat;
  for (const auto& row : m) flat.insert(flat.end(), row.begin(), row.end());
  return dmt::Tensor({m.size(), m.empty() ? 0 : m[0].size()}, std::move(flat));
}

Vec softmax(const Vec& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  Vec out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    z += out[i];
  }
  for (double& x : out) x /= z;
  return out;
}

double kl(const Vec& p, const Vec& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

Vec layer_norm(const Vec& x, const Vec& gamma, const Vec& beta, double eps) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gamma[i] * (x[i] - mean) / std::sqrt(var + eps) + beta[i];
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double mean_row_kl(const Mat& s, const Mat& t) {
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) total += kl(softmax(s[i]), softmax(t[i]));
  return total / static_cast<double>(s.size());
}

Mat channels_of(const Mat& tokens) {
  const std::size_t n = tokens.size() - 1, d = tokens[0].size();
  Mat out(d, Vec(n));
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t k = 0; k < n; ++k) out[c][k] = tokens[k + 1][c];
  return out;
}

double tfd(const Mat& s, const Mat& t) { return mean_row_kl(s, t); }
double sfd(const Mat& s, const Mat& t) { return mean_row_kl(s, t); }

static double mean_row_sq(const Mat& s, const Mat& t) {
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < s[i].size(); ++j) row += (s[i][j] - t[i][j]) * (s[i][j] - t[i][j]);
    total += row / static_cast<double>(s[i].size());
  }
  return total / static_cast<double>(s.size());
}

double mse_token(const Mat& s, const Mat& t) { return mean_row_sq(s, t); }
double mse_spatial(const Mat& s, const Mat& t) { return mean_row_sq(s, t); }

Mat fuse(const std::vector<Mat>& teachers, bool sorted) {
  Mat out(teachers[0].size(), Vec(teachers[0][0].size(), 0.0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < out[i].size(); ++j) {
      Vec vals;
      for (const auto& t : teachers) vals.push_back(t[i][j]);
      if (sorted) std::sort(vals.begin(), vals.end());
      double s = 0.0;
      for (double v : vals) s += v;
      out[i][j] = s;
    }
  }
  return out;
}

Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), Vec(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Mat affine(const Mat& x, const Mat& w, const Vec& b) {
  Mat out = matmul(x, w);
  for (auto& row : out)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  return out;
}

void AdamW::update(Vec& theta, const Vec& grad, double lr, bool decay) {
  if (m.empty()) {
    m.assign(theta.size(), 0.0);
    v.assign(theta.size(), 0.0);
  }
  ++step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mhat = m[i] / c1, vhat = v[i] / c2;
    double delta = mhat / (std::sqrt(vhat) + eps);
    if (decay) delta += weight_decay * theta[i];
    theta[i] -= lr * delta;
  }
}

Mat patches(const dmt::Tensor& image, std::size_t p) {
  const std::size_t h = image.shape()[1], w = image.shape()[2];
  const std::size_t gw = w / p;
  Mat out((h / p) * gw, Vec(3 * p * p));
  for (std::size_t n = 0; n < out.size(); ++n) {
    const std::size_t gy = n / gw, gx = n % gw;
    std::size_t k = 0;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x) out[n][k++] = image.storage()[(c * h + gy * p + y) * w + gx * p + x];
  }
  return out;
}

static Vec vec_of(const dmt::ParameterSet& ps, const std::string& name) { return ps.get(name).value.storage(); }

static Mat mat_of(const dmt::ParameterSet& ps, const std::string& name) { return to_mat(ps.get(name).value); }

Mat vit_encode(const dmt::ViTConfig& cfg, const dmt::ParameterSet& ps, const dmt::Tensor& image) {
  const std::size_t d = cfg.embed_dim, heads = cfg.num_heads, hd = d / heads;
  const double eps = 1e-6;

  Mat x;
  x.push_back(vec_of(ps, "cls_token"));
  for (const Vec& patch : patches(image, cfg.patch_size)) {
    Mat one = affine(Mat{patch}, mat_of(ps, "patch_embed.weight"), vec_of(ps, "patch_embed.bias"));
    x.push_back(one[0]);
  }
  const Mat pos = mat_of(ps, "pos_embed");
  for (std::size_t n = 0; n < x.size(); ++n)
    for (std::size_t j = 0; j < d; ++j) x[n][j] += pos[n][j];

  const std::size_t t = x.size();
  for (std::size_t b = 0; b < cfg.depth; ++b) {
    const std::string pre = "blocks." + std::to_string(b) + ".";
    Mat h(t);
    for (std::size_t n = 0; n < t; ++n)
      h[n] = layer_norm(x[n], vec_of(ps, pre + "norm1.weight"), vec_of(ps, pre + "norm1.bias"), eps);
    const Mat qkv = affine(h, mat_of(ps, pre + "attn.qkv.weight"), vec_of(ps, pre + "attn.qkv.bias"));

    Mat merged(t, Vec(d, 0.0));
    for (std::size_t head = 0; head < heads; ++head) {
      for (std::size_t i = 0; i < t; ++i) {
        Vec scores(t);
        for (std::size_t j = 0; j < t; ++j) {
          double s = 0.0;
          for (std::size_t k = 0; k < hd; ++k) s += qkv[i][head * hd + k] * qkv[j][d + head * hd + k];
          scores[j] = s / std::sqrt(static_cast<double>(hd));
        }
        const Vec a = softmax(scores);
        for (std::size_t k = 0; k < hd; ++k) {
          double s = 0.0;
          for (std::size_t j = 0; j < t; ++j) s += a[j] * qkv[j][2 * d + head * hd + k];
          merged[i][head * hd + k] = s;
        }
      }
    }
    const Mat attn = affine(merged, mat_of(ps, pre + "attn.proj.weight"), vec_of(ps, pre + "attn.proj.bias"));
    for (std::size_t n = 0; n < t; ++n)
      for (std::size_t j = 0; j < d; ++j) x[n][j] += attn[n][j];

    Mat h2(t);
    for (std::size_t n = 0; n < t; ++n)
      h2[n] = layer_norm(x[n], vec_of(ps, pre + "norm2.weight"), vec_of(ps, pre + "norm2.bias"), eps);
    Mat hidden = affine(h2, mat_of(ps, pre + "mlp.fc1.weight"), vec_of(ps, pre + "mlp.fc1.bias"));
    for (auto& row : hidden)
      for (double& v : row) v = gelu(v);
    const Mat mlp = affine(hidden, mat_of(ps, pre + "mlp.fc2.weight"), vec_of(ps, pre + "mlp.fc2.bias"));
    for (std::size_t n = 0; n < t; ++n)
      for (std::size_t j = 0; j < d; ++j) x[n][j] += mlp[n][j];
  }
  for (auto& row : x) row = layer_norm(row, vec_of(ps, "norm.weight"), vec_of(ps, "norm.bias"), eps);
  return x;
}

}  // namespace oracle
