#include "dmt/vit.hpp"

#include <cmath>

#include "dmt/errors.hpp"
#include "dmt/ops.hpp"
#include "dmt/rng.hpp"

namespace dmt {

void ViTConfig::validate() const {
  if (image_size == 0 || patch_size == 0) throw ConfigError("vit: image and patch size must be positive");
  if (image_size % patch_size != 0) {
    throw ConfigError("vit: image size " + std::to_string(image_size) + " is not divisible by patch size " +
                      std::to_string(patch_size));
  }
  if (embed_dim < 2) throw ConfigError("vit: embed_dim must be at least 2");
  if (num_heads == 0 || embed_dim % num_heads != 0) {
    throw ConfigError("vit: embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (mlp_ratio == 0) throw ConfigError("vit: mlp_ratio must be positive");
}

ViTConfig ViTConfig::vit_tiny() { return {224, 16, 12, 192, 3, 4}; }
ViTConfig ViTConfig::vit_small() { return {224, 16, 12, 384, 6, 4}; }
ViTConfig ViTConfig::vit_base() { return {224, 16, 12, 768, 12, 4}; }

std::vector<ParameterSpec> parameter_layout(const ViTConfig& config) {
  config.validate();
  const std::size_t d = config.embed_dim;
  const std::size_t hidden = config.hidden_dim();
  std::vector<ParameterSpec> layout;
  layout.push_back({"patch_embed.weight", {config.patch_dim(), d}, true});
  layout.push_back({"patch_embed.bias", {d}, false});
  layout.push_back({"cls_token", {1, d}, false});
  layout.push_back({"pos_embed", {config.num_tokens(), d}, false});
  for (std::size_t b = 0; b < config.depth; ++b) {
    const std::string prefix = "blocks." + std::to_string(b) + ".";
    layout.push_back({prefix + "norm1.weight", {d}, false});
    layout.push_back({prefix + "norm1.bias", {d}, false});
    layout.push_back({prefix + "attn.qkv.weight", {d, 3 * d}, true});
    layout.push_back({prefix + "attn.qkv.bias", {3 * d}, false});
    layout.push_back({prefix + "attn.proj.weight", {d, d}, true});
    layout.push_back({prefix + "attn.proj.bias", {d}, false});
    layout.push_back({prefix + "norm2.weight", {d}, false});
    layout.push_back({prefix + "norm2.bias", {d}, false});
    layout.push_back({prefix + "mlp.fc1.weight", {d, hidden}, true});
    layout.push_back({prefix + "mlp.fc1.bias", {hidden}, false});
    layout.push_back({prefix + "mlp.fc2.weight", {hidden, d}, true});
    layout.push_back({prefix + "mlp.fc2.bias", {d}, false});
  }
  layout.push_back({"norm.weight", {d}, false});
  layout.push_back({"norm.bias", {d}, false});
  return layout;
}

std::size_t param_count(const ViTConfig& config) {
  config.validate();
  const std::size_t d = config.embed_dim;
  const std::size_t hidden = config.hidden_dim();
  const std::size_t embed = config.patch_dim() * d + d;
  const std::size_t tokens = d + config.num_tokens() * d;
  const std::size_t attn = d * 3 * d + 3 * d + d * d + d;
  const std::size_t mlp = d * hidden + hidden + hidden * d + d;
  const std::size_t norms_per_block = 4 * d;
  return embed + tokens + config.depth * (attn + mlp + norms_per_block) + 2 * d;
}

Tensor patchify(const Tensor& image, std::size_t p) {
  if (image.rank() != 3 || image.shape()[0] != 3) {
    throw ShapeError("patchify: expected a 3 x H x W image, got " + shape_to_string(image.shape()));
  }
  const std::size_t h = image.shape()[1], w = image.shape()[2];
  if (p == 0 || h % p != 0 || w % p != 0) {
    throw ShapeError("patchify: image " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not divisible by patch size " + std::to_string(p));
  }
  const std::size_t gh = h / p, gw = w / p, dim = 3 * p * p;
  Tensor out({gh * gw, dim});
  for (std::size_t gy = 0; gy < gh; ++gy) {
    for (std::size_t gx = 0; gx < gw; ++gx) {
      double* row = out.storage().data() + (gy * gw + gx) * dim;
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) row[(c * p + y) * p + x] = image.at(c, gy * p + y, gx * p + x);
        }
      }
    }
  }
  return out;
}

Tensor unpatchify(const Tensor& patches, std::size_t h, std::size_t w, std::size_t p) {
  if (p == 0 || h % p != 0 || w % p != 0) throw ShapeError("unpatchify: size not divisible by patch size");
  const std::size_t gh = h / p, gw = w / p, dim = 3 * p * p;
  if (patches.rank() != 2 || patches.rows() != gh * gw || patches.cols() != dim) {
    throw ShapeError("unpatchify: patch matrix " + shape_to_string(patches.shape()) + " does not fit " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  Tensor image({3, h, w});
  for (std::size_t gy = 0; gy < gh; ++gy) {
    for (std::size_t gx = 0; gx < gw; ++gx) {
      const double* row = patches.storage().data() + (gy * gw + gx) * dim;
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) image.at(c, gy * p + y, gx * p + x) = row[(c * p + y) * p + x];
        }
      }
    }
  }
  return image;
}

ViTEncoder::ViTEncoder(const ViTConfig& config, std::uint64_t seed) : config_(config) {
  Rng rng(seed);
  for (const auto& spec : parameter_layout(config_)) {
    Tensor value(spec.shape);
    const bool is_ln_gamma = spec.name.ends_with("norm1.weight") || spec.name.ends_with("norm2.weight") ||
                             spec.name == "norm.weight";
    if (is_ln_gamma) {
      for (auto& v : value.storage()) v = 1.0;
    } else if (spec.decay || spec.name == "pos_embed") {
      for (auto& v : value.storage()) v = rng.normal(0.0, 0.02);
    }
    params_.add(spec.name, std::move(value), spec.decay);
  }
}

ViTEncoder::ViTEncoder(const ViTConfig& config, ParameterSet params) : config_(config), params_(std::move(params)) {
  const auto layout = parameter_layout(config_);
  if (layout.size() != params_.size()) {
    throw ShapeError("vit: expected " + std::to_string(layout.size()) + " parameters, got " +
                     std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    auto& p = params_.items()[i];
    if (p.name != layout[i].name || p.value.shape() != layout[i].shape) {
      throw ShapeError("vit: parameter " + std::to_string(i) + " is " + p.name + " " +
                       shape_to_string(p.value.shape()) + ", expected " + layout[i].name + " " +
                       shape_to_string(layout[i].shape));
    }
    p.decay = layout[i].decay;
  }
}

Var ViTEncoder::embed(Tape& tape, const Tensor& image) { return forward_impl(tape, image, true, true); }

Var ViTEncoder::forward(Tape& tape, const Tensor& image) { return forward_impl(tape, image, false, true); }

Tensor ViTEncoder::embed(const Tensor& image) const {
  Tape tape(GradMode::kNoGrad);
  return tape.value(forward_impl(tape, image, true, false));
}

TokenSequence ViTEncoder::encode(const Tensor& image) const {
  Tape tape(GradMode::kNoGrad);
  return TokenSequence{tape.value(forward_impl(tape, image, false, false))};
}

Var ViTEncoder::forward_impl(Tape& tape, const Tensor& image, bool embed_only, bool trainable) const {
  const auto& cfg = config_;
  if (image.rank() != 3 || image.shape()[0] != 3 || image.shape()[1] != cfg.image_size ||
      image.shape()[2] != cfg.image_size) {
    throw ShapeError("vit: image " + shape_to_string(image.shape()) + " does not match config " +
                     std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size));
  }
  auto& params = const_cast<ParameterSet&>(params_);
  const bool bind_trainable = trainable && !params.frozen() && tape.recording();
  auto p = [&](const std::string& name) -> Var {
    Parameter& param = params.get(name);
    return bind_trainable ? tape.parameter(param) : tape.constant_ref(param.value);
  };

  using namespace ops;
  const Var patches = tape.constant(patchify(image, cfg.patch_size));
  const Var tokens = linear(tape, patches, p("patch_embed.weight"), p("patch_embed.bias"));
  Var x = concat_rows(tape, {p("cls_token"), tokens});
  x = add(tape, x, p("pos_embed"));
  if (embed_only) return x;

  const std::size_t d = cfg.embed_dim, hd = cfg.head_dim();
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (std::size_t b = 0; b < cfg.depth; ++b) {
    const std::string prefix = "blocks." + std::to_string(b) + ".";
    const Var h = layer_norm_rows(tape, x, p(prefix + "norm1.weight"), p(prefix + "norm1.bias"));
    const Var qkv = linear(tape, h, p(prefix + "attn.qkv.weight"), p(prefix + "attn.qkv.bias"));
    std::vector<Var> heads;
    heads.reserve(cfg.num_heads);
    for (std::size_t head = 0; head < cfg.num_heads; ++head) {
      const Var q = slice_cols(tape, qkv, head * hd, hd);
      const Var k = slice_cols(tape, qkv, d + head * hd, hd);
      const Var v = slice_cols(tape, qkv, 2 * d + head * hd, hd);
      const Var attn = softmax_rows(tape, scale(tape, matmul_nt(tape, q, k), attn_scale));
      heads.push_back(matmul(tape, attn, v));
    }
    const Var merged = heads.size() == 1 ? heads[0] : concat_cols(tape, heads);
    x = add(tape, x, linear(tape, merged, p(prefix + "attn.proj.weight"), p(prefix + "attn.proj.bias")));

    const Var h2 = layer_norm_rows(tape, x, p(prefix + "norm2.weight"), p(prefix + "norm2.bias"));
    const Var hidden = gelu(tape, linear(tape, h2, p(prefix + "mlp.fc1.weight"), p(prefix + "mlp.fc1.bias")));
    x = add(tape, x, linear(tape, hidden, p(prefix + "mlp.fc2.weight"), p(prefix + "mlp.fc2.bias")));
  }
  return layer_norm_rows(tape, x, p("norm.weight"), p("norm.bias"));
}

}  // namespace dmt
