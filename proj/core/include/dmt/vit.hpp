#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "dmt/parameter.hpp"
#include "dmt/tape.hpp"
#include "dmt/tensor.hpp"

namespace dmt {

/// Plain ViT hyperparameters. Images are square, 3 x image_size x image_size.
struct ViTConfig {
  std::size_t image_size = 16;
  std::size_t patch_size = 4;
  std::size_t depth = 2;  // 0 is accepted as a degenerate embed + final-LN model
  std::size_t embed_dim = 16;
  std::size_t num_heads = 2;
  std::size_t mlp_ratio = 4;

  /// Throws ConfigError when the shape invariants do not hold.
  void validate() const;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return 3 * patch_size * patch_size; }
  std::size_t head_dim() const { return embed_dim / num_heads; }
  std::size_t hidden_dim() const { return mlp_ratio * embed_dim; }

  bool operator==(const ViTConfig&) const = default;

  static ViTConfig vit_tiny();   // D=192, 3 heads
  static ViTConfig vit_small();  // D=384, 6 heads
  static ViTConfig vit_base();   // D=768, 12 heads
};

/// Exact number of scalar parameters of an encoder with this config.
std::size_t param_count(const ViTConfig& config);

/// Image 3 x H x W -> N x 3p^2. Patches follow row-major grid order; inside a
/// patch the layout is channel-major, then row-major pixels.
Tensor patchify(const Tensor& image, std::size_t patch_size);
Tensor unpatchify(const Tensor& patches, std::size_t height, std::size_t width, std::size_t patch_size);

/// Output of an encoder for one image: (N+1) x D, row 0 is the class token.
struct TokenSequence {
  Tensor tokens;

  std::size_t num_tokens() const { return tokens.rows(); }
  std::size_t dim() const { return tokens.cols(); }
};

/// Pre-norm ViT encoder: patch embedding, class token, learned positional
/// embeddings, `depth` transformer blocks and a final LayerNorm.
///
/// Parameter names: patch_embed.{weight,bias}, cls_token, pos_embed,
/// blocks.<i>.{norm1,attn.qkv,attn.proj,norm2,mlp.fc1,mlp.fc2}.{weight,bias},
/// norm.{weight,bias}. Linear weights are stored input-major (in x out).
class ViTEncoder {
 public:
  /// Fresh encoder: linear weights and positional embeddings ~ N(0, 0.02),
  /// zero class token and biases, LN gamma = 1 and beta = 0.
  ViTEncoder(const ViTConfig& config, std::uint64_t seed);

  /// Encoder holding `params`, which must match the config exactly.
  ViTEncoder(const ViTConfig& config, ParameterSet params);

  const ViTConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  bool frozen() const { return params_.frozen(); }
  void freeze() { params_.set_frozen(true); }

  /// Token embedding only: row 0 = cls + pos_0, row n = patch_n W + b + pos_n.
  Var embed(Tape& tape, const Tensor& image);
  /// Full encoder on the tape. Frozen encoders enter as constants.
  Var forward(Tape& tape, const Tensor& image);

  Tensor embed(const Tensor& image) const;
  TokenSequence encode(const Tensor& image) const;

 private:
  Var forward_impl(Tape& tape, const Tensor& image, bool embed_only, bool trainable) const;

  ViTConfig config_;
  ParameterSet params_;
};

/// Ordered (name, shape, decays) list describing every parameter of a config.
struct ParameterSpec {
  std::string name;
  Shape shape;
  bool decay;
};
std::vector<ParameterSpec> parameter_layout(const ViTConfig& config);

}  // namespace dmt
