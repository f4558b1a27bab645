#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "wsss/rng.hpp"
#include "wsss/tensor.hpp"

namespace wsss {

// Named view of a model's learnable tensors, in a stable order.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

struct ViTConfig {
  std::size_t image_size = 48;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 32;
  std::size_t num_heads = 2;
  std::size_t num_blocks = 2;
  std::size_t mlp_ratio = 4;
  double dropout_rate = 0.0;

  void validate() const;
  std::size_t grid_side() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid_side() * grid_side(); }
  std::size_t patch_dim() const { return patch_size * patch_size * 3; }
  std::size_t head_dim() const { return embed_dim / num_heads; }
};

// Patch embeddings in row-major raster order over a rows x cols grid.
struct TokenSequence {
  Tensor tokens;  // [s x e]
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

struct AttentionParams {
  // Head h owns columns [h*dh, (h+1)*dh) of the q/k/v projections.
  Tensor w_q, w_k, w_v;  // [e x e]
  Tensor b_q, b_k, b_v;  // [e]
  Tensor w_out;          // [e x e]
  Tensor b_out;          // [e]
  std::size_t num_heads = 1;

  static AttentionParams init(std::size_t embed_dim, std::size_t num_heads, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
};

struct BlockParams {
  Tensor ln1_gamma, ln1_beta;
  AttentionParams attention;
  Tensor ln2_gamma, ln2_beta;
  Tensor w_mlp1, b_mlp1;  // [e x r*e], [r*e]
  Tensor w_mlp2, b_mlp2;  // [r*e x e], [e]

  static BlockParams init(const ViTConfig& cfg, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
};

struct ViTParams {
  Tensor w_embed;    // [patch_dim x e]
  Tensor pos_embed;  // [s x e]
  std::vector<BlockParams> blocks;

  static ViTParams init(const ViTConfig& cfg, Rng& rng);
  void collect(ParamList& out, const std::string& prefix = "vit") const;
};

struct AttentionOutput {
  Tensor output;                 // [n*s x e]
  std::vector<Tensor> weights;   // one [s x s] matrix per (sequence, head)
};

// image: [H x W x 3] -> [s x (p*p*3)], patches in raster order, each flattened
// row-major over pixels with the three channels innermost.
Tensor patchify(const Tensor& image, std::size_t patch_size);

// tokens = patches . w_embed + pos_embed
TokenSequence embed(const Tensor& patches, const Tensor& w_embed,
                    const Tensor& pos_embed, std::size_t rows, std::size_t cols);

// Multi-head scaled dot-product self-attention applied independently to
// `sequences` stacked token blocks of equal length. Scale is 1/sqrt(e/heads).
AttentionOutput self_attention(const Tensor& x, const AttentionParams& params,
                               std::size_t sequences = 1,
                               bool keep_weights = false);

// Pre-norm block: x + MHSA(LN(x)), then + MLP(LN(.)) with a GELU hidden layer.
Tensor transformer_block(const Tensor& x, const BlockParams& params,
                         std::size_t sequences = 1);

TokenSequence encode(const Tensor& image, const ViTConfig& cfg,
                     const ViTParams& params);

// Encodes a batch of images in one graph; returns [n*s x e] with the tokens
// of image b in rows [b*s, (b+1)*s).
Tensor encode_batch(const std::vector<Tensor>& images, const ViTConfig& cfg,
                    const ViTParams& params);

// Bilinear resampling of a learned positional grid to a new grid side, used
// when inferring at a resolution other than the training one.
Tensor resize_pos_embed(const Tensor& pos_embed, std::size_t from_side,
                        std::size_t to_side);

// Plain single-head attention on raw matrices with no projections, for
// timing the quadratic reference path.
Tensor attention_kernel(const Tensor& q, const Tensor& k, const Tensor& v);

}  // namespace wsss
