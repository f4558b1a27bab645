#include "wsss/vit.hpp"

#include <algorithm>
#include <cmath>

#include "wsss/error.hpp"
#include "wsss/ops.hpp"

namespace wsss {

namespace {

constexpr double kInitStd = 0.02;

Tensor zeros_param(std::size_t n) { return Tensor::zeros({n}, true); }
Tensor ones_param(std::size_t n) { return Tensor::full({n}, 1.0, true); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_row(matmul(x, w), b);
}

}  // namespace

void ViTConfig::validate() const {
  if (patch_size == 0 || image_size == 0) {
    throw ConfigError("image_size and patch_size must be positive");
  }
  if (image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) +
                      " is not divisible by patch_size " + std::to_string(patch_size));
  }
  if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) +
                      " must be a positive multiple of num_heads " +
                      std::to_string(num_heads));
  }
  if (mlp_ratio == 0) throw ConfigError("mlp_ratio must be positive");
  if (dropout_rate != 0.0) {
    throw ConfigError("dropout_rate must be 0: training is kept deterministic");
  }
}

AttentionParams AttentionParams::init(std::size_t e, std::size_t heads, Rng& rng) {
  AttentionParams p;
  p.w_q = rng.normal_tensor({e, e}, kInitStd);
  p.w_k = rng.normal_tensor({e, e}, kInitStd);
  p.w_v = rng.normal_tensor({e, e}, kInitStd);
  p.b_q = zeros_param(e);
  p.b_k = zeros_param(e);
  p.b_v = zeros_param(e);
  p.w_out = rng.normal_tensor({e, e}, kInitStd);
  p.b_out = zeros_param(e);
  p.num_heads = heads;
  return p;
}

void AttentionParams::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w_q", w_q);
  out.emplace_back(prefix + ".b_q", b_q);
  out.emplace_back(prefix + ".w_k", w_k);
  out.emplace_back(prefix + ".b_k", b_k);
  out.emplace_back(prefix + ".w_v", w_v);
  out.emplace_back(prefix + ".b_v", b_v);
  out.emplace_back(prefix + ".w_out", w_out);
  out.emplace_back(prefix + ".b_out", b_out);
}

BlockParams BlockParams::init(const ViTConfig& cfg, Rng& rng) {
  const std::size_t e = cfg.embed_dim, hidden = cfg.mlp_ratio * cfg.embed_dim;
  BlockParams b;
  b.ln1_gamma = ones_param(e);
  b.ln1_beta = zeros_param(e);
  b.attention = AttentionParams::init(e, cfg.num_heads, rng);
  b.ln2_gamma = ones_param(e);
  b.ln2_beta = zeros_param(e);
  b.w_mlp1 = rng.normal_tensor({e, hidden}, kInitStd);
  b.b_mlp1 = zeros_param(hidden);
  b.w_mlp2 = rng.normal_tensor({hidden, e}, kInitStd);
  b.b_mlp2 = zeros_param(e);
  return b;
}

void BlockParams::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".ln1.gamma", ln1_gamma);
  out.emplace_back(prefix + ".ln1.beta", ln1_beta);
  attention.collect(out, prefix + ".attn");
  out.emplace_back(prefix + ".ln2.gamma", ln2_gamma);
  out.emplace_back(prefix + ".ln2.beta", ln2_beta);
  out.emplace_back(prefix + ".mlp.w1", w_mlp1);
  out.emplace_back(prefix + ".mlp.b1", b_mlp1);
  out.emplace_back(prefix + ".mlp.w2", w_mlp2);
  out.emplace_back(prefix + ".mlp.b2", b_mlp2);
}

ViTParams ViTParams::init(const ViTConfig& cfg, Rng& rng) {
  cfg.validate();
  ViTParams p;
  p.w_embed = rng.normal_tensor({cfg.patch_dim(), cfg.embed_dim}, kInitStd);
  p.pos_embed = rng.normal_tensor({cfg.num_patches(), cfg.embed_dim}, kInitStd);
  for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
    p.blocks.push_back(BlockParams::init(cfg, rng));
  }
  return p;
}

void ViTParams::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w_embed", w_embed);
  out.emplace_back(prefix + ".pos_embed", pos_embed);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect(out, prefix + ".block" + std::to_string(i));
  }
}

Tensor patchify(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ShapeError("patchify: expected [H x W x 3] image, got " +
                     shape_str(image.shape()));
  }
  const std::size_t h = image.dim(0), w = image.dim(1), p = patch_size;
  if (p == 0 || h % p != 0 || w % p != 0) {
    throw ShapeError("patchify: image " + std::to_string(h) + "x" +
                     std::to_string(w) + " is not divisible by patch size " +
                     std::to_string(p));
  }
  const std::size_t gr = h / p, gc = w / p, pd = p * p * 3;
  std::vector<std::size_t> idx;
  idx.reserve(gr * gc * pd);
  for (std::size_t pr = 0; pr < gr; ++pr)
    for (std::size_t pc = 0; pc < gc; ++pc)
      for (std::size_t dy = 0; dy < p; ++dy)
        for (std::size_t dx = 0; dx < p; ++dx)
          for (std::size_t c = 0; c < 3; ++c)
            idx.push_back(((pr * p + dy) * w + pc * p + dx) * 3 + c);
  return take(image, idx, {gr * gc, pd});
}

TokenSequence embed(const Tensor& patches, const Tensor& w_embed,
                    const Tensor& pos_embed, std::size_t rows, std::size_t cols) {
  if (patches.rank() != 2 || patches.dim(0) != rows * cols) {
    throw ShapeError("embed: patches " + shape_str(patches.shape()) +
                     " do not match a " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " grid");
  }
  const Tensor projected = matmul(patches, w_embed);
  if (pos_embed.shape() != projected.shape()) {
    throw ShapeError("embed: pos_embed " + shape_str(pos_embed.shape()) +
                     " does not match tokens " + shape_str(projected.shape()));
  }
  return {add(projected, pos_embed), rows, cols};
}

AttentionOutput self_attention(const Tensor& x, const AttentionParams& params,
                               std::size_t sequences, bool keep_weights) {
  if (x.rank() != 2 || sequences == 0 || x.dim(0) % sequences != 0) {
    throw ShapeError("self_attention: input " + shape_str(x.shape()) +
                     " cannot be split into " + std::to_string(sequences) +
                     " sequences");
  }
  const std::size_t e = x.dim(1), heads = params.num_heads;
  if (heads == 0 || e % heads != 0) {
    throw ShapeError("self_attention: embed dim not divisible by head count");
  }
  const std::size_t s = x.dim(0) / sequences, dh = e / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));

  const Tensor q = linear(x, params.w_q, params.b_q);
  const Tensor k = linear(x, params.w_k, params.b_k);
  const Tensor v = linear(x, params.w_v, params.b_v);

  AttentionOutput result;
  std::vector<Tensor> per_sequence;
  per_sequence.reserve(sequences);
  for (std::size_t n = 0; n < sequences; ++n) {
    const Tensor qn = sequences == 1 ? q : slice(q, 0, n * s, s);
    const Tensor kn = sequences == 1 ? k : slice(k, 0, n * s, s);
    const Tensor vn = sequences == 1 ? v : slice(v, 0, n * s, s);
    std::vector<Tensor> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor qh = heads == 1 ? qn : slice(qn, 1, h * dh, dh);
      const Tensor kh = heads == 1 ? kn : slice(kn, 1, h * dh, dh);
      const Tensor vh = heads == 1 ? vn : slice(vn, 1, h * dh, dh);
      const Tensor weights =
          softmax(scale(matmul(qh, transpose(kh)), scale_factor), 1);
      if (keep_weights) result.weights.push_back(weights);
      head_out.push_back(matmul(weights, vh));
    }
    per_sequence.push_back(heads == 1 ? head_out.front() : concat(head_out, 1));
  }
  const Tensor merged = sequences == 1 ? per_sequence.front() : concat(per_sequence, 0);
  result.output = linear(merged, params.w_out, params.b_out);
  return result;
}

Tensor transformer_block(const Tensor& x, const BlockParams& params,
                         std::size_t sequences) {
  const Tensor attended =
      self_attention(layer_norm(x, params.ln1_gamma, params.ln1_beta),
                     params.attention, sequences)
          .output;
  const Tensor mid = add(x, attended);
  const Tensor hidden =
      gelu(linear(layer_norm(mid, params.ln2_gamma, params.ln2_beta),
                  params.w_mlp1, params.b_mlp1));
  return add(mid, linear(hidden, params.w_mlp2, params.b_mlp2));
}

TokenSequence encode(const Tensor& image, const ViTConfig& cfg,
                     const ViTParams& params) {
  const std::size_t rows = image.dim(0) / cfg.patch_size;
  const std::size_t cols = image.dim(1) / cfg.patch_size;
  TokenSequence seq = embed(patchify(image, cfg.patch_size), params.w_embed,
                            params.pos_embed, rows, cols);
  for (const BlockParams& block : params.blocks) {
    seq.tokens = transformer_block(seq.tokens, block);
  }
  return seq;
}

Tensor encode_batch(const std::vector<Tensor>& images, const ViTConfig& cfg,
                    const ViTParams& params) {
  if (images.empty()) throw ContractError("encode_batch: empty batch");
  if (images.size() == 1) return encode(images.front(), cfg, params).tokens;
  std::vector<Tensor> patches, pos;
  for (const Tensor& img : images) {
    patches.push_back(patchify(img, cfg.patch_size));
    pos.push_back(params.pos_embed);
  }
  Tensor x = add(matmul(concat(patches, 0), params.w_embed), concat(pos, 0));
  for (const BlockParams& block : params.blocks) {
    x = transformer_block(x, block, images.size());
  }
  return x;
}

Tensor resize_pos_embed(const Tensor& pos_embed, std::size_t from_side,
                        std::size_t to_side) {
  if (from_side * from_side != pos_embed.dim(0)) {
    throw ShapeError("resize_pos_embed: table does not hold a square grid");
  }
  if (from_side == to_side) return pos_embed;
  const std::size_t e = pos_embed.dim(1);
  const auto src = pos_embed.values();
  std::vector<double> out(to_side * to_side * e);
  const double ratio = static_cast<double>(from_side) / static_cast<double>(to_side);
  auto coord = [&](std::size_t i, std::size_t& i0, std::size_t& i1, double& t) {
    double c = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    c = std::clamp(c, 0.0, static_cast<double>(from_side - 1));
    i0 = static_cast<std::size_t>(std::floor(c));
    i1 = std::min(i0 + 1, from_side - 1);
    t = c - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < to_side; ++y) {
    std::size_t y0, y1;
    double ty;
    coord(y, y0, y1, ty);
    for (std::size_t x = 0; x < to_side; ++x) {
      std::size_t x0, x1;
      double tx;
      coord(x, x0, x1, tx);
      for (std::size_t c = 0; c < e; ++c) {
        const double top = src[(y0 * from_side + x0) * e + c] * (1 - tx) +
                           src[(y0 * from_side + x1) * e + c] * tx;
        const double bottom = src[(y1 * from_side + x0) * e + c] * (1 - tx) +
                              src[(y1 * from_side + x1) * e + c] * tx;
        out[(y * to_side + x) * e + c] = top * (1 - ty) + bottom * ty;
      }
    }
  }
  return Tensor::from({to_side * to_side, e}, std::move(out));
}

Tensor attention_kernel(const Tensor& q, const Tensor& k, const Tensor& v) {
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  return matmul(softmax(scale(matmul(q, transpose(k)), scale_factor), 1), v);
}

}  // namespace wsss
