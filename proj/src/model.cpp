#include "wsss/model.hpp"

#include "wsss/error.hpp"
#include "wsss/ops.hpp"
#include "wsss/rng.hpp"

namespace wsss {

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Model m;
  m.cfg_ = cfg;
  m.vit_ = ViTParams::init(cfg.vit, rng);
  m.tokens_ = cfg.use_class_token
                  ? ClassTokenBank::init(cfg.num_classes, cfg.token_dim, rng)
                  : ClassTokenBank::passthrough(cfg.num_classes);
  if (cfg.use_context_fusion) {
    m.fusion_ = CfBiLstmParams::init(cfg.stream_width(), cfg.lstm_hidden(), rng);
  }
  m.head_ = ClassifierWeights::init(cfg.stream_width(), rng);
  return m;
}

ParamList Model::parameters() const {
  ParamList out;
  vit_.collect(out);
  tokens_.collect(out);
  if (cfg_.use_context_fusion) fusion_.collect(out);
  head_.collect(out);
  return out;
}

Tensor Model::stream_logits(const std::vector<Tensor>& images) const {
  if (images.empty()) throw ContractError("stream_logits: empty batch");
  const std::size_t size = images.front().dim(0);
  for (const Tensor& img : images) {
    if (img.rank() != 3 || img.dim(0) != size || img.dim(1) != size) {
      throw ShapeError("model input must be square images of one size, got " +
                       shape_str(img.shape()));
    }
  }
  if (size % cfg_.vit.patch_size != 0) {
    throw ShapeError("image size " + std::to_string(size) +
                     " is not divisible by patch size " +
                     std::to_string(cfg_.vit.patch_size));
  }
  const std::size_t side = size / cfg_.vit.patch_size, s = side * side;
  const std::size_t n = images.size(), classes = cfg_.num_classes;

  Tensor tokens;
  if (side == cfg_.vit.grid_side()) {
    tokens = encode_batch(images, cfg_.vit, vit_);
  } else {
    ViTParams resized = vit_;
    resized.pos_embed = resize_pos_embed(vit_.pos_embed, cfg_.vit.grid_side(), side);
    ViTConfig vcfg = cfg_.vit;
    vcfg.image_size = size;
    tokens = encode_batch(images, vcfg, resized);
  }
  Tensor features = condition_batch(tokens, n, tokens_);
  if (cfg_.use_context_fusion) {
    features = contextual_fusion_batch(features, n * classes, side, side, fusion_);
  }
  return reshape(wsss::stream_logits(features, head_), {n * classes, s});
}

Tensor Model::image_scores(const Tensor& logits) const {
  return pool(sigmoid(transpose(logits)), cfg_.pooling, cfg_.topk);
}

Tensor Model::patch_scores(const Tensor& image, ScoreMode mode) const {
  return score(transpose(stream_logits({image})), mode);
}

Tensor Model::loss(const std::vector<Tensor>& images, const Tensor& labels,
                   Tensor* image_scores_out) const {
  const Tensor p = image_scores(stream_logits(images));
  if (image_scores_out) *image_scores_out = p;
  return mce_loss(p, labels);
}

}  // namespace wsss
