#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "wsss/cf_bilstm.hpp"
#include "wsss/class_token.hpp"
#include "wsss/config.hpp"
#include "wsss/head.hpp"
#include "wsss/vit.hpp"

namespace wsss {

// Encoder, class tokens, contextual fusion and patch scorer wired together.
class Model {
 public:
  static Model init(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamList parameters() const;

  // Raw stream logits for a batch: [n*C x s], row b*C + c scores class c
  // of image b. Images must be square and divisible by the patch size; a
  // size other than the training one resamples the positional table.
  Tensor stream_logits(const std::vector<Tensor>& images) const;

  // Pooled image-level scores [n*C] from stream logits.
  Tensor image_scores(const Tensor& logits) const;

  // Z [s x C] for a single image.
  Tensor patch_scores(const Tensor& image, ScoreMode mode) const;

  // Multi-label loss for a batch; labels is [n*C] of 0/1.
  Tensor loss(const std::vector<Tensor>& images, const Tensor& labels,
              Tensor* image_scores_out = nullptr) const;

 private:
  ModelConfig cfg_;
  ViTParams vit_;
  ClassTokenBank tokens_;
  CfBiLstmParams fusion_;
  ClassifierWeights head_;
};

}  // namespace wsss
