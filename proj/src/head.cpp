#include "wsss/head.hpp"

#include <algorithm>
#include <numeric>

#include "wsss/error.hpp"
#include "wsss/ops.hpp"

namespace wsss {

ScoreMode parse_score_mode(const std::string& name) {
  if (name == "sigmoid") return ScoreMode::kSigmoid;
  if (name == "softmax") return ScoreMode::kSoftmax;
  throw ConfigError("unknown score mode '" + name + "' (expected sigmoid|softmax)");
}

Pooling parse_pooling(const std::string& name) {
  if (name == "topk") return Pooling::kTopK;
  if (name == "avg") return Pooling::kAverage;
  if (name == "max") return Pooling::kMax;
  throw ConfigError("unknown pooling '" + name + "' (expected topk|avg|max)");
}

std::string to_string(Pooling pooling) {
  switch (pooling) {
    case Pooling::kTopK: return "topk";
    case Pooling::kAverage: return "avg";
    case Pooling::kMax: return "max";
  }
  return "?";
}

std::string to_string(ScoreMode mode) {
  return mode == ScoreMode::kSigmoid ? "sigmoid" : "softmax";
}

ClassifierWeights ClassifierWeights::init(std::size_t width, Rng& rng) {
  ClassifierWeights w;
  w.w = rng.normal_tensor({width, 1}, 0.02);
  w.b = Tensor::zeros({1}, true);
  return w;
}

void ClassifierWeights::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

Tensor stream_logits(const Tensor& features, const ClassifierWeights& weights) {
  return add_row(matmul(features, weights.w), weights.b);
}

Tensor score(const Tensor& logits, ScoreMode mode) {
  if (logits.rank() != 2) throw ShapeError("score: logits must be [s x C]");
  return mode == ScoreMode::kSigmoid ? sigmoid(logits) : softmax(logits, 1);
}

Tensor patch_classify(const FusedFeatures& fused, const ClassifierWeights& weights,
                      ScoreMode mode) {
  const Tensor flat =
      reshape(fused.features, {fused.classes * fused.patches, fused.width});
  // Rows are (class, patch); transpose to patches x classes.
  const Tensor logits =
      transpose(reshape(stream_logits(flat, weights), {fused.classes, fused.patches}));
  return score(logits, mode);
}

Tensor topk_pool(const Tensor& z, std::size_t k) {
  if (z.rank() != 2) throw ShapeError("topk_pool: expected [s x C] scores");
  const std::size_t s = z.dim(0), classes = z.dim(1);
  if (k < 1 || k > s) {
    throw ContractError("topk_pool: k = " + std::to_string(k) + " outside [1, " +
                        std::to_string(s) + "]");
  }
  const auto zv = z.values();
  std::vector<std::size_t> flat;
  flat.reserve(classes * k);
  std::vector<std::size_t> idx(s);
  for (std::size_t c = 0; c < classes; ++c) {
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double va = zv[a * classes + c], vb = zv[b * classes + c];
                        return va > vb || (va == vb && a < b);
                      });
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t j = 0; j < k; ++j) flat.push_back(idx[j] * classes + c);
  }
  return mean_axis(take(z, flat, {classes, k}), 1);
}

Tensor avg_pool(const Tensor& z) {
  if (z.rank() != 2) throw ShapeError("avg_pool: expected [s x C] scores");
  return mean_axis(z, 0);
}

Tensor max_pool(const Tensor& z) { return topk_pool(z, 1); }

Tensor pool(const Tensor& z, Pooling pooling, std::size_t k) {
  switch (pooling) {
    case Pooling::kTopK: return topk_pool(z, k);
    case Pooling::kAverage: return avg_pool(z);
    case Pooling::kMax: return max_pool(z);
  }
  throw ContractError("unknown pooling");
}

Tensor mce_loss(const Tensor& p, const Tensor& y) {
  if (p.numel() != y.numel()) {
    throw ShapeError("mce_loss: " + std::to_string(p.numel()) + " scores vs " +
                     std::to_string(y.numel()) + " labels");
  }
  const Tensor pf = p.rank() == 1 ? p : reshape(p, {p.numel()});
  const Tensor yf = Tensor::from({y.numel()}, {y.values().begin(), y.values().end()});
  const Tensor not_y = add_scalar(scale(yf, -1.0), 1.0);
  // log() clamps at 1e-12, so saturated scores stay finite.
  const Tensor positive = mul(yf, log(pf));
  const Tensor negative = mul(not_y, log(add_scalar(scale(pf, -1.0), 1.0)));
  return scale(mean(add(positive, negative)), -1.0);
}

}  // namespace wsss
