#pragma once

#include <cstddef>
#include <string>

#include "wsss/cf_bilstm.hpp"
#include "wsss/rng.hpp"
#include "wsss/tensor.hpp"

namespace wsss {

// Sigmoid scores each class stream independently (training); softmax
// compares classes per patch (cross-class mask emission).
enum class ScoreMode { kSigmoid, kSoftmax };
enum class Pooling { kTopK, kAverage, kMax };

ScoreMode parse_score_mode(const std::string& name);
Pooling parse_pooling(const std::string& name);
std::string to_string(Pooling pooling);
std::string to_string(ScoreMode mode);

// A single scalar scorer shared by every class stream.
struct ClassifierWeights {
  Tensor w;  // [width x 1]
  Tensor b;  // [1]

  static ClassifierWeights init(std::size_t width, Rng& rng);
  void collect(ParamList& out, const std::string& prefix = "head") const;
};

// Raw per-row logits of stacked stream features [m x width] -> [m x 1].
Tensor stream_logits(const Tensor& features, const ClassifierWeights& weights);

// Logits [s x C] to scores Z [s x C].
Tensor score(const Tensor& logits, ScoreMode mode);

// Z [s x C]; Z[i, c] scores stream c at patch i.
Tensor patch_classify(const FusedFeatures& fused, const ClassifierWeights& weights,
                      ScoreMode mode);

// Pooling over patches (axis 0) of Z [s x C] -> [C]. Selection ties go to
// the lower patch index, and selected entries are summed in index order,
// so topk_pool(Z, 1) == max_pool(Z) and topk_pool(Z, s) == avg_pool(Z)
// hold bit for bit.
Tensor topk_pool(const Tensor& z, std::size_t k);
Tensor avg_pool(const Tensor& z);
Tensor max_pool(const Tensor& z);
Tensor pool(const Tensor& z, Pooling pooling, std::size_t k);

// Mean over classes of binary cross-entropy between pooled scores and labels.
Tensor mce_loss(const Tensor& p, const Tensor& y);

}  // namespace wsss
