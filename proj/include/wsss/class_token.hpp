#pragma once

#include <cstddef>
#include <string>

#include "wsss/rng.hpp"
#include "wsss/tensor.hpp"
#include "wsss/vit.hpp"

namespace wsss {

// Learnable per-class tokens T: [C x H]. A bank with dim == 0 carries no
// tensor and conditions by plain replication (the token-free ablation).
struct ClassTokenBank {
  Tensor tokens;
  std::size_t num_classes = 0;
  std::size_t dim = 0;

  static ClassTokenBank init(std::size_t num_classes, std::size_t dim, Rng& rng);
  static ClassTokenBank passthrough(std::size_t num_classes);
  void collect(ParamList& out, const std::string& prefix = "class_tokens") const;
};

// F_in: [C x s x (e+H)]; slot [c, i, 0:e] is patch i, [c, i, e:] is token c.
struct ConditionedFeatures {
  Tensor features;
  std::size_t classes = 0;
  std::size_t patches = 0;
  std::size_t width = 0;
};

// Every patch is paired with every class token, giving C parallel streams.
ConditionedFeatures condition(const TokenSequence& patches,
                              const ClassTokenBank& bank);

// Batched form over n images stacked as [n*s x e]. Output rows are ordered
// (image, class, patch): [n*C*s x (e+H)].
Tensor condition_batch(const Tensor& tokens, std::size_t images,
                       const ClassTokenBank& bank);

}  // namespace wsss
