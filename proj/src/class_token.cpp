#include "wsss/class_token.hpp"

#include "wsss/error.hpp"
#include "wsss/ops.hpp"

namespace wsss {

ClassTokenBank ClassTokenBank::init(std::size_t num_classes, std::size_t dim,
                                    Rng& rng) {
  if (num_classes == 0) throw ConfigError("class token bank needs at least one class");
  if (dim == 0) return passthrough(num_classes);
  ClassTokenBank bank;
  bank.tokens = rng.normal_tensor({num_classes, dim}, 0.02);
  bank.num_classes = num_classes;
  bank.dim = dim;
  return bank;
}

ClassTokenBank ClassTokenBank::passthrough(std::size_t num_classes) {
  ClassTokenBank bank;
  bank.num_classes = num_classes;
  return bank;
}

void ClassTokenBank::collect(ParamList& out, const std::string& prefix) const {
  if (dim > 0) out.emplace_back(prefix, tokens);
}

Tensor condition_batch(const Tensor& tokens, std::size_t images,
                       const ClassTokenBank& bank) {
  if (tokens.rank() != 2 || images == 0 || tokens.dim(0) % images != 0) {
    throw ShapeError("condition: tokens " + shape_str(tokens.shape()) +
                     " do not split into " + std::to_string(images) + " images");
  }
  if (bank.dim > 0 && (bank.tokens.rank() != 2 ||
                       bank.tokens.dim(0) != bank.num_classes ||
                       bank.tokens.dim(1) != bank.dim)) {
    throw ShapeError("condition: token bank shape " + shape_str(bank.tokens.shape()));
  }
  const std::size_t s = tokens.dim(0) / images, classes = bank.num_classes;
  std::vector<std::size_t> patch_rows, token_rows;
  patch_rows.reserve(images * classes * s);
  token_rows.reserve(images * classes * s);
  for (std::size_t b = 0; b < images; ++b)
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t i = 0; i < s; ++i) {
        patch_rows.push_back(b * s + i);
        token_rows.push_back(c);
      }
  const Tensor replicated = gather_rows(tokens, patch_rows);
  if (bank.dim == 0) return replicated;
  return concat({replicated, gather_rows(bank.tokens, token_rows)}, 1);
}

ConditionedFeatures condition(const TokenSequence& patches,
                              const ClassTokenBank& bank) {
  const Tensor flat = condition_batch(patches.tokens, 1, bank);
  ConditionedFeatures out;
  out.classes = bank.num_classes;
  out.patches = patches.tokens.dim(0);
  out.width = flat.dim(1);
  out.features = reshape(flat, {out.classes, out.patches, out.width});
  return out;
}

}  // namespace wsss
