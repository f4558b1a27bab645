#include <gtest/gtest.h>

#include <vector>

#include "wsss/class_token.hpp"
#include "wsss/gradcheck.hpp"
#include "wsss/model.hpp"
#include "wsss/ops.hpp"
#include "wsss/rng.hpp"

using namespace wsss;

namespace {

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

TokenSequence seq_of(const Tensor& t, std::size_t rows, std::size_t cols) { return {t, rows, cols}; }

}  // namespace

TEST(Condition, DegenerateTokenLeavesPatchesUntouched) {
  Rng rng(1);
  const Tensor p = rng.normal_tensor({4, 3}, 1.0, false);
  const ConditionedFeatures f = condition(seq_of(p, 2, 2), ClassTokenBank::passthrough(1));
  EXPECT_EQ(f.features.shape(), (Shape{1, 4, 3}));
  EXPECT_EQ(to_vec(f.features), to_vec(p));
}

TEST(Condition, HandCopySemantics) {
  ClassTokenBank bank;
  bank.tokens = Tensor::from({2, 1}, {9, 7}, true);
  bank.num_classes = 2;
  bank.dim = 1;
  const Tensor p = Tensor::from({2, 2}, {1, 2, 3, 4});
  const ConditionedFeatures f = condition(seq_of(p, 1, 2), bank);
  EXPECT_EQ(f.features.shape(), (Shape{2, 2, 3}));
  EXPECT_EQ(to_vec(f.features), (std::vector<double>{1, 2, 9, 3, 4, 9, 1, 2, 7, 3, 4, 7}));
}

TEST(Condition, TokenGradientCountsItsCopies) {
  Rng rng(2);
  ClassTokenBank bank = ClassTokenBank::init(3, 2, rng);
  const Tensor p = rng.normal_tensor({6, 4}, 1.0);
  backward(sum(condition(seq_of(p, 2, 3), bank).features));
  for (double g : bank.tokens.grad()) EXPECT_EQ(g, 6.0);
  // Each patch is copied once per class.
  for (double g : p.grad()) EXPECT_EQ(g, 3.0);
}

TEST(Condition, CopyInvariantsHoldBySlicing) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::size_t s = 5, e = 4, h = 3, c = 3;
    const ClassTokenBank bank = ClassTokenBank::init(c, h, rng);
    const Tensor p = rng.normal_tensor({s, e}, 1.0);
    const Tensor f = condition(seq_of(p, 1, s), bank).features;
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < e; ++j) EXPECT_EQ(f.at((k * s + i) * (e + h) + j), p.at(i, j));
        for (std::size_t j = 0; j < h; ++j)
          EXPECT_EQ(f.at((k * s + i) * (e + h) + e + j), bank.tokens.at(k, j));
      }
  }
}

TEST(Condition, TokenGradientIsTheSumOfSlotGradients) {
  Rng rng(3);
  const std::size_t s = 4, e = 3, h = 2, c = 2;
  ClassTokenBank bank = ClassTokenBank::init(c, h, rng);
  const Tensor p = rng.normal_tensor({s, e}, 1.0);
  const Tensor w = rng.normal_tensor({c, s, e + h}, 1.0, false);
  auto loss = [&] { return sum(mul(condition(seq_of(p, 2, 2), bank).features, w)); };
  backward(loss());
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t j = 0; j < h; ++j) {
      double expected = 0;
      for (std::size_t i = 0; i < s; ++i) expected += w.at((k * s + i) * (e + h) + e + j);
      EXPECT_NEAR(bank.tokens.grad()[k * h + j], expected, 1e-12);
    }
  EXPECT_TRUE(gradcheck(loss, {bank.tokens, p}).passed);
}

TEST(Condition, ClassStreamsAreIndependentInTheFullModel) {
  ModelConfig cfg;
  cfg.vit.image_size = 16;
  cfg.num_classes = 3;
  const Model model = Model::init(cfg, 4);
  Rng rng(5);
  std::vector<double> v(16 * 16 * 3);
  for (double& x : v) x = rng.uniform();
  const Tensor img = Tensor::from({16, 16, 3}, v);
  const Tensor before = model.stream_logits({img});
  Tensor tokens;
  for (const auto& [name, t] : model.parameters())
    if (name == "class_tokens") tokens = t;
  ASSERT_TRUE(tokens.defined());
  // Perturb class 2's token only.
  for (std::size_t j = 0; j < cfg.token_dim; ++j) tokens.mutable_values()[2 * cfg.token_dim + j] += 0.5;
  const Tensor after = model.stream_logits({img});
  const std::size_t s = before.dim(1);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < s; ++i) EXPECT_EQ(before.at(c, i), after.at(c, i));
  bool changed = false;
  for (std::size_t i = 0; i < s; ++i) changed = changed || before.at(2, i) != after.at(2, i);
  EXPECT_TRUE(changed);
}
