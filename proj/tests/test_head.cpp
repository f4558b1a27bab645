#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "wsss/error.hpp"
#include "wsss/gradcheck.hpp"
#include "wsss/head.hpp"
#include "wsss/ops.hpp"
#include "wsss/rng.hpp"

using namespace wsss;

namespace {

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Full sort of each column, then the mean of the first k.
std::vector<double> sort_oracle(const Tensor& z, std::size_t k) {
  std::vector<double> out;
  for (std::size_t c = 0; c < z.dim(1); ++c) {
    // Rank by value (ties to the lower index), then sum the winners in
    // index order so the rounding matches exactly.
    std::vector<std::pair<double, std::size_t>> col;
    for (std::size_t i = 0; i < z.dim(0); ++i) col.emplace_back(-z.at(i, c), i);
    std::sort(col.begin(), col.end());
    std::vector<std::size_t> winners;
    for (std::size_t i = 0; i < k; ++i) winners.push_back(col[i].second);
    std::sort(winners.begin(), winners.end());
    double s = 0;
    for (std::size_t i : winners) s += z.at(i, c);
    out.push_back(s / static_cast<double>(k));
  }
  return out;
}

FusedFeatures fused(const Tensor& f) { return {f, f.dim(0), f.dim(1), f.dim(2)}; }

}  // namespace

TEST(PatchClassify, ZeroWeightsScoreOneHalf) {
  Rng rng(1);
  ClassifierWeights w{Tensor::zeros({5, 1}), Tensor::zeros({1})};
  const Tensor z = patch_classify(fused(rng.normal_tensor({3, 4, 5}, 1.0)), w, ScoreMode::kSigmoid);
  EXPECT_EQ(z.shape(), (Shape{4, 3}));
  for (double v : z.values()) EXPECT_EQ(v, 0.5);
}

TEST(PatchClassify, SoftmaxOfEqualLogitsIsUniform) {
  ClassifierWeights w{Tensor::full({2, 1}, 0.3), Tensor::from({1}, {0.1})};
  const Tensor f = Tensor::full({4, 3, 2}, 0.7);
  const Tensor z = patch_classify(fused(f), w, ScoreMode::kSoftmax);
  for (double v : z.values()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(PatchClassify, MatchesPerStreamDotProducts) {
  Rng rng(2);
  const std::size_t c = 3, s = 5, width = 4;
  ClassifierWeights w{rng.normal_tensor({width, 1}, 1.0), rng.normal_tensor({1}, 1.0)};
  const Tensor f = rng.normal_tensor({c, s, width}, 1.0);
  const Tensor sig = patch_classify(fused(f), w, ScoreMode::kSigmoid);
  const Tensor soft = patch_classify(fused(f), w, ScoreMode::kSoftmax);
  for (std::size_t i = 0; i < s; ++i) {
    std::vector<double> logit(c);
    double z = 0;
    for (std::size_t k = 0; k < c; ++k) {
      logit[k] = w.b.at(0);
      for (std::size_t j = 0; j < width; ++j) logit[k] += f.at((k * s + i) * width + j) * w.w.at(j);
      z += std::exp(logit[k]);
      EXPECT_NEAR(sig.at(i, k), 1.0 / (1.0 + std::exp(-logit[k])), 1e-14);
    }
    double row = 0;
    for (std::size_t k = 0; k < c; ++k) {
      EXPECT_NEAR(soft.at(i, k), std::exp(logit[k]) / z, 1e-14);
      row += soft.at(i, k);
    }
    EXPECT_NEAR(row, 1.0, 1e-9);
  }
}

TEST(PatchClassify, SoftmaxArgmaxIgnoresPerPatchShifts) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor logits = rng.normal_tensor({6, 4}, 2.0, false);
    std::vector<double> shifted(logits.values().begin(), logits.values().end());
    for (std::size_t i = 0; i < 6; ++i) {
      const double k = rng.uniform(-100, 100);
      for (std::size_t c = 0; c < 4; ++c) shifted[i * 4 + c] += k;
    }
    const Tensor a = score(logits, ScoreMode::kSoftmax);
    const Tensor b = score(Tensor::from({6, 4}, shifted), ScoreMode::kSoftmax);
    for (std::size_t i = 0; i < 6; ++i) {
      std::size_t ba = 0, bb = 0;
      for (std::size_t c = 1; c < 4; ++c) {
        if (a.at(i, c) > a.at(i, ba)) ba = c;
        if (b.at(i, c) > b.at(i, bb)) bb = c;
      }
      EXPECT_EQ(ba, bb);
    }
  }
}

TEST(TopK, HandColumn) {
  const Tensor z = Tensor::from({5, 1}, {0.9, 0.1, 0.8, 0.7, 0.2});
  EXPECT_NEAR(topk_pool(z, 4).item(), 0.65, 1e-15);
}

TEST(TopK, IdentitiesHoldBitForBit) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t s = 1 + rng.uniform_int(0, 15);
    const Tensor z = rng.normal_tensor({s, 3}, 1.0, false);
    EXPECT_EQ(to_vec(topk_pool(z, 1)), to_vec(max_pool(z)));
    EXPECT_EQ(to_vec(topk_pool(z, s)), to_vec(avg_pool(z)));
  }
}

TEST(TopK, MatchesFullSortOracle) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t s = 1 + rng.uniform_int(0, 11);
    const Tensor z = rng.normal_tensor({s, 2}, 1.0, false);
    for (std::size_t k = 1; k <= s; ++k) EXPECT_EQ(to_vec(topk_pool(z, k)), sort_oracle(z, k));
  }
}

TEST(TopK, RangeAndGradientContract) {
  const Tensor bad = Tensor::zeros({3, 2});
  EXPECT_THROW(topk_pool(bad, 0), ContractError);
  EXPECT_THROW(topk_pool(bad, 4), ContractError);
  Tensor z = Tensor::from({5, 1}, {0.9, 0.1, 0.8, 0.7, 0.2}, true);
  backward(sum(topk_pool(z, 2)));
  EXPECT_EQ(z.grad(), (std::vector<double>{0.5, 0, 0.5, 0, 0}));
}

TEST(TopK, TiesGoToTheLowerIndex) {
  Tensor z = Tensor::from({4, 1}, {0.3, 0.7, 0.7, 0.7}, true);
  backward(sum(topk_pool(z, 2)));
  EXPECT_EQ(z.grad(), (std::vector<double>{0, 0.5, 0.5, 0}));
  Tensor m = Tensor::from({3, 1}, {0.4, 0.4, 0.1}, true);
  backward(sum(max_pool(m)));
  EXPECT_EQ(m.grad(), (std::vector<double>{1, 0, 0}));
}

TEST(Pooling, AverageAndMaxHandValues) {
  const Tensor c = Tensor::full({4, 1}, 0.4);
  EXPECT_NEAR(avg_pool(c).item(), 0.4, 1e-16);
  EXPECT_EQ(max_pool(c).item(), 0.4);
  const Tensor z = Tensor::from({2, 1}, {0.2, 0.8});
  EXPECT_EQ(avg_pool(z).item(), 0.5);
  EXPECT_EQ(max_pool(z).item(), 0.8);
}

TEST(Pooling, MaxGradientMatchesFiniteDifferencesAwayFromTies) {
  Tensor z = Tensor::from({4, 2}, {0.1, 0.9, 0.5, 0.2, 0.3, 0.4, 0.8, 0.05}, true);
  backward(sum(max_pool(z)));
  EXPECT_EQ(z.grad(), (std::vector<double>{0, 1, 0, 0, 0, 0, 1, 0}));
  EXPECT_TRUE(gradcheck([](const Tensor& x) { return sum(max_pool(x)); }, z).passed);
}

TEST(Pooling, ParsesNames) {
  EXPECT_EQ(parse_pooling("topk"), Pooling::kTopK);
  EXPECT_EQ(parse_pooling("avg"), Pooling::kAverage);
  EXPECT_EQ(parse_pooling("max"), Pooling::kMax);
  EXPECT_THROW(parse_pooling("median"), ConfigError);
  EXPECT_THROW(parse_score_mode("relu"), ConfigError);
}

TEST(MceLoss, HandValues) {
  const Tensor y = Tensor::from({3}, {1, 0, 1});
  EXPECT_EQ(mce_loss(y, y).item(), 0.0);
  EXPECT_NEAR(mce_loss(Tensor::from({1}, {0.5}), Tensor::from({1}, {1})).item(), 0.693147, 1e-6);
  for (const Tensor& lab : {y, Tensor::from({3}, {0, 0, 0}), Tensor::from({3}, {1, 1, 0})}) {
    EXPECT_NEAR(mce_loss(Tensor::full({3}, 0.5), lab).item(), std::log(2.0), 1e-15);
  }
  EXPECT_THROW(mce_loss(Tensor::full({3}, 0.5), Tensor::full({2}, 1.0)), ShapeError);
}

TEST(MceLoss, StaysFiniteAtSaturationAndIsNonNegative) {
  const double l = mce_loss(Tensor::from({2}, {0.0, 1.0}), Tensor::from({2}, {1, 0})).item();
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, -std::log(1e-12), 1e-6);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> p(4), y(4);
    for (std::size_t c = 0; c < 4; ++c) {
      p[c] = rng.uniform();
      y[c] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    EXPECT_GE(mce_loss(Tensor::from({4}, p), Tensor::from({4}, y)).item(), 0.0);
  }
}

TEST(MceLoss, ConvexInScores) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(3), b(3), m(3), y(3);
    for (std::size_t c = 0; c < 3; ++c) {
      a[c] = rng.uniform(0.01, 0.99);
      b[c] = rng.uniform(0.01, 0.99);
      m[c] = 0.5 * (a[c] + b[c]);
      y[c] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    const Tensor yt = Tensor::from({3}, y);
    const double la = mce_loss(Tensor::from({3}, a), yt).item();
    const double lb = mce_loss(Tensor::from({3}, b), yt).item();
    const double lm = mce_loss(Tensor::from({3}, m), yt).item();
    EXPECT_LE(lm, 0.5 * (la + lb) + 1e-12);
  }
}
