#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "wsss/diagnostics.hpp"
#include "wsss/error.hpp"
#include "wsss/gradcheck.hpp"
#include "wsss/ops.hpp"
#include "wsss/rng.hpp"

using namespace wsss;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(Tensor, RejectsMismatchedAndZeroSizedShapes) {
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor::zeros({0, 3}), ShapeError);
}

TEST(Matmul, IdentityAndHandProduct) {
  const Tensor id = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor b = Tensor::from({2, 2}, {3, 4, 5, 6});
  EXPECT_EQ(vals(matmul(id, b)), (std::vector<double>{3, 4, 5, 6}));
  const Tensor r = matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4}));
  EXPECT_EQ(r.shape(), (Shape{1, 1}));
  EXPECT_EQ(r.item(), 11.0);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[4x2]"), std::string::npos);
  }
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  Rng rng(3);
  Tensor a = rng.normal_tensor({3, 4}, 1.0), b = rng.normal_tensor({4, 2}, 1.0);
  const auto rep = gradcheck([&] { return sum(matmul(a, b)); }, {a, b});
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(Softmax, SymmetricStableAndExact) {
  EXPECT_EQ(vals(softmax(Tensor::from({3}, {0, 0, 0}), 0)),
            (std::vector<double>(3, 1.0 / 3.0)));
  EXPECT_EQ(vals(softmax(Tensor::from({2}, {1000, 1000}), 0)), (std::vector<double>{0.5, 0.5}));
  const auto got = vals(softmax(Tensor::from({3}, {1, 2, 3}), 0));
  long double z = 0;
  for (int i = 1; i <= 3; ++i) z += std::exp(static_cast<long double>(i));
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(got[i], static_cast<double>(std::exp(static_cast<long double>(i + 1)) / z), 1e-15);
  }
}

TEST(Softmax, RowsSumToOneAndIgnoreShifts) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor x = rng.normal_tensor({4, 6}, 3.0, false);
    const double shift = rng.uniform(-50, 50);
    const Tensor p = softmax(x, 1), q = softmax(add_scalar(x, shift), 1);
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        s += p.at(i, j);
        EXPECT_NEAR(p.at(i, j), q.at(i, j), 1e-12);
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Elementwise, HandValues) {
  EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  Tensor x = Tensor::scalar(0.3, true);
  backward(wsss::tanh(x));
  const double t = std::tanh(0.3);
  EXPECT_NEAR(x.grad()[0], 1.0 - t * t, 1e-10);
}

TEST(Elementwise, LogClampsAtFloor) {
  const Tensor y = wsss::log(Tensor::from({2}, {0.0, -3.0}));
  EXPECT_EQ(y.at(0), std::log(kLogClamp));
  EXPECT_EQ(y.at(1), std::log(kLogClamp));
}

TEST(Elementwise, ForwardValuesStayFinite) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor x = rng.normal_tensor({5, 5}, 50.0, false);
    for (const Tensor& y : {sigmoid(x), wsss::tanh(x), gelu(x), wsss::log(x), softmax(x, 0),
                            softmax(x, 1), layer_norm(x, Tensor::full({5}, 1.0), Tensor::zeros({5}))}) {
      for (double v : y.values()) EXPECT_TRUE(std::isfinite(v));
    }
  }
}

TEST(ConcatSlice, SlicesRecoverOperands) {
  Rng rng(1);
  const Tensor a = rng.normal_tensor({2, 3}, 1.0, false), b = rng.normal_tensor({2, 5}, 1.0, false);
  const Tensor c = concat({a, b}, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 8}));
  EXPECT_EQ(vals(slice(c, 1, 0, 3)), vals(a));
  EXPECT_EQ(vals(slice(c, 1, 3, 5)), vals(b));
  const Tensor r = concat({a, a}, 0);
  EXPECT_EQ(vals(slice(r, 0, 2, 2)), vals(a));
}

TEST(Backward, SumAndSquareGradients) {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  backward(sum(x));
  EXPECT_EQ(x.grad(), std::vector<double>(6, 1.0));
  Tensor y = Tensor::from({3}, {1, 2, 3}, true);
  backward(sum(mul(y, y)));
  EXPECT_EQ(y.grad(), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, RepeatedBackwardDoublesLeafGradients) {
  Tensor x = Tensor::from({3}, {1, -2, 0.5}, true);
  const Tensor loss = sum(mul(x, x));
  backward(loss);
  const auto once = x.grad();
  backward(loss);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x.grad()[i], 2 * once[i]);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Backward, RejectsNonScalarAndUntrackedLosses) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(backward(mul(x, x)), ContractError);
  EXPECT_THROW(backward(sum(Tensor::from({2}, {1, 2}))), ContractError);
}

TEST(Backward, NoGradGuardStopsRecording) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  NoGradGuard guard;
  EXPECT_FALSE(sum(x).requires_grad());
}

TEST(Tape, ReplaysInReverseExecutionOrderWithoutTouchingValues) {
  Tensor x = Tensor::from({2}, {0.5, -1.5}, true);
  std::vector<int> visited;
  auto tagged = [&](const Tensor& in, int tag) {
    return make_result(in.shape(), std::vector<double>(in.values().begin(), in.values().end()), {in},
                       [&visited, tag](detail::Node& self) {
                         visited.push_back(tag);
                         auto& g = self.parents[0]->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       });
  };
  const Tensor a = tagged(x, 1);
  const Tensor b = tagged(sigmoid(a), 2);
  const Tensor c = tagged(mul(b, a), 3);
  const Tensor loss = sum(c);
  const Tape tape = Tape::record(loss);
  const auto seq = tape.sequence();
  for (std::size_t i = 1; i < seq.size(); ++i) EXPECT_LT(seq[i - 1], seq[i]);
  const auto before_a = vals(a), before_c = vals(c);
  tape.backward(loss);
  EXPECT_EQ(visited, (std::vector<int>{3, 2, 1}));
  EXPECT_EQ(vals(a), before_a);
  EXPECT_EQ(vals(c), before_c);
}

TEST(Gradcheck, SumIsExactAndConstantFunctionUsesAbsoluteFallback) {
  Rng rng(5);
  const auto r1 = gradcheck([](const Tensor& x) { return sum(x); }, rng.normal_tensor({3, 3}, 1.0));
  EXPECT_TRUE(r1.passed);
  EXPECT_LT(r1.max_rel_error, 1e-9);
  const auto r2 = gradcheck([](const Tensor& x) { return sum(softmax(x, 1)); },
                            rng.normal_tensor({2, 4}, 1.0));
  EXPECT_TRUE(r2.passed);
  EXPECT_LT(r2.max_abs_error, 1e-7);
}

TEST(Gradcheck, RejectsNonScalarFunctions) {
  EXPECT_THROW(gradcheck([](const Tensor& x) { return mul(x, x); }, Tensor::zeros({2}, true)),
               ContractError);
}

TEST(Gradcheck, CatchesAWrongGradientRule) {
  // Forward is x^2 but the recorded rule claims 3x.
  auto bad = [](const Tensor& x) {
    std::vector<double> v;
    for (double a : x.values()) v.push_back(a * a);
    return sum(make_result(x.shape(), v, {x}, [](detail::Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * self.parents[0]->values[i] * self.grad[i];
    }));
  };
  EXPECT_FALSE(gradcheck(bad, Tensor::from({2}, {0.7, -1.2}, true)).passed);
}

TEST(Gradcheck, EveryOperationPassesOnSeveralSeeds) {
  for (std::uint64_t seed = 100; seed < 103; ++seed) {
    for (const auto& c : gradcheck_suite(seed)) {
      EXPECT_TRUE(c.report.passed) << c.name << " seed " << seed << " rel " << c.report.max_rel_error;
      EXPECT_GT(c.report.checked, 0u) << c.name;
    }
  }
}

TEST(Determinism, SameSeedGivesBitwiseIdenticalValues) {
  Rng a(42), b(42);
  const Tensor x = a.normal_tensor({4, 4}, 1.0), y = b.normal_tensor({4, 4}, 1.0);
  EXPECT_EQ(vals(layer_norm(gelu(matmul(x, x)), Tensor::full({4}, 1.0), Tensor::zeros({4}))),
            vals(layer_norm(gelu(matmul(y, y)), Tensor::full({4}, 1.0), Tensor::zeros({4}))));
}

TEST(Shapes, ReductionsAndGathers) {
  const Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(vals(sum_axis(x, 0)), (std::vector<double>{5, 7, 9}));
  EXPECT_EQ(vals(mean_axis(x, 1)), (std::vector<double>{2, 5}));
  EXPECT_EQ(vals(gather_rows(x, {1, 1, 0})), (std::vector<double>{4, 5, 6, 4, 5, 6, 1, 2, 3}));
  EXPECT_EQ(vals(take(x, {5, 0}, {2})), (std::vector<double>{6, 1}));
  EXPECT_EQ(vals(transpose(x)), (std::vector<double>{1, 4, 2, 5, 3, 6}));
  EXPECT_THROW(add(x, Tensor::zeros({3, 2})), ShapeError);
  EXPECT_THROW(reshape(x, {4}), ShapeError);
}
