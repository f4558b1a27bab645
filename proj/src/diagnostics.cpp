#include "wsss/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>

#include "wsss/cf_bilstm.hpp"
#include "wsss/class_token.hpp"
#include "wsss/head.hpp"
#include "wsss/model.hpp"
#include "wsss/ops.hpp"
#include "wsss/rng.hpp"
#include "wsss/vit.hpp"

namespace wsss {

namespace {

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Distinct values at least 0.1 apart, so that selections do not flip under
// the finite-difference step.
Tensor separated_tensor(Shape shape, Rng& rng) {
  const std::size_t n = shape_numel(shape);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 0.1 * static_cast<double>(perm[i]) - 0.5 + rng.uniform(0.0, 0.02);
  return Tensor::from(std::move(shape), std::move(v), true);
}

void mark(const ParamList& params, std::vector<Tensor>& inputs) {
  for (const auto& [name, t] : params) inputs.push_back(t);
}

}  // namespace

std::vector<GradcheckCase> gradcheck_suite(std::uint64_t seed, const GradcheckOptions& options) {
  Rng rng(seed);
  std::vector<GradcheckCase> out;
  auto run = [&](const std::string& name, const std::function<Tensor()>& f,
                 const std::vector<Tensor>& inputs) {
    out.push_back({name, gradcheck(f, inputs, options)});
  };
  auto unary = [&](const std::string& name, Tensor x, const std::function<Tensor(const Tensor&)>& op) {
    const Tensor out_shape_probe = [&] {
      NoGradGuard g;
      return op(x);
    }();
    Tensor w = rng.normal_tensor(out_shape_probe.shape(), 1.0, false);
    run(name, [x, w, op] { return sum(mul(op(x), w)); }, {x});
  };

  {
    Tensor a = rng.normal_tensor({3, 4}, 1.0), b = rng.normal_tensor({4, 2}, 1.0);
    Tensor w = rng.normal_tensor({3, 2}, 1.0, false);
    run("matmul", [=] { return sum(mul(matmul(a, b), w)); }, {a, b});
  }
  unary("transpose", rng.normal_tensor({3, 5}, 1.0), [](const Tensor& x) { return transpose(x); });
  {
    Tensor a = rng.normal_tensor({2, 3}, 1.0), b = rng.normal_tensor({2, 3}, 1.0);
    Tensor w = rng.normal_tensor({2, 3}, 1.0, false);
    run("add", [=] { return sum(mul(add(a, b), w)); }, {a, b});
    run("sub", [=] { return sum(mul(sub(a, b), w)); }, {a, b});
    run("mul", [=] { return sum(mul(mul(a, b), w)); }, {a, b});
  }
  unary("scale", rng.normal_tensor({4}, 1.0), [](const Tensor& x) { return scale(x, -1.7); });
  unary("add_scalar", rng.normal_tensor({4}, 1.0), [](const Tensor& x) { return add_scalar(x, 0.3); });
  {
    Tensor a = rng.normal_tensor({3, 4}, 1.0), r = rng.normal_tensor({4}, 1.0);
    Tensor w = rng.normal_tensor({3, 4}, 1.0, false);
    run("add_row", [=] { return sum(mul(add_row(a, r), w)); }, {a, r});
  }
  unary("sigmoid", rng.normal_tensor({2, 3}, 2.0), [](const Tensor& x) { return sigmoid(x); });
  unary("tanh", rng.normal_tensor({2, 3}, 1.0), [](const Tensor& x) { return wsss::tanh(x); });
  unary("gelu", rng.normal_tensor({2, 3}, 1.5), [](const Tensor& x) { return gelu(x); });
  unary("exp", rng.normal_tensor({2, 3}, 1.0), [](const Tensor& x) { return wsss::exp(x); });
  unary("log", uniform_tensor({2, 3}, 0.2, 3.0, rng), [](const Tensor& x) { return wsss::log(x); });
  {
    // Keep entries clear of the bounds.
    std::vector<double> v = {-2.0, -0.3, 0.1, 0.45, 1.5, 0.8};
    for (double& x : v) x += rng.uniform(-0.05, 0.05);
    unary("clamp", Tensor::from({2, 3}, v, true), [](const Tensor& x) { return clamp(x, -1.0, 1.0); });
  }
  unary("softmax_axis0", rng.normal_tensor({3, 4}, 1.0), [](const Tensor& x) { return softmax(x, 0); });
  unary("softmax_axis1", rng.normal_tensor({3, 4}, 1.0), [](const Tensor& x) { return softmax(x, 1); });
  unary("softmax_3d", rng.normal_tensor({2, 2, 3}, 1.0), [](const Tensor& x) { return softmax(x, 2); });
  {
    Tensor a = rng.normal_tensor({2, 3}, 1.0), b = rng.normal_tensor({2, 2}, 1.0);
    Tensor w = rng.normal_tensor({2, 8}, 1.0, false);
    run("concat", [=] { return sum(mul(concat({a, b, a}, 1), w)); }, {a, b});
  }
  unary("slice", rng.normal_tensor({4, 3}, 1.0), [](const Tensor& x) { return slice(x, 0, 1, 2); });
  unary("reshape", rng.normal_tensor({2, 6}, 1.0), [](const Tensor& x) { return reshape(x, {3, 4}); });
  unary("gather_rows", rng.normal_tensor({4, 3}, 1.0),
        [](const Tensor& x) { return gather_rows(x, {2, 0, 2, 3}); });
  unary("take", rng.normal_tensor({3, 3}, 1.0),
        [](const Tensor& x) { return take(x, {8, 0, 4, 4, 1}, {5}); });
  unary("sum", rng.normal_tensor({2, 3}, 1.0), [](const Tensor& x) { return sum(x); });
  unary("mean", rng.normal_tensor({2, 3}, 1.0), [](const Tensor& x) { return mean(x); });
  unary("sum_axis", rng.normal_tensor({3, 4}, 1.0), [](const Tensor& x) { return sum_axis(x, 1); });
  unary("mean_axis", rng.normal_tensor({3, 4}, 1.0), [](const Tensor& x) { return mean_axis(x, 0); });
  {
    Tensor x = rng.normal_tensor({3, 5}, 1.0), g = rng.normal_tensor({5}, 1.0),
           b = rng.normal_tensor({5}, 1.0);
    Tensor w = rng.normal_tensor({3, 5}, 1.0, false);
    run("layer_norm", [=] { return sum(mul(layer_norm(x, g, b), w)); }, {x, g, b});
  }

  ViTConfig vc;
  vc.image_size = 8;
  vc.patch_size = 4;
  vc.embed_dim = 4;
  vc.num_heads = 2;
  vc.num_blocks = 1;
  vc.mlp_ratio = 2;
  {
    AttentionParams ap = AttentionParams::init(4, 2, rng);
    for (Tensor* t : {&ap.b_q, &ap.b_k, &ap.b_v, &ap.b_out}) *t = rng.normal_tensor({4}, 0.3);
    Tensor x = rng.normal_tensor({6, 4}, 1.0);
    Tensor w = rng.normal_tensor({6, 4}, 1.0, false);
    ParamList pl;
    ap.collect(pl, "attn");
    std::vector<Tensor> inputs{x};
    mark(pl, inputs);
    run("self_attention", [=] { return sum(mul(self_attention(x, ap, 2).output, w)); }, inputs);
  }
  {
    BlockParams bp = BlockParams::init(vc, rng);
    Tensor x = rng.normal_tensor({4, 4}, 1.0);
    Tensor w = rng.normal_tensor({4, 4}, 1.0, false);
    ParamList pl;
    bp.collect(pl, "block");
    std::vector<Tensor> inputs{x};
    mark(pl, inputs);
    run("transformer_block", [=] { return sum(mul(transformer_block(x, bp, 1), w)); }, inputs);
  }
  {
    Tensor img = uniform_tensor({8, 8, 3}, 0.0, 1.0, rng);
    Tensor we = rng.normal_tensor({48, 4}, 0.2), pe = rng.normal_tensor({4, 4}, 0.2);
    Tensor w = rng.normal_tensor({4, 4}, 1.0, false);
    run("patch_embed", [=] { return sum(mul(embed(patchify(img, 4), we, pe, 2, 2).tokens, w)); },
        {img, we, pe});
  }
  {
    ClassTokenBank bank = ClassTokenBank::init(2, 2, rng);
    Tensor tokens = rng.normal_tensor({8, 3}, 1.0);
    Tensor w = rng.normal_tensor({16, 5}, 1.0, false);
    run("class_token_condition", [=] { return sum(mul(condition_batch(tokens, 2, bank), w)); },
        {tokens, bank.tokens});
  }
  {
    LstmCellParams cell = LstmCellParams::init(3, 2, rng);
    Tensor x = rng.normal_tensor({2, 3}, 1.0), h = rng.normal_tensor({2, 2}, 0.5),
           c = rng.normal_tensor({2, 2}, 0.5);
    Tensor wh = rng.normal_tensor({2, 2}, 1.0, false), wc = rng.normal_tensor({2, 2}, 1.0, false);
    run("lstm_cell",
        [=] {
          const LstmState s = lstm_cell(x, {h, c}, cell);
          return add(sum(mul(s.h, wh)), sum(mul(s.c, wc)));
        },
        {x, h, c, cell.w_input, cell.w_hidden, cell.bias});
    Tensor seq = rng.normal_tensor({4, 3}, 1.0);
    Tensor w = rng.normal_tensor({4, 2}, 1.0, false);
    run("lstm_forward", [=] { return sum(mul(run_direction(seq, cell, Direction::kForward), w)); },
        {seq, cell.w_input, cell.w_hidden, cell.bias});
    run("lstm_backward", [=] { return sum(mul(run_direction(seq, cell, Direction::kBackward), w)); },
        {seq, cell.w_input, cell.w_hidden, cell.bias});
  }
  {
    FusionParams fp = FusionParams::init(2, 3, rng);
    fp.b = rng.normal_tensor({3}, 0.3);
    Tensor hf = rng.normal_tensor({4, 2}, 1.0), hb = rng.normal_tensor({4, 2}, 1.0);
    Tensor w = rng.normal_tensor({4, 3}, 1.0, false);
    run("fuse_project", [=] { return sum(mul(fuse_project(hf, hb, fp), w)); }, {hf, hb, fp.w, fp.b});
  }
  {
    CfBiLstmParams cf = CfBiLstmParams::init(3, 2, rng);
    Tensor x = rng.normal_tensor({8, 3}, 1.0);
    Tensor w = rng.normal_tensor({8, 3}, 1.0, false);
    ParamList pl;
    cf.collect(pl);
    std::vector<Tensor> inputs{x};
    mark(pl, inputs);
    run("contextual_fusion", [=] { return sum(mul(contextual_fusion_batch(x, 2, 2, 2, cf), w)); },
        inputs);
  }
  {
    ClassifierWeights head = ClassifierWeights::init(3, rng);
    head.b = rng.normal_tensor({1}, 0.3);
    Tensor f = rng.normal_tensor({5, 3}, 1.0);
    Tensor w = rng.normal_tensor({5, 1}, 1.0, false);
    run("stream_scorer", [=] { return sum(mul(wsss::stream_logits(f, head), w)); }, {f, head.w, head.b});
  }
  unary("softmax_scores", rng.normal_tensor({4, 3}, 1.0),
        [](const Tensor& x) { return score(x, ScoreMode::kSoftmax); });
  unary("topk_pool", separated_tensor({6, 3}, rng), [](const Tensor& z) { return topk_pool(z, 4); });
  unary("max_pool", separated_tensor({6, 3}, rng), [](const Tensor& z) { return max_pool(z); });
  unary("avg_pool", rng.normal_tensor({6, 3}, 1.0), [](const Tensor& z) { return avg_pool(z); });
  {
    Tensor p = uniform_tensor({4}, 0.2, 0.8, rng);
    Tensor y = Tensor::from({4}, {1.0, 0.0, 1.0, 0.0});
    run("mce_loss", [=] { return mce_loss(p, y); }, {p});
  }
  {
    ModelConfig mc;
    mc.vit = vc;
    mc.num_classes = 2;
    mc.token_dim = 2;
    mc.hidden_dim = 2;
    mc.topk = 4;
    const Model model = Model::init(mc, rng.next());
    const ParamList params = model.parameters();
    // Zero-initialised biases and positions would hide their own gradients'
    // dependence on everything else, so randomise every parameter.
    for (const auto& [name, t] : params) {
      Tensor p = t;
      for (double& v : p.mutable_values()) v = rng.normal(0.0, 0.3);
    }
    std::vector<Tensor> images{uniform_tensor({8, 8, 3}, 0.0, 1.0, rng),
                               uniform_tensor({8, 8, 3}, 0.0, 1.0, rng)};
    for (Tensor& img : images) img.set_requires_grad(false);
    const Tensor labels = Tensor::from({4}, {1.0, 0.0, 0.0, 1.0});
    std::vector<Tensor> inputs;
    mark(params, inputs);
    run("model_loss", [=] { return model.loss(images, labels); }, inputs);
  }
  return out;
}

namespace {

double median_seconds(const std::function<void()>& f, std::size_t repeats) {
  std::vector<double> t;
  f();  // warm-up: first-touch allocations and caches
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    f();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

}  // namespace

std::vector<ScalingPoint> bench_scaling(const std::vector<std::size_t>& lengths,
                                        std::size_t repeats, std::size_t width,
                                        std::size_t hidden, std::uint64_t seed) {
  Rng rng(seed);
  NoGradGuard guard;
  const CfBiLstmParams cf = CfBiLstmParams::init(width, hidden, rng);
  std::vector<ScalingPoint> out;
  for (std::size_t s : lengths) {
    // Closest-to-square grid with a power-of-two column count.
    std::size_t cols = 1;
    while (cols * cols < s) cols *= 2;
    if (s % cols != 0) cols = s;
    const std::size_t rows = s / cols;
    const Tensor x = rng.normal_tensor({s, width}, 1.0, false);
    const Tensor q = rng.normal_tensor({s, width}, 1.0, false);
    const Tensor k = rng.normal_tensor({s, width}, 1.0, false);
    const Tensor v = rng.normal_tensor({s, width}, 1.0, false);
    ScalingPoint p;
    p.patches = s;
    p.fusion_seconds = median_seconds([&] { contextual_fusion_batch(x, 1, rows, cols, cf); }, repeats);
    p.attention_seconds = median_seconds([&] { attention_kernel(q, k, v); }, repeats);
    out.push_back(p);
  }
  return out;
}

}  // namespace wsss
