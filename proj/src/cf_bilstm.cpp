#include "wsss/cf_bilstm.hpp"

#include "wsss/error.hpp"
#include "wsss/ops.hpp"

namespace wsss {

namespace {

constexpr double kInitStd = 0.02;

LstmState lstm_step(const Tensor& gates_in, const LstmState* prev,
                    const LstmCellParams& params) {
  const std::size_t d = params.hidden_dim;
  const Tensor gates =
      prev ? add(gates_in, matmul(prev->h, params.w_hidden)) : gates_in;
  const Tensor i = sigmoid(slice(gates, 1, 0, d));
  const Tensor f = sigmoid(slice(gates, 1, d, d));
  const Tensor g = tanh(slice(gates, 1, 2 * d, d));
  const Tensor o = sigmoid(slice(gates, 1, 3 * d, d));
  // A missing previous state is the zero state: c = i*g.
  const Tensor c = prev ? add(mul(f, prev->c), mul(i, g)) : mul(i, g);
  return {mul(o, tanh(c)), c};
}

}  // namespace

LstmCellParams LstmCellParams::init(std::size_t input_dim, std::size_t hidden_dim,
                                    Rng& rng) {
  if (input_dim == 0 || hidden_dim == 0) {
    throw ConfigError("LSTM dimensions must be positive");
  }
  LstmCellParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_input = rng.normal_tensor({input_dim, 4 * hidden_dim}, kInitStd);
  p.w_hidden = rng.normal_tensor({hidden_dim, 4 * hidden_dim}, kInitStd);
  std::vector<double> bias(4 * hidden_dim, 0.0);
  for (std::size_t j = hidden_dim; j < 2 * hidden_dim; ++j) bias[j] = 1.0;
  p.bias = Tensor::from({4 * hidden_dim}, std::move(bias), true);
  return p;
}

void LstmCellParams::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w_input", w_input);
  out.emplace_back(prefix + ".w_hidden", w_hidden);
  out.emplace_back(prefix + ".bias", bias);
}

LstmState lstm_cell(const Tensor& x, const LstmState& prev,
                    const LstmCellParams& params) {
  const Tensor xs = x.rank() == 1 ? reshape(x, {1, x.numel()}) : x;
  if (xs.rank() != 2 || xs.dim(1) != params.input_dim) {
    throw ShapeError("lstm_cell: input " + shape_str(x.shape()) +
                     " does not match input dim " + std::to_string(params.input_dim));
  }
  const Shape state_shape{xs.dim(0), params.hidden_dim};
  LstmState p{prev.h.rank() == 1 ? reshape(prev.h, state_shape) : prev.h,
              prev.c.rank() == 1 ? reshape(prev.c, state_shape) : prev.c};
  if (p.h.shape() != state_shape || p.c.shape() != state_shape) {
    throw ShapeError("lstm_cell: state shapes " + shape_str(prev.h.shape()) + ", " +
                     shape_str(prev.c.shape()) + " expected " + shape_str(state_shape));
  }
  return lstm_step(add_row(matmul(xs, params.w_input), params.bias), &p, params);
}

namespace {

// Runs parallel chains through one cell: steps[t][b] is the row of
// `projected` that chain b consumes at step t. Every row appears once; the
// hidden state for each row is returned in row order.
Tensor run_chains(const Tensor& projected, const std::vector<std::vector<std::size_t>>& steps,
                  const LstmCellParams& params) {
  const std::size_t chains = steps.front().size();
  std::vector<Tensor> states;
  states.reserve(steps.size());
  std::vector<std::size_t> out_rows(projected.dim(0));
  LstmState state;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    for (std::size_t b = 0; b < chains; ++b) out_rows[steps[t][b]] = t * chains + b;
    const Tensor gates_in = projected.dim(0) == 1 ? projected : gather_rows(projected, steps[t]);
    state = lstm_step(gates_in, t == 0 ? nullptr : &state, params);
    states.push_back(state.h);
  }
  if (projected.dim(0) == 1) return states.front();
  return gather_rows(concat(states, 0), out_rows);
}

}  // namespace

Tensor run_sequences(const Tensor& x, std::size_t sequences,
                     const std::vector<std::size_t>& order,
                     const LstmCellParams& params, Direction dir) {
  if (order.empty()) throw ContractError("run_direction: empty sequence");
  const std::size_t s = order.size();
  if (x.rank() != 2 || sequences == 0 || x.dim(0) != sequences * s ||
      x.dim(1) != params.input_dim) {
    throw ShapeError("run_direction: input " + shape_str(x.shape()) + " does not hold " +
                     std::to_string(sequences) + " sequences of length " +
                     std::to_string(s) + " and width " +
                     std::to_string(params.input_dim));
  }
  std::vector<std::vector<std::size_t>> steps(s, std::vector<std::size_t>(sequences));
  for (std::size_t t = 0; t < s; ++t) {
    const std::size_t pos = dir == Direction::kForward ? order[t] : order[s - 1 - t];
    for (std::size_t n = 0; n < sequences; ++n) steps[t][n] = n * s + pos;
  }
  return run_chains(add_row(matmul(x, params.w_input), params.bias), steps, params);
}

Tensor run_direction(const Tensor& seq, const LstmCellParams& params, Direction dir) {
  if (seq.rank() != 2 || seq.dim(0) == 0) {
    throw ContractError("run_direction: expected a non-empty [s x in] sequence");
  }
  std::vector<std::size_t> order(seq.dim(0));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return run_sequences(seq, 1, order, params, dir);
}

FusionParams FusionParams::init(std::size_t hidden_dim, std::size_t out_dim, Rng& rng) {
  FusionParams p;
  p.w = rng.normal_tensor({2 * hidden_dim, out_dim}, kInitStd);
  p.b = Tensor::zeros({out_dim}, true);
  return p;
}

void FusionParams::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

Tensor fuse_project(const Tensor& h_fwd, const Tensor& h_bwd, const FusionParams& fusion) {
  if (h_fwd.shape() != h_bwd.shape()) {
    throw ShapeError("fuse_project: forward states " + shape_str(h_fwd.shape()) +
                     " vs backward states " + shape_str(h_bwd.shape()));
  }
  return add_row(matmul(concat({h_fwd, h_bwd}, 1), fusion.w), fusion.b);
}

BiLstmParams BiLstmParams::init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  BiLstmParams p;
  p.forward = LstmCellParams::init(input_dim, hidden_dim, rng);
  p.backward = LstmCellParams::init(input_dim, hidden_dim, rng);
  return p;
}

void BiLstmParams::collect(ParamList& out, const std::string& prefix) const {
  forward.collect(out, prefix + ".fwd");
  backward.collect(out, prefix + ".bwd");
}

CfBiLstmParams CfBiLstmParams::init(std::size_t width, std::size_t hidden_dim, Rng& rng) {
  CfBiLstmParams p;
  p.horizontal = BiLstmParams::init(width, hidden_dim, rng);
  p.vertical = BiLstmParams::init(width, hidden_dim, rng);
  p.fusion = FusionParams::init(hidden_dim, width, rng);
  return p;
}

void CfBiLstmParams::collect(ParamList& out, const std::string& prefix) const {
  horizontal.collect(out, prefix + ".h");
  vertical.collect(out, prefix + ".v");
  fusion.collect(out, prefix + ".fusion");
}

namespace {

// One bidirectional pass over every grid row (horizontal) or every grid
// column (vertical) of every stream, each line an independent sequence.
Tensor fused_pass(const Tensor& x, std::size_t streams, std::size_t rows, std::size_t cols,
                  bool vertical, const BiLstmParams& cells, const FusionParams& fusion) {
  const std::size_t length = vertical ? rows : cols, lines = vertical ? cols : rows;
  auto steps_for = [&](Direction dir) {
    std::vector<std::vector<std::size_t>> steps(length);
    for (std::size_t t = 0; t < length; ++t) {
      const std::size_t along = dir == Direction::kForward ? t : length - 1 - t;
      steps[t].reserve(streams * lines);
      for (std::size_t n = 0; n < streams; ++n)
        for (std::size_t line = 0; line < lines; ++line) {
          const std::size_t r = vertical ? along : line, c = vertical ? line : along;
          steps[t].push_back(n * rows * cols + r * cols + c);
        }
    }
    return steps;
  };
  const Tensor fwd = run_chains(add_row(matmul(x, cells.forward.w_input), cells.forward.bias),
                                steps_for(Direction::kForward), cells.forward);
  const Tensor bwd = run_chains(add_row(matmul(x, cells.backward.w_input), cells.backward.bias),
                                steps_for(Direction::kBackward), cells.backward);
  return fuse_project(fwd, bwd, fusion);
}

Tensor fusion_impl(const Tensor& x, std::size_t streams, std::size_t rows,
                   std::size_t cols, const BiLstmParams& horizontal,
                   const BiLstmParams& vertical, const FusionParams& fusion) {
  if (rows == 0 || cols == 0 || x.rank() != 2 || streams == 0 ||
      x.dim(0) != streams * rows * cols) {
    throw ShapeError("contextual_fusion: " + shape_str(x.shape()) + " does not match " +
                     std::to_string(streams) + " streams on a " + std::to_string(rows) +
                     "x" + std::to_string(cols) + " grid");
  }
  const Tensor h = fused_pass(x, streams, rows, cols, false, horizontal, fusion);
  const Tensor v = fused_pass(x, streams, rows, cols, true, vertical, fusion);
  return add(h, v);
}

}  // namespace

FusedFeatures contextual_fusion(const ConditionedFeatures& input, std::size_t rows,
                                std::size_t cols, const BiLstmParams& horizontal,
                                const BiLstmParams& vertical, const FusionParams& fusion) {
  if (input.patches != rows * cols) {
    throw ShapeError("contextual_fusion: " + std::to_string(input.patches) +
                     " patches on a " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " grid");
  }
  const Tensor flat =
      reshape(input.features, {input.classes * input.patches, input.width});
  const Tensor out =
      fusion_impl(flat, input.classes, rows, cols, horizontal, vertical, fusion);
  FusedFeatures f;
  f.classes = input.classes;
  f.patches = input.patches;
  f.width = out.dim(1);
  f.features = reshape(out, {f.classes, f.patches, f.width});
  return f;
}

Tensor contextual_fusion_batch(const Tensor& x, std::size_t streams, std::size_t rows,
                               std::size_t cols, const CfBiLstmParams& params) {
  return fusion_impl(x, streams, rows, cols, params.horizontal, params.vertical,
                     params.fusion);
}

}  // namespace wsss
