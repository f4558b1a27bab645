#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wsss/class_token.hpp"
#include "wsss/rng.hpp"
#include "wsss/tensor.hpp"
#include "wsss/vit.hpp"

namespace wsss {

// Gate blocks are laid out column-wise as [input | forget | candidate | output].
struct LstmCellParams {
  Tensor w_input;   // [in x 4d]
  Tensor w_hidden;  // [d x 4d]
  Tensor bias;      // [4d], forget block initialised to 1
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  static LstmCellParams init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
};

struct LstmState {
  Tensor h;  // [n x d]
  Tensor c;  // [n x d]
};

enum class Direction { kForward, kBackward };

// One LSTM step for n stacked rows: x [n x in], state [n x d].
LstmState lstm_cell(const Tensor& x, const LstmState& prev, const LstmCellParams& params);

// Hidden states of one pass over seq [s x in]; row i holds the state at
// position i. The backward pass visits positions s-1 ... 0.
Tensor run_direction(const Tensor& seq, const LstmCellParams& params, Direction dir);

// Batched pass over `sequences` stacked sequences x [n*s x in] that visits
// positions in `order` (reversed for kBackward). Output rows stay in input
// position order: [n*s x d].
Tensor run_sequences(const Tensor& x, std::size_t sequences,
                     const std::vector<std::size_t>& order,
                     const LstmCellParams& params, Direction dir);

// Projection of concatenated forward/backward states: w [2d x out], b [out].
struct FusionParams {
  Tensor w;
  Tensor b;

  static FusionParams init(std::size_t hidden_dim, std::size_t out_dim, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
};

// h = [h_fwd ; h_bwd] per row, then h . w + b.
Tensor fuse_project(const Tensor& h_fwd, const Tensor& h_bwd, const FusionParams& fusion);

struct BiLstmParams {
  LstmCellParams forward;
  LstmCellParams backward;

  static BiLstmParams init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
};

// Horizontal and vertical bidirectional passes sharing one output projection.
struct CfBiLstmParams {
  BiLstmParams horizontal;
  BiLstmParams vertical;
  FusionParams fusion;

  static CfBiLstmParams init(std::size_t width, std::size_t hidden_dim, Rng& rng);
  void collect(ParamList& out, const std::string& prefix = "cf") const;
};

// F_out: [C x s x (e+H)], same axes as the conditioned input.
struct FusedFeatures {
  Tensor features;
  std::size_t classes = 0;
  std::size_t patches = 0;
  std::size_t width = 0;
};

// Every grid row is a horizontal sequence (left to right) and every grid
// column a vertical one (top to bottom). Each orientation is fused and
// projected, and the two results are summed, so a patch's output depends
// only on its own row and column. Class streams share parameters and never
// interact.
FusedFeatures contextual_fusion(const ConditionedFeatures& input, std::size_t rows,
                                std::size_t cols, const BiLstmParams& horizontal,
                                const BiLstmParams& vertical, const FusionParams& fusion);

// Same computation over `streams` stacked [s x w] streams: x [streams*s x w].
Tensor contextual_fusion_batch(const Tensor& x, std::size_t streams, std::size_t rows,
                               std::size_t cols, const CfBiLstmParams& params);

}  // namespace wsss
