#pragma once

#include <cstdint>
#include <vector>

#include "wsss/vit.hpp"

namespace wsss {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  // Moments, one array per parameter in ParamList order.
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// Bias-corrected Adam update using each parameter's accumulated gradient.
// A non-finite gradient aborts before any parameter changes.
void adam_step(const ParamList& params, AdamState& state, double lr);

}  // namespace wsss
