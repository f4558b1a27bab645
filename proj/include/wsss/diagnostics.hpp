#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wsss/gradcheck.hpp"

namespace wsss {

struct GradcheckCase {
  std::string name;
  GradcheckReport report;
};

// Finite-difference checks of every differentiable operation, the model's
// building blocks, and the composed model on a 2x2 patch grid, all drawn
// from one seed.
std::vector<GradcheckCase> gradcheck_suite(std::uint64_t seed,
                                           const GradcheckOptions& options = {});

struct ScalingPoint {
  std::size_t patches = 0;
  double fusion_seconds = 0.0;     // median contextual fusion time
  double attention_seconds = 0.0;  // median quadratic attention time
};

// Times contextual fusion and plain attention at each sequence length
// (grids of rows x cols with rows*cols = s, cols a power of two), reporting
// the median of `repeats` runs.
std::vector<ScalingPoint> bench_scaling(const std::vector<std::size_t>& lengths,
                                        std::size_t repeats = 5, std::size_t width = 40,
                                        std::size_t hidden = 20, std::uint64_t seed = 1);

}  // namespace wsss
