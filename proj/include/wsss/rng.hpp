#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "wsss/tensor.hpp"

namespace wsss {

// Seedable generator shared by every initialiser, shuffler and data
// generator so that a run is fully determined by its seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Uniform in [lo, hi).
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  std::uint64_t next() { return engine_(); }

  Tensor normal_tensor(Shape shape, double stddev, bool requires_grad = true) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = normal(0.0, stddev);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    // Fisher-Yates with our own draws; std::shuffle's algorithm is
    // implementation-defined.
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace wsss
