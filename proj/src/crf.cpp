#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "wsss/error.hpp"
#include "wsss/pseudo_label.hpp"

namespace wsss {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Above this many pixels the N x N kernel is recomputed per iteration
// instead of being held in memory.
constexpr std::size_t kCachedKernelLimit = 4096;

struct Pairwise {
  std::size_t width;
  const double* rgb;
  double inv_spatial, inv_bi_spatial, inv_color, w_spatial, w_bilateral;

  double operator()(std::size_t i, std::size_t j) const {
    const double dy = static_cast<double>(i / width) - static_cast<double>(j / width);
    const double dx = static_cast<double>(i % width) - static_cast<double>(j % width);
    const double d2 = dy * dy + dx * dx;
    double c2 = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double dc = rgb[i * 3 + k] - rgb[j * 3 + k];
      c2 += dc * dc;
    }
    return w_spatial * std::exp(-d2 * inv_spatial) +
           w_bilateral * std::exp(-d2 * inv_bi_spatial - c2 * inv_color);
  }
};

}  // namespace

ProbMap crf_refine(const ProbMap& pm, const Tensor& image, const CrfConfig& cfg) {
  cfg.validate();
  if (image.rank() != 3 || image.dim(0) != pm.height() || image.dim(1) != pm.width() ||
      image.dim(2) != 3) {
    throw ShapeError("crf_refine: image " + shape_str(image.shape()) +
                     " does not match probability map " + shape_str(pm.probs.shape()));
  }
  if (cfg.spatial_weight == 0.0 && cfg.bilateral_weight == 0.0) {
    return {pm.probs.detach()};
  }
  const std::size_t n = pm.height() * pm.width(), labels = pm.channels();
  const auto pv = pm.probs.values();

  RowMat unary(n, labels);  // log-probabilities, clamped
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < labels; ++l)
      unary(i, l) = std::log(std::max(pv[i * labels + l], 1e-12));

  const Pairwise kernel{pm.width(),
                        image.values().data(),
                        1.0 / (2.0 * cfg.spatial_sigma * cfg.spatial_sigma),
                        1.0 / (2.0 * cfg.bilateral_spatial_sigma * cfg.bilateral_spatial_sigma),
                        1.0 / (2.0 * cfg.bilateral_color_sigma * cfg.bilateral_color_sigma),
                        cfg.spatial_weight,
                        cfg.bilateral_weight};

  RowMat k_matrix;
  if (n <= kCachedKernelLimit) {
    k_matrix.resize(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      k_matrix(i, i) = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) k_matrix(i, j) = k_matrix(j, i) = kernel(i, j);
    }
  }

  RowMat q = Eigen::Map<const RowMat>(pv.data(), n, labels);
  RowMat message(n, labels);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    // Every label's message is summed over j in the same order: equal label
    // columns must stay bitwise equal, because the symmetric fixed point is
    // unstable and a blocked GEMM would seed it with rounding noise.
    message.setZero();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double kij = n <= kCachedKernelLimit ? k_matrix(i, j) : kernel(i, j);
        for (std::size_t l = 0; l < labels; ++l) message(i, l) += kij * q(j, l);
      }
    }
    // Potts: the penalty for label l is the mass on all other labels, which
    // differs from -message(l) only by a per-pixel constant.
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -INFINITY;
      for (std::size_t l = 0; l < labels; ++l) {
        q(i, l) = unary(i, l) + message(i, l);
        mx = std::max(mx, q(i, l));
      }
      double total = 0.0;
      for (std::size_t l = 0; l < labels; ++l) {
        q(i, l) = std::exp(q(i, l) - mx);
        total += q(i, l);
      }
      for (std::size_t l = 0; l < labels; ++l) q(i, l) /= total;
    }
  }
  std::vector<double> out(q.data(), q.data() + n * labels);
  return {Tensor::from(pm.probs.shape(), std::move(out))};
}

}  // namespace wsss
