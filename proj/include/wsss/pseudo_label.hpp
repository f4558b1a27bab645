#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsss/tensor.hpp"

namespace wsss {

inline constexpr std::uint8_t kIgnoreLabel = 255;

// Per-pixel class probabilities [H x W x (C+1)]; channel 0 is background.
struct ProbMap {
  Tensor probs;

  std::size_t height() const { return probs.dim(0); }
  std::size_t width() const { return probs.dim(1); }
  std::size_t channels() const { return probs.dim(2); }
};

// Label grid: 0 = background, 1..C = classes, 255 = ignore.
struct PseudoMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
  bool operator==(const PseudoMask&) const = default;
};

struct CrfConfig {
  std::size_t iterations = 10;
  double spatial_sigma = 3.0;
  double bilateral_spatial_sigma = 32.0;
  // Colour distances are measured on intensities in [0, 1].
  double bilateral_color_sigma = 0.25;
  double spatial_weight = 3.0;
  double bilateral_weight = 5.0;

  void validate() const;
};

// Bilinear resampling of a [gr x gc x C] score grid to [height x width x C]
// with half-pixel centres (align_corners = false), clamped at the borders.
Tensor upsample_bilinear(const Tensor& grid, std::size_t height, std::size_t width);

// Appends a constant background score tau in front of the C foreground
// scores and renormalises each pixel. Where the best foreground score equals
// tau, the argmax tie rule hands the pixel to background.
ProbMap make_probmap(const Tensor& upsampled, double bg_threshold);

// Per-pixel argmax; ties go to the lowest channel.
PseudoMask argmax_mask(const ProbMap& pm);

// Mean-field inference in a fully connected CRF with a Gaussian spatial
// kernel and a bilateral kernel under the Potts model. image: [H x W x 3]
// in [0, 1]. Pairwise sums are computed exactly over all pixel pairs.
ProbMap crf_refine(const ProbMap& pm, const Tensor& image, const CrfConfig& cfg);

// 8-bit single-channel mask file (PNG or PGM by extension).
void write_mask(const std::filesystem::path& path, const PseudoMask& mask);
PseudoMask read_mask(const std::filesystem::path& path);

// Sidecar listing "value name r g b" per label, including ignore.
void write_palette(const std::filesystem::path& path,
                   const std::vector<std::string>& class_names);

}  // namespace wsss
