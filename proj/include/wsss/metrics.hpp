#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "wsss/pseudo_label.hpp"

namespace wsss {

// Intersection and union counts over labels 0..C (background included),
// accumulated across a whole set. Ignore pixels (255) in the ground truth
// are skipped; any other out-of-range label is an error.
struct MIoUReport {
  std::vector<std::uint64_t> intersection;
  std::vector<std::uint64_t> union_;
  std::uint64_t pixels = 0;
  std::uint64_t ignored = 0;
  std::size_t images = 0;
  std::size_t skipped = 0;

  std::size_t num_labels() const { return intersection.size(); }
  // -1 when the class never appears in prediction or ground truth.
  double iou(std::size_t label) const;
  // Unweighted mean over labels with nonzero union.
  double miou() const;
};

class MIoUAccumulator {
 public:
  explicit MIoUAccumulator(std::size_t num_labels);

  // Returns false (and counts the image as skipped) on a size mismatch.
  bool add(const PseudoMask& pred, const PseudoMask& gt);
  const MIoUReport& report() const { return report_; }

 private:
  MIoUReport report_;
};

}  // namespace wsss
