#include "wsss/metrics.hpp"

#include "wsss/error.hpp"

namespace wsss {

double MIoUReport::iou(std::size_t label) const {
  if (label >= num_labels()) throw ContractError("iou: label out of range");
  if (union_[label] == 0) return -1.0;
  return static_cast<double>(intersection[label]) / static_cast<double>(union_[label]);
}

double MIoUReport::miou() const {
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < num_labels(); ++c) {
    if (union_[c] == 0) continue;
    total += iou(c);
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

MIoUAccumulator::MIoUAccumulator(std::size_t num_labels) {
  if (num_labels == 0) throw ContractError("mIoU needs at least one label");
  report_.intersection.assign(num_labels, 0);
  report_.union_.assign(num_labels, 0);
}

bool MIoUAccumulator::add(const PseudoMask& pred, const PseudoMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width ||
      pred.labels.size() != gt.labels.size()) {
    ++report_.skipped;
    return false;
  }
  const std::size_t n = report_.num_labels();
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const std::uint8_t g = gt.labels[i], p = pred.labels[i];
    if (g == kIgnoreLabel) {
      ++report_.ignored;
      continue;
    }
    if (g >= n || p >= n) {
      throw DataError("mask label " + std::to_string(g >= n ? g : p) + " outside 0.." +
                      std::to_string(n - 1));
    }
    ++report_.pixels;
    if (g == p) {
      ++report_.intersection[g];
      ++report_.union_[g];
    } else {
      ++report_.union_[g];
      ++report_.union_[p];
    }
  }
  ++report_.images;
  return true;
}

}  // namespace wsss
