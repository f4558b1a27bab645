#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wsss/config.hpp"
#include "wsss/dataset.hpp"
#include "wsss/metrics.hpp"
#include "wsss/model.hpp"

namespace wsss {

struct PseudoLabels {
  Tensor patch_scores;  // Z [s x C] at the inference resolution
  ProbMap bpm_probs;
  PseudoMask bpm;
  std::optional<PseudoMask> refined;
};

// Scores one [H x W x 3] image and converts the scores into masks at the
// image's own resolution. The image is first resized to infer_size when it
// is set; the inference size must be square and divisible by the patch size.
PseudoLabels infer_image(const Model& model, const Tensor& image, const InferConfig& cfg);

// Restores a model (and the config it was trained with) from a checkpoint.
struct LoadedModel {
  Config config;
  Model model;
};
LoadedModel load_model(const std::filesystem::path& checkpoint);

// Writes <out>/bpm/<id>.png, <out>/crf/<id>.png (when CRF is on),
// <out>/scores/<id>.tsv and <out>/palette.txt.
void infer_dataset(const Model& model, const DatasetManifest& manifest,
                   const InferConfig& cfg, const std::filesystem::path& out_dir);

// Scores predicted masks in pred_dir (named <id>.png) against the manifest's
// ground truth. Records without a ground-truth mask are skipped.
MIoUReport evaluate_dir(const std::filesystem::path& pred_dir,
                        const DatasetManifest& manifest);

// In-memory BPM and CRF mIoU of a model on a labelled manifest.
struct SegmentationScores {
  MIoUReport bpm;
  std::optional<MIoUReport> refined;
};
SegmentationScores evaluate_model(const Model& model, const DatasetManifest& manifest,
                                  const InferConfig& cfg);

}  // namespace wsss
