#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace wsss {

namespace fs = std::filesystem;

// Class ids are 0-based foreground indices; mask files store id + 1, with
// 0 for background and 255 for ignore.
struct ManifestRecord {
  std::string id;
  fs::path image;
  std::vector<std::size_t> labels;
  // Evaluation only.
  std::optional<fs::path> mask;
};

struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<ManifestRecord> records;

  std::size_t num_classes() const { return class_names.size(); }
};

// What the training loop is allowed to see: no mask paths.
struct TrainingRecord {
  std::string id;
  fs::path image;
  std::vector<std::size_t> labels;
};

std::vector<TrainingRecord> training_view(const DatasetManifest& manifest);

// Tab-separated "id image labels mask" with a header row; paths relative to
// the manifest's directory, labels comma-separated ('-' for none, mask '-'
// when absent). Class names go to classes.txt next to it.
void write_manifest(const fs::path& dir, const DatasetManifest& manifest);
DatasetManifest read_manifest(const fs::path& dir);

inline constexpr std::size_t kMaxSyntheticClasses = 6;
const std::vector<std::string>& synthetic_class_names();

struct SyntheticSpec {
  std::uint64_t seed = 1;
  std::size_t count = 100;
  std::size_t image_size = 48;
  std::size_t num_classes = 3;
  // "ppm" (images) / "pgm" (masks), or "png" for both.
  std::string format = "ppm";
};

// Shapes on a textured background, one generator per class: disk, square,
// triangle, ring, bar, cross, each with its own colour. Writes images,
// masks and the manifest under dir.
DatasetManifest gen_synthetic(const fs::path& dir, const SyntheticSpec& spec);

// VOC layout: JPEGImages/, ImageSets/Segmentation/<set>.txt (falls back to
// ImageSets/Main/), Annotations/<id>.xml object names, a class-name table
// (labels.txt or classes.txt, one foreground class per line) and optional
// SegmentationClass/<id>.png masks.
DatasetManifest load_voc_manifest(const fs::path& root,
                                  const std::string& image_set = "train");

}  // namespace wsss
