#include "wsss/infer.hpp"

#include <fstream>
#include <iomanip>

#include "wsss/checkpoint.hpp"
#include "wsss/error.hpp"
#include "wsss/image_io.hpp"
#include "wsss/ops.hpp"

namespace wsss {

namespace fs = std::filesystem;

PseudoLabels infer_image(const Model& model, const Tensor& image, const InferConfig& cfg) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ShapeError("infer expects an [H x W x 3] image, got " + shape_str(image.shape()));
  }
  const std::size_t height = image.dim(0), width = image.dim(1);
  const std::size_t patch = model.config().vit.patch_size;
  Tensor input = image;
  if (cfg.infer_size) {
    input = resize_image(image, cfg.infer_size, cfg.infer_size);
  } else if (height != width) {
    throw ShapeError("image is " + std::to_string(height) + "x" + std::to_string(width) +
                     "; non-square images need an inference size");
  }
  const std::size_t side = input.dim(0);
  if (side % patch != 0) {
    throw ShapeError("inference size " + std::to_string(side) +
                     " is not divisible by patch size " + std::to_string(patch));
  }

  NoGradGuard guard;
  PseudoLabels out;
  out.patch_scores = model.patch_scores(input, cfg.score_mode);
  const std::size_t g = side / patch, classes = out.patch_scores.dim(1);
  const Tensor grid = reshape(out.patch_scores, {g, g, classes});
  out.bpm_probs = make_probmap(upsample_bilinear(grid, height, width), cfg.bg_threshold);
  out.bpm = argmax_mask(out.bpm_probs);
  if (cfg.crf) out.refined = argmax_mask(crf_refine(out.bpm_probs, image, cfg.crf_params));
  return out;
}

LoadedModel load_model(const fs::path& checkpoint) {
  const CheckpointData data = read_checkpoint(checkpoint);
  Config cfg = Config::parse(data.config_text);
  Model model = Model::init(cfg.model, cfg.train.seed);
  load_into(data, model.parameters());
  return {cfg, model};
}

namespace {

void write_scores(const fs::path& path, const Tensor& z) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17);
  for (std::size_t i = 0; i < z.dim(0); ++i) {
    for (std::size_t c = 0; c < z.dim(1); ++c) out << (c ? "\t" : "") << z.at(i, c);
    out << '\n';
  }
}

}  // namespace

void infer_dataset(const Model& model, const DatasetManifest& manifest,
                   const InferConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir / "bpm");
  fs::create_directories(out_dir / "scores");
  if (cfg.crf) fs::create_directories(out_dir / "crf");
  write_palette(out_dir / "palette.txt", manifest.class_names);
  for (const auto& r : manifest.records) {
    const Tensor image = image_to_tensor(read_image(r.image));
    const PseudoLabels labels = infer_image(model, image, cfg);
    write_mask(out_dir / "bpm" / (r.id + ".png"), labels.bpm);
    if (labels.refined) write_mask(out_dir / "crf" / (r.id + ".png"), *labels.refined);
    write_scores(out_dir / "scores" / (r.id + ".tsv"), labels.patch_scores);
  }
}

MIoUReport evaluate_dir(const fs::path& pred_dir, const DatasetManifest& manifest) {
  MIoUAccumulator acc(manifest.num_classes() + 1);
  for (const auto& r : manifest.records) {
    if (!r.mask) continue;
    const fs::path pred = pred_dir / (r.id + ".png");
    if (!fs::exists(pred)) throw IoError("missing prediction " + pred.string());
    acc.add(read_mask(pred), read_mask(*r.mask));
  }
  return acc.report();
}

SegmentationScores evaluate_model(const Model& model, const DatasetManifest& manifest,
                                  const InferConfig& cfg) {
  MIoUAccumulator bpm(manifest.num_classes() + 1), refined(manifest.num_classes() + 1);
  for (const auto& r : manifest.records) {
    if (!r.mask) continue;
    const PseudoLabels labels = infer_image(model, image_to_tensor(read_image(r.image)), cfg);
    const PseudoMask gt = read_mask(*r.mask);
    bpm.add(labels.bpm, gt);
    if (labels.refined) refined.add(*labels.refined, gt);
  }
  SegmentationScores out{bpm.report(), std::nullopt};
  if (cfg.crf) out.refined = refined.report();
  return out;
}

}  // namespace wsss
