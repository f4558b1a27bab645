#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsss/head.hpp"
#include "wsss/pseudo_label.hpp"
#include "wsss/vit.hpp"

namespace wsss {

struct ModelConfig {
  ViTConfig vit;
  std::size_t num_classes = 3;
  std::size_t token_dim = 8;
  // 0 selects (embed_dim + token_dim) / 2.
  std::size_t hidden_dim = 0;
  bool use_class_token = true;
  bool use_context_fusion = true;
  Pooling pooling = Pooling::kTopK;
  std::size_t topk = 4;

  std::size_t stream_width() const;
  std::size_t lstm_hidden() const;
  void validate() const;
};

// Two-stage schedule: warm_lr for the first warm_epochs epochs, then main_lr.
struct LrSchedule {
  double warm_lr = 1e-3;
  std::size_t warm_epochs = 2;
  double main_lr = 1e-4;

  double lr(std::size_t epoch) const { return epoch < warm_epochs ? warm_lr : main_lr; }
};

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t epochs = 200;
  LrSchedule schedule;
  std::uint64_t seed = 7;
};

struct InferConfig {
  double bg_threshold = 0.45;
  // 0 keeps the native image size.
  std::size_t infer_size = 0;
  bool crf = true;
  ScoreMode score_mode = ScoreMode::kSigmoid;
  CrfConfig crf_params;
};

// Line-oriented "key = value" text with [section] headers: [model], [train],
// [infer], [crf]. '#' starts a comment.
struct Config {
  ModelConfig model;
  TrainConfig train;
  InferConfig infer;

  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;

  // Sets "section.key" from its textual value.
  void set(const std::string& dotted_key, const std::string& value);
  static std::vector<std::string> keys();
  void validate() const;
};

// Applies the seed override from the environment, if set.
inline constexpr const char* kSeedEnvVar = "WSSS_SEED";
void apply_env_overrides(Config& cfg);

}  // namespace wsss
