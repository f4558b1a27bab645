#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include "wsss/config.hpp"
#include "wsss/dataset.hpp"
#include "wsss/model.hpp"

namespace wsss {

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  // Image-level label metrics at a 0.5 score threshold.
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
};

struct LabelStats {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  void add(double score, bool positive);
  double precision() const;
  double recall() const;
  double accuracy() const;
};

// Images resized to the model input and multi-hot labels, loaded once.
struct LoadedSet {
  std::vector<Tensor> images;
  std::vector<std::vector<double>> labels;
};

LoadedSet load_training_set(const std::vector<TrainingRecord>& records,
                            const ModelConfig& cfg);

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
};

// Minibatch training. With an output directory, writes loss.tsv and a
// checkpoint (model.ckpt) after every epoch; a non-finite loss throws and
// leaves the previous epoch's checkpoint in place.
TrainResult train(const Config& cfg, const std::vector<TrainingRecord>& records,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// Image-level label metrics of a model on a labelled set.
LabelStats classify(const Model& model, const LoadedSet& set, std::size_t batch_size = 16);

}  // namespace wsss
