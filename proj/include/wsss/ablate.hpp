#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsss/config.hpp"
#include "wsss/dataset.hpp"

namespace wsss {

struct AblationRow {
  std::string group;  // "components" or "pooling"
  std::string name;
  bool class_token = true;
  bool context_fusion = true;
  Pooling pooling = Pooling::kTopK;
  std::vector<double> miou;  // one per seed

  double mean() const;
};

// The 2x2 on/off matrix over class tokens and contextual fusion, then the
// avg / max / top-k pooling rows on the full model.
std::vector<AblationRow> ablation_plan();

// Trains and scores every row once per seed (BPM mIoU on the evaluation
// manifest). Configurations shared between rows are trained once.
std::vector<AblationRow> run_ablation(const Config& base, const DatasetManifest& train_set,
                                      const DatasetManifest& eval_set,
                                      const std::vector<std::uint64_t>& seeds,
                                      bool verbose = false);

// Tab-separated table with a header row: group, row, token, fusion,
// pooling, one column per seed, mean.
void write_ablation_table(const std::filesystem::path& path,
                          const std::vector<AblationRow>& rows,
                          const std::vector<std::uint64_t>& seeds);

}  // namespace wsss
