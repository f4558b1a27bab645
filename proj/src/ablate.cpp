#include "wsss/ablate.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <tuple>

#include "wsss/error.hpp"
#include "wsss/infer.hpp"
#include "wsss/train.hpp"

namespace wsss {

double AblationRow::mean() const {
  if (miou.empty()) return 0.0;
  double s = 0.0;
  for (double v : miou) s += v;
  return s / static_cast<double>(miou.size());
}

std::vector<AblationRow> ablation_plan() {
  return {
      {"components", "baseline", false, false, Pooling::kTopK, {}},
      {"components", "class_token", true, false, Pooling::kTopK, {}},
      {"components", "context_fusion", false, true, Pooling::kTopK, {}},
      {"components", "full", true, true, Pooling::kTopK, {}},
      {"pooling", "avg", true, true, Pooling::kAverage, {}},
      {"pooling", "max", true, true, Pooling::kMax, {}},
      {"pooling", "topk", true, true, Pooling::kTopK, {}},
  };
}

std::vector<AblationRow> run_ablation(const Config& base, const DatasetManifest& train_set,
                                      const DatasetManifest& eval_set,
                                      const std::vector<std::uint64_t>& seeds, bool verbose) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  const auto records = training_view(train_set);
  InferConfig icfg = base.infer;
  icfg.crf = false;
  std::map<std::tuple<bool, bool, Pooling, std::uint64_t>, double> cache;
  std::vector<AblationRow> rows = ablation_plan();
  for (auto& row : rows) {
    for (std::uint64_t seed : seeds) {
      const auto key = std::make_tuple(row.class_token, row.context_fusion, row.pooling, seed);
      auto it = cache.find(key);
      if (it == cache.end()) {
        Config cfg = base;
        cfg.model.use_class_token = row.class_token;
        cfg.model.use_context_fusion = row.context_fusion;
        cfg.model.pooling = row.pooling;
        cfg.train.seed = seed;
        const TrainResult trained = train(cfg, records);
        const double miou = evaluate_model(trained.model, eval_set, icfg).bpm.miou();
        it = cache.emplace(key, miou).first;
        if (verbose) {
          std::cerr << "ablate " << row.group << "/" << row.name << " seed " << seed
                    << " mIoU " << miou << "\n";
        }
      }
      row.miou.push_back(it->second);
    }
  }
  return rows;
}

void write_ablation_table(const std::filesystem::path& path,
                          const std::vector<AblationRow>& rows,
                          const std::vector<std::uint64_t>& seeds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "group\trow\tclass_token\tcontext_fusion\tpooling";
  for (std::uint64_t s : seeds) out << "\tseed" << s;
  out << "\tmean\n" << std::fixed << std::setprecision(6);
  for (const auto& r : rows) {
    out << r.group << '\t' << r.name << '\t' << (r.class_token ? "on" : "off") << '\t'
        << (r.context_fusion ? "on" : "off") << '\t' << to_string(r.pooling);
    for (double v : r.miou) out << '\t' << v;
    out << '\t' << r.mean() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace wsss
