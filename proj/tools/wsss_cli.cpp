#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>

#include "wsss/ablate.hpp"
#include "wsss/config.hpp"
#include "wsss/dataset.hpp"
#include "wsss/diagnostics.hpp"
#include "wsss/error.hpp"
#include "wsss/infer.hpp"
#include "wsss/train.hpp"

namespace fs = std::filesystem;
using namespace wsss;

namespace {

// Exit codes by error category; 1 is left for CLI usage errors.
int exit_code(const std::string& category) {
  static const std::map<std::string, int> codes = {
      {"shape", 10}, {"contract", 11}, {"io", 12}, {"config", 13}, {"data", 14}, {"numeric", 15}};
  const auto it = codes.find(category);
  return it == codes.end() ? 19 : it->second;
}

// Registers one "--section.key" flag per config key, plus the bare key with
// dashes ("--batch-size") as an alias.
class ConfigFlags {
 public:
  void attach(CLI::App* app, const std::vector<std::string>& sections = {}) {
    for (const auto& key : Config::keys()) {
      const std::string section = key.substr(0, key.find('.'));
      if (!sections.empty() &&
          std::find(sections.begin(), sections.end(), section) == sections.end()) {
        continue;
      }
      std::string bare = key.substr(key.find('.') + 1);
      for (char& c : bare)
        if (c == '_') c = '-';
      std::string names = "--" + key;
      if (key.rfind("crf.", 0) == 0) bare = "crf-" + bare;
      names += ",--" + bare;
      app->add_option(names, values_[key], "config key " + key);
    }
    app->add_option("--config", config_path_, "config file ([section] key = value)");
  }

  // Only flags given on the command line change cfg.
  void apply(Config& cfg) const {
    if (!config_path_.empty()) cfg = Config::load(config_path_);
    apply_env_overrides(cfg);
    for (const auto& [key, value] : values_) {
      if (!value.empty()) cfg.set(key, value);
    }
    cfg.validate();
  }

  Config resolve() const {
    Config cfg;
    apply(cfg);
    return cfg;
  }

 private:
  std::map<std::string, std::string> values_;
  std::string config_path_;
};

void print_report(const MIoUReport& r, const std::vector<std::string>& class_names,
                  std::ostream& out) {
  out << std::fixed << std::setprecision(4);
  for (std::size_t c = 0; c < r.num_labels(); ++c) {
    const std::string name = c == 0 ? "background" : class_names[c - 1];
    out << c << '\t' << name << '\t';
    if (r.iou(c) < 0) out << "n/a";
    else out << r.iou(c);
    out << '\t' << r.intersection[c] << '\t' << r.union_[c] << '\n';
  }
  out << "mIoU\t" << r.miou() << "\nimages\t" << r.images << "\nskipped\t" << r.skipped << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised segmentation with class-conditioned patch fusion"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic shapes dataset");
  SyntheticSpec spec;
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", spec.seed);
  gen->add_option("--count", spec.count);
  gen->add_option("--image-size", spec.image_size);
  gen->add_option("--classes", spec.num_classes);
  gen->add_option("--format", spec.format)->check(CLI::IsMember({"ppm", "png"}));

  // train
  auto* train_cmd = app.add_subcommand("train", "train on a dataset manifest");
  ConfigFlags train_flags;
  train_flags.attach(train_cmd);
  std::string train_data, train_out, voc_set = "train";
  bool train_voc = false;
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "run directory")->required();
  train_cmd->add_flag("--voc", train_voc, "read --data as a VOC layout");
  train_cmd->add_option("--image-set", voc_set, "VOC image-set name");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "emit pseudo masks for a dataset");
  ConfigFlags infer_flags;
  infer_flags.attach(infer_cmd, {"infer", "crf"});
  std::string ckpt, infer_data, infer_out;
  infer_cmd->add_option("--checkpoint", ckpt)->required();
  infer_cmd->add_option("--data", infer_data, "dataset directory")->required();
  infer_cmd->add_option("--out", infer_out)->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "mIoU of predicted masks");
  std::string pred_dir, eval_data;
  eval_cmd->add_option("--pred", pred_dir, "directory of <id>.png masks")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  std::size_t gc_seeds = 20;
  std::uint64_t gc_first = 1;
  gc_cmd->add_option("--seeds", gc_seeds);
  gc_cmd->add_option("--first-seed", gc_first);

  // ablate
  auto* ab_cmd = app.add_subcommand("ablate", "component and pooling ablations");
  ConfigFlags ab_flags;
  ab_flags.attach(ab_cmd);
  std::string ab_train, ab_eval, ab_out;
  std::vector<std::uint64_t> ab_seeds = {1, 2, 3};
  ab_cmd->add_option("--train-data", ab_train)->required();
  ab_cmd->add_option("--eval-data", ab_eval)->required();
  ab_cmd->add_option("--out", ab_out, "results table (.tsv)")->required();
  ab_cmd->add_option("--seeds", ab_seeds)->delimiter(',');

  // bench-scaling
  auto* bench_cmd = app.add_subcommand("bench-scaling", "fusion vs attention timing");
  std::vector<std::size_t> lengths = {1024, 2048, 4096};
  std::size_t repeats = 5;
  bench_cmd->add_option("--lengths", lengths)->delimiter(',');
  bench_cmd->add_option("--repeats", repeats);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const DatasetManifest m = gen_synthetic(gen_out, spec);
      std::cout << "wrote " << m.records.size() << " images to " << gen_out << "\n";
    } else if (train_cmd->parsed()) {
      Config cfg = train_flags.resolve();
      const DatasetManifest m =
          train_voc ? load_voc_manifest(train_data, voc_set) : read_manifest(train_data);
      if (m.num_classes() != cfg.model.num_classes) {
        throw ConfigError("dataset has " + std::to_string(m.num_classes()) +
                          " classes but model.num_classes is " +
                          std::to_string(cfg.model.num_classes));
      }
      const TrainResult r = train(cfg, training_view(m), fs::path(train_out));
      const EpochStats& last = r.history.back();
      std::cout << "epochs " << r.history.size() << " loss " << last.loss << " accuracy "
                << last.accuracy << "\n";
    } else if (infer_cmd->parsed()) {
      LoadedModel lm = load_model(ckpt);
      // Inference flags override what the checkpoint was trained with.
      Config cfg = lm.config;
      infer_flags.apply(cfg);
      const DatasetManifest m = read_manifest(infer_data);
      infer_dataset(lm.model, m, cfg.infer, infer_out);
      std::cout << "wrote masks for " << m.records.size() << " images to " << infer_out << "\n";
    } else if (eval_cmd->parsed()) {
      const DatasetManifest m = read_manifest(eval_data);
      const MIoUReport r = evaluate_dir(pred_dir, m);
      if (r.skipped) std::cerr << "warning: skipped " << r.skipped << " size-mismatched masks\n";
      print_report(r, m.class_names, std::cout);
    } else if (gc_cmd->parsed()) {
      bool all = true;
      for (std::uint64_t s = gc_first; s < gc_first + gc_seeds; ++s) {
        for (const auto& c : gradcheck_suite(s)) {
          if (!c.report.passed) {
            all = false;
            std::cout << "FAIL seed " << s << ' ' << c.name << " max_rel " << c.report.max_rel_error
                      << " max_abs " << c.report.max_abs_error << "\n";
          }
        }
      }
      std::cout << (all ? "gradcheck passed" : "gradcheck failed") << " over " << gc_seeds
                << " seeds\n";
      return all ? 0 : exit_code("numeric");
    } else if (ab_cmd->parsed()) {
      const Config cfg = ab_flags.resolve();
      const auto rows = run_ablation(cfg, read_manifest(ab_train), read_manifest(ab_eval),
                                     ab_seeds, true);
      write_ablation_table(ab_out, rows, ab_seeds);
      for (const auto& r : rows) std::cout << r.group << '/' << r.name << '\t' << r.mean() << "\n";
    } else if (bench_cmd->parsed()) {
      std::cout << "patches\tfusion_s\tattention_s\n";
      for (const auto& p : bench_scaling(lengths, repeats)) {
        std::cout << p.patches << '\t' << p.fusion_seconds << '\t' << p.attention_seconds << "\n";
      }
    }
  } catch (const Error& e) {
    std::cerr << "error[" << e.category() << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 19;
  }
  return 0;
}
