#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "wsss/adam.hpp"
#include "wsss/checkpoint.hpp"
#include "wsss/config.hpp"
#include "wsss/dataset.hpp"
#include "wsss/error.hpp"
#include "wsss/image_io.hpp"
#include "wsss/infer.hpp"
#include "wsss/metrics.hpp"
#include "wsss/ops.hpp"
#include "wsss/rng.hpp"
#include "wsss/train.hpp"

using namespace wsss;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wsss_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Config tiny_config() {
  Config cfg;
  cfg.model.vit.image_size = 16;
  cfg.model.vit.patch_size = 8;
  cfg.model.vit.embed_dim = 8;
  cfg.model.vit.num_blocks = 1;
  cfg.model.token_dim = 2;
  cfg.model.num_classes = 2;
  cfg.model.topk = 2;
  cfg.train.batch_size = 4;
  cfg.train.epochs = 1;
  return cfg;
}

PseudoMask random_mask(std::size_t h, std::size_t w, std::size_t labels, Rng& rng, bool ignore) {
  PseudoMask m{h, w, std::vector<std::uint8_t>(h * w)};
  for (auto& v : m.labels) {
    v = static_cast<std::uint8_t>(rng.uniform_int(0, static_cast<std::int64_t>(labels) - 1));
    if (ignore && rng.uniform() < 0.1) v = kIgnoreLabel;
  }
  return m;
}

}  // namespace

// ---- optimiser and schedule ----

TEST(Adam, ZeroGradientsLeaveParametersAndAdvanceTheStep) {
  Tensor p = Tensor::from({3}, {1, 2, 3}, true);
  backward(sum(scale(p, 0.0)));
  AdamState st;
  adam_step({{"p", p}}, st, 1e-3);
  EXPECT_EQ(st.step, 1u);
  EXPECT_EQ(std::vector<double>(p.values().begin(), p.values().end()), (std::vector<double>{1, 2, 3}));
}

TEST(Adam, FirstStepMovesByTheLearningRate) {
  Tensor p = Tensor::from({1}, {0.5}, true);
  backward(sum(p));
  AdamState st;
  adam_step({{"p", p}}, st, 1e-3);
  // m_hat = 1, v_hat = 1: update = lr / (1 + eps).
  EXPECT_NEAR(p.item(), 0.5 - 1e-3 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, ConvergesOnAQuadratic) {
  Tensor x = Tensor::from({1}, {4.0}, true);
  AdamState st;
  for (int i = 0; i < 3000; ++i) {
    x.zero_grad();
    const Tensor d = add_scalar(x, -1.5);
    backward(sum(mul(d, d)));
    adam_step({{"x", x}}, st, 0.01);
  }
  EXPECT_NEAR(x.item(), 1.5, 1e-3);
}

TEST(Adam, NonFiniteGradientAbortsNamingTheParameter) {
  Tensor a = Tensor::from({1}, {1.0}, true), b = Tensor::from({1}, {1.0}, true);
  backward(sum(add(a, b)));
  Tensor nan_src = Tensor::from({1}, {std::nan("")});
  backward(sum(mul(b, nan_src)));
  AdamState st;
  try {
    adam_step({{"first", a}, {"second", b}}, st, 1e-3);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("second"), std::string::npos);
  }
  EXPECT_EQ(a.item(), 1.0);
}

TEST(LrScheduleTest, WarmThenMain) {
  const LrSchedule s;
  EXPECT_EQ(s.lr(0), 1e-3);
  EXPECT_EQ(s.lr(1), 1e-3);
  EXPECT_EQ(s.lr(2), 1e-4);
  EXPECT_EQ(s.lr(150), 1e-4);
}

// ---- config and checkpoints ----

TEST(ConfigTest, TextRoundTripAndErrors) {
  Config cfg;
  cfg.set("model.topk", "3");
  cfg.set("train.main_lr", "2.5e-5");
  cfg.set("infer.score_mode", "softmax");
  cfg.set("crf.iterations", "4");
  const Config back = Config::parse(cfg.to_text());
  EXPECT_EQ(back.to_text(), cfg.to_text());
  EXPECT_EQ(back.model.topk, 3u);
  EXPECT_EQ(back.train.schedule.main_lr, 2.5e-5);
  EXPECT_THROW(Config::parse("[model]\nnope = 1\n"), ConfigError);
  EXPECT_THROW(Config::parse("[model]\ntopk = -1\n"), ConfigError);
  EXPECT_THROW(Config::parse("topk = 1\n"), ConfigError);
  EXPECT_THROW(Config::parse("[model]\ntopk = 100\n"), ConfigError);
  EXPECT_THROW(Config::parse("[train]\nbatch_size = 0\n"), ConfigError);
  EXPECT_EQ(Config::parse("# comment\n[train]\nepochs = 5  # trailing\n").train.epochs, 5u);
}

TEST(ConfigTest, SeedEnvironmentOverride) {
  Config cfg;
  setenv(kSeedEnvVar, "1234", 1);
  apply_env_overrides(cfg);
  unsetenv(kSeedEnvVar);
  EXPECT_EQ(cfg.train.seed, 1234u);
}

TEST(Checkpoint, SaveLoadForwardIsBitIdentical) {
  const fs::path dir = scratch("ckpt");
  const Config cfg = tiny_config();
  const Model a = Model::init(cfg.model, 3);
  Rng rng(4);
  std::vector<double> v(16 * 16 * 3);
  for (double& x : v) x = rng.uniform();
  const Tensor img = Tensor::from({16, 16, 3}, v);
  save_checkpoint(dir / "m.ckpt", cfg.to_text(), a.parameters());
  const LoadedModel b = load_model(dir / "m.ckpt");
  EXPECT_EQ(b.config.to_text(), cfg.to_text());
  const Tensor la = a.stream_logits({img}), lb = b.model.stream_logits({img});
  for (std::size_t i = 0; i < la.numel(); ++i) EXPECT_EQ(la.at(i), lb.at(i));
  const std::string bytes = slurp(dir / "m.ckpt");
  EXPECT_EQ(bytes.substr(0, 8), "WSSSCKPT");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1u);
  std::ofstream(dir / "cut.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  EXPECT_THROW(read_checkpoint(dir / "cut.ckpt"), IoError);
  Config other = cfg;
  other.model.vit.embed_dim = 16;
  EXPECT_THROW(load_into(read_checkpoint(dir / "m.ckpt"), Model::init(other.model, 1).parameters()),
               DataError);
  fs::remove_all(dir);
}

// ---- datasets ----

TEST(Synthetic, SeedDeterminesEveryByte) {
  const fs::path a = scratch("syn_a"), b = scratch("syn_b");
  SyntheticSpec spec;
  spec.count = 6;
  spec.seed = 9;
  gen_synthetic(a, spec);
  gen_synthetic(b, spec);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / fs::relative(e.path(), a))) << e.path();
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Synthetic, LabelBalanceAndMaskAgreement) {
  const fs::path dir = scratch("syn_bal");
  SyntheticSpec spec;
  spec.count = 100;
  spec.num_classes = 2;
  spec.seed = 21;
  spec.format = "png";
  const DatasetManifest m = gen_synthetic(dir, spec);
  std::vector<std::size_t> count(2, 0);
  for (const auto& r : m.records) {
    EXPECT_GE(r.labels.size(), 1u);
    EXPECT_LE(r.labels.size(), 3u);
    for (std::size_t c : r.labels) ++count[c];
    std::set<std::size_t> in_mask;
    for (auto v : read_mask(*r.mask).labels)
      if (v) in_mask.insert(v - 1u);
    EXPECT_EQ(in_mask, std::set<std::size_t>(r.labels.begin(), r.labels.end()));
  }
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_GE(count[c] / 100.0, 0.3);
    EXPECT_LE(count[c] / 100.0, 0.7);
  }
  const DatasetManifest back = read_manifest(dir);
  ASSERT_EQ(back.records.size(), 100u);
  EXPECT_EQ(back.records[7].labels, m.records[7].labels);
  EXPECT_EQ(back.records[7].image, m.records[7].image);
  fs::remove_all(dir);
}

TEST(Voc, FixtureEmptySetDuplicatesAndMissingPieces) {
  const fs::path root = scratch("voc");
  fs::create_directories(root / "JPEGImages");
  fs::create_directories(root / "Annotations");
  fs::create_directories(root / "ImageSets" / "Segmentation");
  fs::create_directories(root / "SegmentationClass");
  std::ofstream(root / "labels.txt") << "background\ncat\ndog\n";
  const Image8 px{2, 2, 3, std::vector<std::uint8_t>(12, 100)};
  auto xml = [&](const std::string& id, const std::vector<std::string>& names) {
    std::ofstream out(root / "Annotations" / (id + ".xml"));
    out << "<annotation>\n";
    for (const auto& n : names) out << "  <object>\n    <name>" << n << "</name>\n  </object>\n";
    out << "</annotation>\n";
  };
  for (const char* id : {"a", "b", "c"}) write_image(root / "JPEGImages" / (std::string(id) + ".png"), px);
  xml("a", {"cat"});
  xml("b", {"dog", "cat", "dog"});
  xml("c", {});
  write_mask(root / "SegmentationClass" / "b.png", PseudoMask{2, 2, {0, 1, 2, 255}});

  std::ofstream(root / "ImageSets" / "Segmentation" / "empty.txt") << "";
  EXPECT_TRUE(load_voc_manifest(root, "empty").records.empty());

  std::ofstream(root / "ImageSets" / "Segmentation" / "train.txt") << "a\nb\nc\n";
  const DatasetManifest m = load_voc_manifest(root, "train");
  EXPECT_EQ(m.class_names, (std::vector<std::string>{"cat", "dog"}));
  ASSERT_EQ(m.records.size(), 3u);
  EXPECT_EQ(m.records[0].labels, (std::vector<std::size_t>{0}));
  EXPECT_EQ(m.records[1].labels, (std::vector<std::size_t>{0, 1}));
  EXPECT_TRUE(m.records[2].labels.empty());
  EXPECT_FALSE(m.records[0].mask.has_value());
  EXPECT_TRUE(m.records[1].mask.has_value());

  std::ofstream(root / "ImageSets" / "Segmentation" / "dup.txt") << "a\nb\na\n";
  try {
    load_voc_manifest(root, "dup");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate"), std::string::npos);
  }

  fs::remove_all(root / "JPEGImages");
  fs::remove(root / "labels.txt");
  try {
    load_voc_manifest(root, "train");
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("JPEGImages"), std::string::npos);
    EXPECT_NE(msg.find("labels.txt"), std::string::npos);
  }
  fs::remove_all(root);
}

// ---- metrics ----

TEST(Metrics, IdenticalDisjointAndHandCase) {
  Rng rng(1);
  const PseudoMask a = random_mask(5, 5, 3, rng, false);
  MIoUAccumulator same(3);
  same.add(a, a);
  for (std::size_t c = 0; c < 3; ++c)
    if (same.report().union_[c]) EXPECT_EQ(same.report().iou(c), 1.0);
  EXPECT_EQ(same.report().miou(), 1.0);

  MIoUAccumulator disjoint(2);
  disjoint.add(PseudoMask{1, 4, {1, 1, 0, 0}}, PseudoMask{1, 4, {0, 0, 1, 1}});
  EXPECT_EQ(disjoint.report().iou(1), 0.0);

  // 4x4: a 6-pixel predicted blob against an 8-pixel truth blob sharing 5.
  const PseudoMask pred{4, 4, {0, 1, 1, 0,
                               1, 1, 1, 0,
                               0, 1, 0, 0,
                               0, 0, 0, 0}};
  const PseudoMask gt{4, 4, {0, 1, 1, 0,
                             0, 1, 1, 1,
                             0, 1, 1, 1,
                             0, 0, 0, 0}};
  MIoUAccumulator hand(2);
  hand.add(pred, gt);
  EXPECT_EQ(hand.report().iou(1), 5.0 / 9.0);
}

TEST(Metrics, MatchesPerPixelLoopAndHandlesIgnoreAndMismatch) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t labels = 2 + rng.uniform_int(0, 3);
    const PseudoMask p = random_mask(6, 7, labels, rng, false), g = random_mask(6, 7, labels, rng, true);
    MIoUAccumulator acc(labels);
    acc.add(p, g);
    double total = 0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < labels; ++c) {
      std::size_t inter = 0, uni = 0;
      for (std::size_t i = 0; i < 42; ++i) {
        if (g.labels[i] == kIgnoreLabel) continue;
        const bool in_p = p.labels[i] == c, in_g = g.labels[i] == c;
        inter += in_p && in_g;
        uni += in_p || in_g;
      }
      EXPECT_EQ(acc.report().intersection[c], inter);
      EXPECT_EQ(acc.report().union_[c], uni);
      if (uni) {
        total += static_cast<double>(inter) / static_cast<double>(uni);
        ++counted;
      }
    }
    EXPECT_EQ(acc.report().miou(), total / static_cast<double>(counted));
  }
  MIoUAccumulator acc(2);
  EXPECT_FALSE(acc.add(PseudoMask{2, 2, {0, 0, 0, 0}}, PseudoMask{1, 4, {0, 0, 0, 0}}));
  EXPECT_EQ(acc.report().skipped, 1u);
}

// ---- training and inference ----

class SmallRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch("small_run");
    SyntheticSpec spec;
    spec.count = 8;
    spec.image_size = 16;
    spec.num_classes = 2;
    spec.seed = 5;
    manifest_ = gen_synthetic(dir_ / "data", spec);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }
  static fs::path dir_;
  static DatasetManifest manifest_;
};
fs::path SmallRun::dir_;
DatasetManifest SmallRun::manifest_;

TEST_F(SmallRun, OneEpochWritesOneLogRowAndAReloadableCheckpoint) {
  const Config cfg = tiny_config();
  const TrainResult r = train(cfg, training_view(manifest_), dir_ / "run");
  std::ifstream log(dir_ / "run" / "loss.tsv");
  std::string header, row, extra;
  std::getline(log, header);
  std::getline(log, row);
  EXPECT_EQ(header, "epoch\tlr\tloss\tprecision\trecall\taccuracy");
  EXPECT_EQ(row.substr(0, 2), "0\t");
  EXPECT_FALSE(std::getline(log, extra));
  const LoadedModel lm = load_model(dir_ / "run" / "model.ckpt");
  const Tensor img = image_to_tensor(read_image(manifest_.records[0].image));
  const Tensor a = r.model.stream_logits({img}), b = lm.model.stream_logits({img});
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.at(i), b.at(i));
}

TEST_F(SmallRun, LoggedLearningRateFollowsTheSchedule) {
  Config cfg = tiny_config();
  cfg.train.epochs = 4;
  const TrainResult r = train(cfg, training_view(manifest_));
  ASSERT_EQ(r.history.size(), 4u);
  EXPECT_EQ(r.history[0].lr, 1e-3);
  EXPECT_EQ(r.history[1].lr, 1e-3);
  EXPECT_EQ(r.history[2].lr, 1e-4);
  EXPECT_EQ(r.history[3].lr, 1e-4);
}

TEST_F(SmallRun, TrainingNeverReadsMasks) {
  std::set<fs::path> masks;
  for (const auto& rec : manifest_.records) masks.insert(fs::weakly_canonical(*rec.mask));
  ReadAudit audit;
  train(tiny_config(), training_view(manifest_));
  EXPECT_EQ(audit.paths().size(), manifest_.records.size());
  for (const auto& p : audit.paths()) EXPECT_EQ(masks.count(fs::weakly_canonical(p)), 0u) << p;
}

TEST_F(SmallRun, CrfOffEmitsThePlainArgmax) {
  const Config cfg = tiny_config();
  const Model model = Model::init(cfg.model, 2);
  InferConfig icfg;
  icfg.crf = false;
  const Tensor img = image_to_tensor(read_image(manifest_.records[1].image));
  const PseudoLabels out = infer_image(model, img, icfg);
  EXPECT_FALSE(out.refined.has_value());
  const Tensor grid = reshape(model.patch_scores(img, ScoreMode::kSigmoid), {2, 2, 2});
  EXPECT_EQ(out.bpm, argmax_mask(make_probmap(upsample_bilinear(grid, 16, 16), icfg.bg_threshold)));
  EXPECT_EQ(infer_image(model, img, icfg).bpm, out.bpm);
}

TEST_F(SmallRun, InferenceSizeMustBeDivisibleByThePatch) {
  const Model model = Model::init(tiny_config().model, 2);
  const Tensor img = image_to_tensor(read_image(manifest_.records[0].image));
  InferConfig icfg;
  icfg.infer_size = 20;
  EXPECT_THROW(infer_image(model, img, icfg), ShapeError);
  icfg.infer_size = 24;
  const PseudoLabels out = infer_image(model, img, icfg);
  EXPECT_EQ(out.bpm.height, 16u);
  EXPECT_EQ(out.patch_scores.dim(0), 9u);
  EXPECT_THROW(infer_image(model, Tensor::zeros({12, 12, 3}), InferConfig{}), ShapeError);
}

TEST_F(SmallRun, InferDatasetWritesMasksScoresAndPalette) {
  const Model model = Model::init(tiny_config().model, 2);
  InferConfig icfg;
  const fs::path out = dir_ / "masks";
  infer_dataset(model, manifest_, icfg, out);
  for (const auto& r : manifest_.records) {
    EXPECT_TRUE(fs::exists(out / "bpm" / (r.id + ".png")));
    EXPECT_TRUE(fs::exists(out / "crf" / (r.id + ".png")));
    EXPECT_TRUE(fs::exists(out / "scores" / (r.id + ".tsv")));
  }
  EXPECT_TRUE(fs::exists(out / "palette.txt"));
  const MIoUReport rep = evaluate_dir(out / "bpm", manifest_);
  EXPECT_EQ(rep.images, manifest_.records.size());
}

TEST(Ablation, DisabledComponentsKeepTheOutputShape) {
  Config cfg = tiny_config();
  Rng rng(1);
  std::vector<double> v(16 * 16 * 3);
  for (double& x : v) x = rng.uniform();
  const Tensor img = Tensor::from({16, 16, 3}, v);
  const Shape full = Model::init(cfg.model, 1).stream_logits({img, img}).shape();
  for (bool token : {false, true})
    for (bool fusion : {false, true}) {
      cfg.model.use_class_token = token;
      cfg.model.use_context_fusion = fusion;
      EXPECT_EQ(Model::init(cfg.model, 1).stream_logits({img, img}).shape(), full);
    }
}

// ---- command line ----

TEST(Cli, ExitCodesCarryTheErrorCategory) {
  const fs::path dir = scratch("cli");
  const std::string cli = WSSS_CLI_PATH;
  auto run = [&](const std::string& args) {
    const int status = std::system((cli + " " + args + " > " + (dir / "out.txt").string() + " 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(run("gen --out " + (dir / "d").string() + " --count 4 --image-size 16 --classes 2"), 0);
  EXPECT_EQ(run("eval --pred " + (dir / "none").string() + " --data " + (dir / "d").string()), 12);
  EXPECT_NE(slurp(dir / "out.txt").find("error[io]"), std::string::npos);
  EXPECT_EQ(run("train --data " + (dir / "d").string() + " --out " + (dir / "r").string() +
                " --model.topk 999"), 13);
  EXPECT_EQ(run("train --data " + (dir / "d").string() + " --out " + (dir / "r").string() +
                " --image-size 16 --num-classes 2 --embed-dim 8 --num-blocks 1 --topk 2 --epochs 1"),
            0);
  EXPECT_EQ(run("infer --checkpoint " + (dir / "r" / "model.ckpt").string() + " --data " +
                (dir / "d").string() + " --out " + (dir / "m").string() + " --crf false"),
            0);
  EXPECT_FALSE(fs::exists(dir / "m" / "crf"));
  EXPECT_EQ(run("eval --pred " + (dir / "m" / "bpm").string() + " --data " + (dir / "d").string()), 0);
  EXPECT_NE(slurp(dir / "out.txt").find("mIoU"), std::string::npos);
  EXPECT_EQ(run("infer --checkpoint " + (dir / "r" / "model.ckpt").string() + " --data " +
                (dir / "d").string() + " --out " + (dir / "m2").string() + " --infer-size 20"),
            13);
  fs::remove_all(dir);
}
