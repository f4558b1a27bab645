#include "wsss/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "wsss/adam.hpp"
#include "wsss/checkpoint.hpp"
#include "wsss/error.hpp"
#include "wsss/image_io.hpp"
#include "wsss/ops.hpp"
#include "wsss/rng.hpp"

namespace wsss {

namespace fs = std::filesystem;

void LabelStats::add(double score, bool positive) {
  const bool predicted = score > 0.5;
  if (predicted && positive) ++tp;
  else if (predicted) ++fp;
  else if (positive) ++fn;
  else ++tn;
}

double LabelStats::precision() const {
  return tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
}

double LabelStats::recall() const {
  return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
}

double LabelStats::accuracy() const {
  const std::size_t total = tp + fp + fn + tn;
  return total ? static_cast<double>(tp + tn) / static_cast<double>(total) : 0.0;
}

LoadedSet load_training_set(const std::vector<TrainingRecord>& records,
                            const ModelConfig& cfg) {
  LoadedSet set;
  const std::size_t size = cfg.vit.image_size;
  for (const auto& r : records) {
    Tensor img = image_to_tensor(read_image(r.image));
    if (img.dim(0) != size || img.dim(1) != size) img = resize_image(img, size, size);
    std::vector<double> y(cfg.num_classes, 0.0);
    for (std::size_t c : r.labels) {
      if (c >= cfg.num_classes) {
        throw DataError("image '" + r.id + "' has class id " + std::to_string(c) +
                        " but the model has " + std::to_string(cfg.num_classes) + " classes");
      }
      y[c] = 1.0;
    }
    set.images.push_back(img);
    set.labels.push_back(std::move(y));
  }
  return set;
}

namespace {

void write_loss_log(const fs::path& path, const std::vector<EpochStats>& history) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << "epoch\tlr\tloss\tprecision\trecall\taccuracy\n";
    out << std::setprecision(10);
    for (const auto& e : history) {
      out << e.epoch << '\t' << e.lr << '\t' << e.loss << '\t' << e.precision << '\t'
          << e.recall << '\t' << e.accuracy << '\n';
    }
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

TrainResult train(const Config& cfg, const std::vector<TrainingRecord>& records,
                  const std::optional<fs::path>& out_dir) {
  cfg.validate();
  if (records.empty()) throw DataError("training set is empty");
  const ModelConfig& mc = cfg.model;
  const TrainConfig& tc = cfg.train;
  const LoadedSet data = load_training_set(records, mc);

  TrainResult result{Model::init(mc, tc.seed), {}};
  const ParamList params = result.model.parameters();
  const std::string config_text = cfg.to_text();
  AdamState adam;
  // Shuffling draws from its own stream so that it does not depend on how
  // many values initialisation consumed.
  Rng order_rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.images.size());
  std::iota(order.begin(), order.end(), 0);
  if (out_dir) fs::create_directories(*out_dir);

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = tc.schedule.lr(epoch);
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    LabelStats stats;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      std::vector<Tensor> batch;
      std::vector<double> y;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(data.images[order[i]]);
        const auto& l = data.labels[order[i]];
        y.insert(y.end(), l.begin(), l.end());
      }
      const Tensor labels = Tensor::from({y.size()}, y);
      Tensor scores;
      const Tensor loss = result.model.loss(batch, labels, &scores);
      if (!std::isfinite(loss.item())) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                           "; last good checkpoint kept");
      }
      for (const auto& [name, p] : params) {
        Tensor t = p;
        t.zero_grad();
      }
      backward(loss);
      adam_step(params, adam, lr);
      loss_sum += loss.item() * static_cast<double>(end - start);
      for (std::size_t i = 0; i < y.size(); ++i) stats.add(scores.at(i), y[i] > 0.5);
    }
    result.history.push_back({epoch, lr, loss_sum / static_cast<double>(order.size()),
                              stats.precision(), stats.recall(), stats.accuracy()});
    if (out_dir) {
      save_checkpoint(*out_dir / "model.ckpt", config_text, params);
      write_loss_log(*out_dir / "loss.tsv", result.history);
    }
  }
  return result;
}

LabelStats classify(const Model& model, const LoadedSet& set, std::size_t batch_size) {
  NoGradGuard guard;
  LabelStats stats;
  for (std::size_t start = 0; start < set.images.size(); start += batch_size) {
    const std::size_t end = std::min(set.images.size(), start + batch_size);
    std::vector<Tensor> batch(set.images.begin() + static_cast<std::ptrdiff_t>(start),
                              set.images.begin() + static_cast<std::ptrdiff_t>(end));
    const Tensor scores = model.image_scores(model.stream_logits(batch));
    for (std::size_t i = start; i < end; ++i) {
      for (std::size_t c = 0; c < set.labels[i].size(); ++c) {
        stats.add(scores.at((i - start) * set.labels[i].size() + c), set.labels[i][c] > 0.5);
      }
    }
  }
  return stats;
}

}  // namespace wsss
