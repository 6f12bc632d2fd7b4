#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cellpk/graph.hpp"
#include "cellpk/optim.hpp"
#include "cellpk/weights_io.hpp"

namespace cellpk {

struct TrainConfig {
  double learning_rate = 1e-3;
  int max_epochs = 2000;
  int batch_size = 16;
  int early_stop_patience = 10;
  double train_fraction = 0.8;  // training side of the train/validation split
  std::string optimizer = "adam";
  std::string loss = "mse";
  AdamHyper adam;
  std::uint64_t seed = 0;

  /// Throws UsageError on counts < 1, non-positive rates, or unsupported
  /// optimizer/loss names.
  void validate() const;
};

/// In-memory samples at training resolution, planar C x H x W per sample.
class Dataset {
 public:
  Dataset() = default;
  Dataset(int channels, int height, int width) : channels_(channels), height_(height), width_(width) {}

  void add(std::string id, std::span<const float> chw, std::vector<double> labels);
  void append(const Dataset& other);
  Dataset subset(std::span<const std::size_t> indices) const;

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t sample_size() const { return static_cast<std::size_t>(channels_) * height_ * width_; }

  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<double>& labels(std::size_t i) const { return labels_[i]; }
  std::span<const float> sample(std::size_t i) const { return {pixels_.data() + i * sample_size(), sample_size()}; }

  /// Mean of a sample's reference labels, the regression target.
  float target(std::size_t i) const;

  Tensor<float> batch(std::span<const std::size_t> indices) const;
  Tensor<float> targets(std::span<const std::size_t> indices) const;

  /// One vector per reference rater (column), for PK evaluation.
  std::vector<std::vector<double>> label_columns() const;

 private:
  int channels_ = 3;
  int height_ = 0;
  int width_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> pixels_;
  std::vector<std::vector<double>> labels_;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_pk;  // absent when PK is undefined on the validation labels

  bool operator==(const EpochRecord&) const = default;
};

enum class StopReason { early_stopping, max_epochs };

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  StopReason stop_reason = StopReason::max_epochs;

  bool operator==(const TrainLog&) const = default;
};

/// Patience counter on validation loss. An epoch improves only if its loss
/// is strictly below the best so far.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Returns true when this epoch is the new best.
  bool update(int epoch, double loss);
  bool should_stop() const { return epochs_without_improvement_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  int epochs_without_improvement_ = 0;
};

/// Mini-batch Adam on MSE. The training set is reshuffled every epoch from
/// (seed, epoch); dropout masks come from (seed, epoch, batch).
class Trainer {
 public:
  Trainer(ModelGraph& graph, TrainConfig config);

  EpochRecord run_epoch(const Dataset& train, const Dataset& validation);

  /// Runs epochs until early stopping or max_epochs (counted from epoch 1,
  /// including epochs restored from a checkpoint), then restores the
  /// weights of the best validation epoch.
  TrainLog fit(const Dataset& train, const Dataset& validation,
               const std::function<void(const EpochRecord&)>& on_epoch = {});

  int epochs_completed() const { return epochs_completed_; }
  const AdamState<float>& optimizer_state() const { return adam_; }

  /// Weights, optimizer moments, step and epoch counters in CPKW1 form.
  std::vector<NamedTensor> checkpoint() const;
  void restore(const std::vector<NamedTensor>& checkpoint);
  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

 private:
  ModelGraph& graph_;
  TrainConfig config_;
  AdamState<float> adam_;
  int epochs_completed_ = 0;
};

TrainLog train(ModelGraph& graph, const Dataset& train_set, const Dataset& validation, const TrainConfig& config,
               const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Eval-mode predictions, computed in fixed-size chunks.
std::vector<float> predict(const ModelGraph& graph, const Dataset& data, std::size_t chunk = 64);

/// Eval-mode MSE over the whole dataset.
double evaluate_loss(const ModelGraph& graph, const Dataset& data);

std::string_view stop_reason_name(StopReason r);

}  // namespace cellpk
