#include "cellpk/train.hpp"

#include <algorithm>
#include <numeric>

#include "cellpk/engine.hpp"
#include "cellpk/error.hpp"
#include "cellpk/metric.hpp"
#include "cellpk/random.hpp"

namespace cellpk {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be > 0");
  if (max_epochs < 1) throw UsageError("epochs must be >= 1");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (early_stop_patience < 1) throw UsageError("early_stopping_patience must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("split must leave both sides non-empty");
  if (optimizer != "adam") throw UsageError("unsupported optimizer '" + optimizer + "' (only adam)");
  if (loss != "mse") throw UsageError("unsupported loss '" + loss + "' (only mse)");
}

void Dataset::add(std::string id, std::span<const float> chw, std::vector<double> labels) {
  if (chw.size() != sample_size()) throw DataError("dataset: sample '" + id + "' has the wrong size");
  if (labels.empty()) throw DataError("dataset: sample '" + id + "' has no labels");
  if (!labels_.empty() && labels.size() != labels_.front().size())
    throw DataError("dataset: sample '" + id + "' has a different number of labels");
  ids_.push_back(std::move(id));
  pixels_.insert(pixels_.end(), chw.begin(), chw.end());
  labels_.push_back(std::move(labels));
}

void Dataset::append(const Dataset& other) {
  if (empty() && ids_.empty()) {
    channels_ = other.channels_;
    height_ = other.height_;
    width_ = other.width_;
  }
  if (other.channels_ != channels_ || other.height_ != height_ || other.width_ != width_)
    throw DataError("dataset: cannot append samples of a different resolution");
  for (std::size_t i = 0; i < other.size(); ++i) add(other.ids_[i], other.sample(i), other.labels_[i]);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out(channels_, height_, width_);
  for (auto i : indices) out.add(ids_.at(i), sample(i), labels_[i]);
  return out;
}

float Dataset::target(std::size_t i) const {
  const auto& l = labels_[i];
  return static_cast<float>(std::accumulate(l.begin(), l.end(), 0.0) / static_cast<double>(l.size()));
}

Tensor<float> Dataset::batch(std::span<const std::size_t> indices) const {
  Tensor<float> out({indices.size(), static_cast<std::size_t>(channels_), static_cast<std::size_t>(height_),
                     static_cast<std::size_t>(width_)});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto s = sample(indices[k]);
    std::copy(s.begin(), s.end(), out.data() + k * sample_size());
  }
  return out;
}

Tensor<float> Dataset::targets(std::span<const std::size_t> indices) const {
  Tensor<float> out({indices.size(), 1});
  for (std::size_t k = 0; k < indices.size(); ++k) out[k] = target(indices[k]);
  return out;
}

std::vector<std::vector<double>> Dataset::label_columns() const {
  const std::size_t raters = labels_.empty() ? 0 : labels_.front().size();
  std::vector<std::vector<double>> cols(raters, std::vector<double>(size()));
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t r = 0; r < raters; ++r) cols[r][i] = labels_[i][r];
  return cols;
}

bool EarlyStopping::update(int epoch, double loss) {
  if (loss < best_loss_) {
    best_loss_ = loss;
    best_epoch_ = epoch;
    epochs_without_improvement_ = 0;
    return true;
  }
  ++epochs_without_improvement_;
  return false;
}

std::vector<float> predict(const ModelGraph& graph, const Dataset& data, std::size_t chunk) {
  std::vector<float> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    idx.resize(std::min(chunk, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto values = predict_batch(graph, data.batch(idx));
    out.insert(out.end(), values.begin(), values.end());
  }
  return out;
}

double evaluate_loss(const ModelGraph& graph, const Dataset& data) {
  if (data.empty()) throw DataError("evaluate_loss: empty dataset");
  const auto preds = predict(graph, data);
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = static_cast<double>(preds[i]) - data.target(i);
    acc += d * d;
  }
  return acc / static_cast<double>(preds.size());
}

namespace {

std::optional<double> validation_pk(const Dataset& validation, const std::vector<float>& preds) {
  std::vector<double> p(preds.begin(), preds.end());
  try {
    return average_pk(validation.label_columns(), p).mean_pk;
  } catch (const DataError&) {
    return std::nullopt;
  }
}

}  // namespace

Trainer::Trainer(ModelGraph& graph, TrainConfig config)
    : graph_(graph), config_(std::move(config)), adam_(AdamState<float>::zeros_like(graph.parameters())) {
  config_.validate();
}

EpochRecord Trainer::run_epoch(const Dataset& train_set, const Dataset& validation) {
  if (train_set.empty() || validation.empty()) throw DataError("training requires non-empty train and validation sets");
  const int epoch = epochs_completed_ + 1;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(config_.seed, "shuffle", {static_cast<std::uint64_t>(epoch)}));
  rng.shuffle(order);

  double loss_sum = 0.0;
  const std::size_t bs = static_cast<std::size_t>(config_.batch_size);
  std::uint64_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += bs, ++batch_index) {
    const std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
    const auto inputs = train_set.batch(idx);
    const auto targets = train_set.targets(idx);
    const auto pass = forward(graph_, inputs, Mode::train,
                              derive_seed(config_.seed, "dropout", {static_cast<std::uint64_t>(epoch), batch_index}));
    const auto grads = backward(graph_, pass, targets);
    loss_sum += static_cast<double>(grads.loss) * static_cast<double>(idx.size());
    adam_step(graph_.parameters(), grads.parameters, adam_, config_.learning_rate, config_.adam);
  }

  EpochRecord rec;
  rec.epoch = epoch;
  rec.train_loss = loss_sum / static_cast<double>(order.size());
  const auto preds = predict(graph_, validation);
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = static_cast<double>(preds[i]) - validation.target(i);
    acc += d * d;
  }
  rec.val_loss = acc / static_cast<double>(preds.size());
  rec.val_pk = validation_pk(validation, preds);
  epochs_completed_ = epoch;
  return rec;
}

TrainLog Trainer::fit(const Dataset& train_set, const Dataset& validation,
                      const std::function<void(const EpochRecord&)>& on_epoch) {
  TrainLog log;
  EarlyStopping stopper(config_.early_stop_patience);
  std::vector<Tensor<float>> best;
  while (epochs_completed_ < config_.max_epochs) {
    EpochRecord rec = run_epoch(train_set, validation);
    if (on_epoch) on_epoch(rec);
    if (stopper.update(rec.epoch, rec.val_loss)) {
      best.clear();
      for (const auto& p : graph_.parameters()) best.push_back(p.value);
    }
    log.epochs.push_back(rec);
    if (stopper.should_stop()) {
      log.stop_reason = StopReason::early_stopping;
      break;
    }
  }
  log.best_epoch = stopper.best_epoch();
  if (!best.empty())
    for (std::size_t i = 0; i < best.size(); ++i) graph_.parameters()[i].value = std::move(best[i]);
  return log;
}

std::vector<NamedTensor> Trainer::checkpoint() const {
  std::vector<NamedTensor> out;
  const auto& params = graph_.parameters();
  for (const auto& p : params) out.push_back({p.name, p.value});
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({"adam.m/" + params[i].name, adam_.m[i]});
    out.push_back({"adam.v/" + params[i].name, adam_.v[i]});
  }
  // Counters stored as exact small integers in float32.
  out.push_back({"adam.step", Tensor<float>({1}, {static_cast<float>(adam_.step)})});
  out.push_back({"trainer.epoch", Tensor<float>({1}, {static_cast<float>(epochs_completed_)})});
  return out;
}

void Trainer::restore(const std::vector<NamedTensor>& ckpt) {
  assign_weights(graph_, ckpt, /*allow_extra=*/true);
  auto find = [&](const std::string& name) -> const Tensor<float>& {
    for (const auto& t : ckpt)
      if (t.name == name) return t.value;
    throw DataError("checkpoint: missing tensor '" + name + "'");
  };
  const auto& params = graph_.parameters();
  AdamState<float> state = AdamState<float>::zeros_like(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = find("adam.m/" + params[i].name);
    state.v[i] = find("adam.v/" + params[i].name);
    if (state.m[i].shape() != params[i].value.shape() || state.v[i].shape() != params[i].value.shape())
      throw DataError("checkpoint: optimizer state shape mismatch for '" + params[i].name + "'");
  }
  state.step = static_cast<std::int64_t>(find("adam.step")[0]);
  adam_ = std::move(state);
  epochs_completed_ = static_cast<int>(find("trainer.epoch")[0]);
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const { write_tensor_file(checkpoint(), path); }

void Trainer::load_checkpoint(const std::filesystem::path& path) { restore(read_tensor_file(path)); }

TrainLog train(ModelGraph& graph, const Dataset& train_set, const Dataset& validation, const TrainConfig& config,
               const std::function<void(const EpochRecord&)>& on_epoch) {
  Trainer trainer(graph, config);
  return trainer.fit(train_set, validation, on_epoch);
}

std::string_view stop_reason_name(StopReason r) {
  return r == StopReason::early_stopping ? "early_stopping" : "max_epochs";
}

}  // namespace cellpk
