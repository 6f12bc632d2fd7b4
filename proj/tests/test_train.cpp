#include <doctest.h>

#include "cellpk/error.hpp"
#include "cellpk/models.hpp"
#include "cellpk/pipeline.hpp"
#include "cellpk/train.hpp"

using namespace cellpk;

namespace {

// Sigmoid of an affine map of a constant input: training toward 1 while
// validating against 0 makes validation loss rise every epoch.
ModelGraph affine_model() {
  ModelGraph g;
  g.add_input("in", 1, 2, 2);
  g.add_flatten("flat", "in");
  g.add_dense("out", "flat", 1);
  g.add_sigmoid("sig", "out");
  g.set_output("sig");
  g.initialize_glorot(3);
  return g;
}

Dataset constant_set(double label, int n) {
  Dataset d(1, 2, 2);
  const std::vector<float> x{0.5f, 0.25f, 1.0f, 0.75f};
  for (int i = 0; i < n; ++i) d.add("s" + std::to_string(i), x, {label});
  return d;
}

Dataset synthetic_set(std::uint64_t seed, int n, int res) {
  Dataset d(3, res, res);
  for (int i = 0; i < n; ++i) {
    const auto s = synthesize_patch(seed, i, 32);
    d.add(std::to_string(i), prepare_input(s.image, res), {s.label, std::min(1.0, s.label + 0.05)});
  }
  return d;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.optimizer = "sgd";
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.loss = "mae";
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.train_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("dataset basics") {
  Dataset d = synthetic_set(1, 5, 16);
  CHECK(d.size() == 5);
  CHECK(d.target(0) == doctest::Approx((d.labels(0)[0] + d.labels(0)[1]) / 2));
  const std::vector<std::size_t> idx{4, 1};
  const auto b = d.batch(idx);
  CHECK(b.shape() == Shape{2, 3, 16, 16});
  CHECK(b[0] == d.sample(4)[0]);
  CHECK(d.label_columns().size() == 2);
  CHECK(d.subset(idx).ids() == std::vector<std::string>{"4", "1"});
  CHECK_THROWS_AS(d.add("x", std::vector<float>(3), {0.5}), DataError);
  CHECK_THROWS_AS(d.add("x", std::vector<float>(d.sample_size()), {0.5}), DataError);
  Dataset other(3, 8, 8);
  other.add("y", std::vector<float>(other.sample_size()), {0.1, 0.2});
  CHECK_THROWS_AS(d.append(other), DataError);
}

TEST_CASE("early stopping arithmetic") {
  EarlyStopping s(10);
  for (int e = 1; e <= 11; ++e) {
    s.update(e, static_cast<double>(e));
    CHECK(s.should_stop() == (e == 11));
  }
  CHECK(s.best_epoch() == 1);
  EarlyStopping t(2);
  t.update(1, 1.0);
  t.update(2, 1.0);  // equal is not an improvement
  CHECK_FALSE(t.should_stop());
  t.update(3, 0.5);
  t.update(4, 0.6);
  CHECK_FALSE(t.should_stop());
  t.update(5, 0.6);
  CHECK(t.should_stop());
  CHECK(t.best_epoch() == 3);
}

TEST_CASE("rising validation loss stops after epoch 11 with epoch-1 weights") {
  ModelGraph g = affine_model();
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.max_epochs = 100;
  cfg.batch_size = 4;
  cfg.early_stop_patience = 10;
  std::vector<Tensor<float>> after_first;
  const TrainLog log = train(g, constant_set(1.0, 4), constant_set(0.0, 2), cfg, [&](const EpochRecord& r) {
    if (r.epoch == 1)
      for (const auto& p : g.parameters()) after_first.push_back(p.value);
  });
  REQUIRE(log.epochs.size() == 11);
  for (std::size_t e = 1; e < log.epochs.size(); ++e) CHECK(log.epochs[e].val_loss > log.epochs[e - 1].val_loss);
  CHECK(log.stop_reason == StopReason::early_stopping);
  CHECK(log.best_epoch == 1);
  for (std::size_t i = 0; i < after_first.size(); ++i) CHECK(g.parameters()[i].value == after_first[i]);
}

TEST_CASE("max epochs and determinism") {
  const Dataset tr = synthetic_set(2, 12, 16), va = synthetic_set(3, 4, 16);
  TrainConfig cfg = preset("deep");
  cfg.max_epochs = 3;
  cfg.batch_size = 5;
  cfg.seed = 9;
  ModelGraph a = build_tiny_shallow(3, 16, 16, 1), b = build_tiny_shallow(3, 16, 16, 1);
  const TrainLog la = train(a, tr, va, cfg), lb = train(b, tr, va, cfg);
  CHECK(la == lb);
  CHECK(la.epochs.size() == 3);
  CHECK(la.stop_reason == StopReason::max_epochs);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) CHECK(a.parameters()[i].value == b.parameters()[i].value);
  CHECK(la.epochs[0].val_pk.has_value());
  CHECK(evaluate_loss(a, va) == doctest::Approx(la.epochs[la.best_epoch - 1].val_loss).epsilon(1e-9));
}

TEST_CASE("training rejects empty sets") {
  ModelGraph g = affine_model();
  Trainer t(g, TrainConfig{});
  CHECK_THROWS_AS(t.run_epoch(Dataset(1, 2, 2), constant_set(0.0, 2)), DataError);
}

TEST_CASE("checkpoint restores optimizer state and epoch") {
  ModelGraph g = affine_model();
  TrainConfig cfg;
  cfg.batch_size = 2;
  Trainer t(g, cfg);
  t.run_epoch(constant_set(1.0, 4), constant_set(0.0, 2));
  const auto ckpt = t.checkpoint();
  ModelGraph h = affine_model();
  Trainer u(h, cfg);
  u.restore(ckpt);
  CHECK(u.epochs_completed() == 1);
  CHECK(u.optimizer_state().step == 2);
  CHECK(u.optimizer_state().m[0] == t.optimizer_state().m[0]);
  CHECK_THROWS_AS(u.restore({ckpt.begin(), ckpt.begin() + 2}), DataError);
}

TEST_CASE("stop reason names") {
  CHECK(stop_reason_name(StopReason::early_stopping) == "early_stopping");
  CHECK(stop_reason_name(StopReason::max_epochs) == "max_epochs");
}
