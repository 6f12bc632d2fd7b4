#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cellpk/augment.hpp"
#include "cellpk/config.hpp"
#include "cellpk/error.hpp"
#include "cellpk/metric.hpp"
#include "cellpk/models.hpp"
#include "cellpk/pipeline.hpp"
#include "cellpk/random.hpp"
#include "cellpk/viz.hpp"
#include "cellpk/weights_io.hpp"

namespace fs = std::filesystem;
using namespace cellpk;

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Training/run settings shared by every subcommand that trains or loads data.
struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> resolution;

  void add_to(CLI::App* cmd, bool training) {
    if (training) {
      cmd->add_option("--config", config_file, "key = value file applied over the preset")->check(CLI::ExistingFile);
      cmd->add_option("--set", overrides, "KEY=VALUE override applied after --config (repeatable)");
    }
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--workers", workers, "worker threads for image loading")->check(CLI::PositiveNumber);
    cmd->add_option("--resolution", resolution, "square model input size in pixels")->check(CLI::Range(16, 4096));
  }

  RunConfig resolve(const std::string& preset_name) const {
    RunConfig rc;
    if (!preset_name.empty()) rc.train = preset(preset_name);
    if (!config_file.empty()) rc.apply(read_key_values(config_file));
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + kv + "'");
      rc.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) rc.train.seed = *seed;
    if (workers) rc.workers = *workers;
    if (resolution) rc.resolution = *resolution;
    rc.train.validate();
    return rc;
  }
};

void log_config(const std::string& command, const RunConfig& rc) {
  std::cerr << "# " << command << " resolved config\n";
  std::istringstream lines(rc.to_string());
  for (std::string line; std::getline(lines, line);) std::cerr << "#   " << line << '\n';
}

void log_epoch(const EpochRecord& r) {
  std::cerr << "epoch " << r.epoch << " train_loss=" << num(r.train_loss) << " val_loss=" << num(r.val_loss);
  if (r.val_pk) std::cerr << " val_pk=" << num(*r.val_pk);
  std::cerr << '\n';
}

void print_log_summary(const TrainLog& log) {
  std::cout << "epochs=" << log.epochs.size() << " best_epoch=" << log.best_epoch
            << " stop=" << stop_reason_name(log.stop_reason);
  if (!log.epochs.empty()) std::cout << " best_val_loss=" << num(log.epochs[log.best_epoch - 1].val_loss);
  std::cout << '\n';
}

ModelGraph load_graph(const fs::path& weights, const std::optional<int>& flag, int fallback) {
  const auto tensors = read_tensor_file(weights);
  if (flag) return graph_from_weights(tensors, *flag);
  if (implied_resolution(tensors)) return graph_from_weights(tensors, std::nullopt);
  return graph_from_weights(tensors, fallback);
}

// Training and validation sets: an explicit validation manifest, or a
// source-grouped split of the training manifest at the configured ratio.
std::pair<Manifest, Manifest> training_manifests(const fs::path& manifest, const std::string& validation,
                                                 const TrainConfig& cfg) {
  Manifest m = load_manifest(manifest);
  if (!validation.empty()) return {std::move(m), load_manifest(validation)};
  return split(m, cfg.train_fraction, derive_seed(cfg.seed, "split"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cellularity regression toolkit: lossless rotation augmentation, two-branch fusion, PK evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic patch dataset with coverage labels");
  int synth_n = 0, synth_size = 64, synth_min = 0, synth_max = 6;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--n", synth_n, "number of patches")->required()->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_size, "patch side in pixels")->check(CLI::Range(8, 4096));
  synth->add_option("--seed", synth_seed, "master seed");
  synth->add_option("--min-ellipses", synth_min, "fewest malignant regions per patch")->check(CLI::NonNegativeNumber);
  synth->add_option("--max-ellipses", synth_max, "most malignant regions per patch")->check(CLI::NonNegativeNumber);
  synth->add_option("--out", synth_out, "output directory")->required();

  // augment
  auto* augment = app.add_subcommand("augment", "write lossless rotations of every manifest image");
  std::string aug_manifest, aug_mode = "baseline", aug_ledger, aug_out;
  std::uint64_t aug_seed = 0;
  int aug_workers = 1;
  augment->add_option("--manifest", aug_manifest, "input manifest CSV")->required()->check(CLI::ExistingFile);
  augment->add_option("--mode", aug_mode, "baseline (0/90/180/270), full360 (1..360) or session (30 new angles)")
      ->check(CLI::IsMember({"baseline", "full360", "session"}));
  augment->add_option("--seed", aug_seed, "master seed (session mode)");
  augment->add_option("--ledger", aug_ledger, "used-angle ledger, read and extended (session mode)");
  augment->add_option("--out", aug_out, "output directory; receives the images and manifest.csv")->required();
  augment->add_option("--workers", aug_workers, "worker threads")->check(CLI::PositiveNumber);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model from scratch");
  std::string tr_manifest, tr_validation, tr_model, tr_preset, tr_out, tr_checkpoint;
  ConfigFlags tr_flags;
  train_cmd->add_option("--manifest", tr_manifest, "training manifest CSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--validation", tr_validation, "validation manifest (default: split --manifest)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--model", tr_model, "tiny-shallow or tiny-deep")
      ->required()
      ->check(CLI::IsMember({"tiny-shallow", "tiny-deep"}));
  train_cmd->add_option("--preset", tr_preset, "deep, shallow or combined")
      ->check(CLI::IsMember({"deep", "shallow", "combined"}));
  train_cmd->add_option("--out", tr_out, "output weights (CPKW1)")->required();
  train_cmd->add_option("--checkpoint", tr_checkpoint, "also write weights plus optimizer state here");
  tr_flags.add_to(train_cmd, true);

  // session
  auto* session = app.add_subcommand("session", "run one augmentation session (30 new angles, warm-started training)");
  std::string se_state, se_manifest, se_preset, se_validation, se_test, se_weights, se_model, se_work;
  ConfigFlags se_flags;
  session->add_option("--state", se_state, "session state file; created on first use")->required();
  session->add_option("--manifest", se_manifest, "un-augmented training sources (first use)");
  session->add_option("--preset", se_preset, "deep, shallow or combined")
      ->check(CLI::IsMember({"deep", "shallow", "combined"}));
  session->add_option("--validation", se_validation, "validation manifest (first use; default: split --manifest)");
  session->add_option("--test", se_test, "held-out manifest for PK (first use; default: validation)");
  session->add_option("--weights", se_weights, "baseline weights (first use)");
  session->add_option("--model", se_model, "architecture of --weights (first use)")
      ->check(CLI::IsMember({"tiny-shallow", "tiny-deep"}));
  session->add_option("--work-dir", se_work, "directory for rotations, manifests and weights (first use)");
  se_flags.add_to(session, true);

  // fuse
  auto* fuse_cmd = app.add_subcommand("fuse", "join two trained models into the parallel architecture");
  std::string fu_a, fu_b, fu_out, fu_manifest, fu_validation, fu_preset = "combined";
  bool fu_finetune = false;
  ConfigFlags fu_flags;
  fuse_cmd->add_option("--a", fu_a, "first branch weights")->required()->check(CLI::ExistingFile);
  fuse_cmd->add_option("--b", fu_b, "second branch weights")->required()->check(CLI::ExistingFile);
  fuse_cmd->add_option("--out", fu_out, "output fused weights")->required();
  fuse_cmd->add_flag("--finetune", fu_finetune, "train the fused model after joining");
  fuse_cmd->add_option("--manifest", fu_manifest, "fine-tuning manifest")->check(CLI::ExistingFile);
  fuse_cmd->add_option("--validation", fu_validation, "fine-tuning validation manifest")->check(CLI::ExistingFile);
  fuse_cmd->add_option("--preset", fu_preset, "fine-tuning preset")->check(CLI::IsMember({"deep", "shallow", "combined"}));
  fu_flags.add_to(fuse_cmd, true);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "predict cellularity for every manifest row");
  std::string pr_weights, pr_manifest, pr_out;
  ConfigFlags pr_flags;
  predict_cmd->add_option("--weights", pr_weights, "model weights")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--manifest", pr_manifest, "manifest CSV")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", pr_out, "predictions CSV (id,prediction)")->required();
  pr_flags.add_to(predict_cmd, false);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "per-rater and mean prediction probability (PK)");
  std::string ev_pred, ev_ref, ev_boot_out;
  int ev_boot = 0;
  std::uint64_t ev_seed = 0;
  evaluate->add_option("--pred", ev_pred, "predictions CSV")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--ref", ev_ref, "reference CSV (id,label1[,...]) or manifest")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--bootstrap", ev_boot, "bootstrap resamples of the mean PK")->check(CLI::NonNegativeNumber);
  evaluate->add_option("--seed", ev_seed, "bootstrap seed");
  evaluate->add_option("--bootstrap-out", ev_boot_out, "write one resampled mean PK per line");

  // ttest
  auto* ttest = app.add_subcommand("ttest", "unpaired two-sample t-test");
  std::string tt_a, tt_b, tt_variant = "welch";
  ttest->add_option("--a", tt_a, "first sample, one number per line")->required()->check(CLI::ExistingFile);
  ttest->add_option("--b", tt_b, "second sample, one number per line")->required()->check(CLI::ExistingFile);
  ttest->add_option("--variant", tt_variant, "welch or student")->check(CLI::IsMember({"welch", "student"}));

  // visualize
  auto* visualize = app.add_subcommand("visualize", "filter activation heatmap of a convolutional layer");
  std::string vi_weights, vi_image, vi_layer, vi_out;
  int vi_filter = 0;
  bool vi_overlay = false;
  double vi_alpha = 0.4;
  std::optional<int> vi_resolution;
  visualize->add_option("--weights", vi_weights, "model weights")->required()->check(CLI::ExistingFile);
  visualize->add_option("--image", vi_image, "probe PPM")->required()->check(CLI::ExistingFile);
  visualize->add_option("--layer", vi_layer, "convolutional layer name")->required();
  visualize->add_option("--filter", vi_filter, "output channel index")->check(CLI::NonNegativeNumber);
  visualize->add_option("--out", vi_out, "output directory")->required();
  visualize->add_flag("--overlay", vi_overlay, "also write the heatmap blended over the probe");
  visualize->add_option("--alpha", vi_alpha, "overlay opacity")->check(CLI::Range(0.0, 1.0));
  visualize->add_option("--resolution", vi_resolution, "model input size")->check(CLI::Range(16, 4096));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*synth) {
      if (synth_max < synth_min) throw UsageError("--max-ellipses must be >= --min-ellipses");
      SyntheticOptions opts;
      opts.min_ellipses = synth_min;
      opts.max_ellipses = synth_max;
      const Manifest m = generate_synthetic_dataset(synth_n, synth_size, synth_seed, synth_out, opts);
      std::cout << "wrote " << m.size() << " patches to " << synth_out << '\n';
    } else if (*augment) {
      const Manifest m = load_manifest(aug_manifest);
      std::vector<RotationAngle> angles;
      std::set<int> ledger;
      if (aug_mode == "baseline") {
        angles = baseline_rotation_angles();
      } else if (aug_mode == "full360") {
        angles = full_rotation_angles();
      } else {
        if (aug_ledger.empty()) throw UsageError("--mode session requires --ledger");
        if (fs::exists(aug_ledger)) ledger = read_angle_ledger(aug_ledger);
        if (ledger.size() % session_angle_count != 0)
          throw DataError("ledger " + aug_ledger + " does not hold whole sessions of 30 angles");
        const int index = static_cast<int>(ledger.size()) / session_angle_count + 1;
        angles = sample_session_angles(aug_seed, index, ledger);
      }
      const Manifest out = augment_manifest(m, angles, aug_out, aug_workers);
      write_manifest(out, fs::path(aug_out) / "manifest.csv");
      if (aug_mode == "session") {
        for (const auto& a : angles) ledger.insert(a.degrees());
        write_angle_ledger(ledger, aug_ledger);
      }
      std::cout << "wrote " << out.size() << " rotations (" << angles.size() << " per source) to " << aug_out << '\n';
    } else if (*train_cmd) {
      const RunConfig rc = tr_flags.resolve(tr_preset);
      log_config("train", rc);
      const auto [train_m, val_m] = training_manifests(tr_manifest, tr_validation, rc.train);
      const Dataset train_set = load_dataset(train_m, rc.resolution, rc.workers);
      const Dataset val_set = load_dataset(val_m, rc.resolution, rc.workers);
      ModelGraph graph = build_model(parse_model_kind(tr_model), rc.resolution, derive_seed(rc.train.seed, "init"));
      Trainer trainer(graph, rc.train);
      const TrainLog log = trainer.fit(train_set, val_set, log_epoch);
      save_weights(graph, tr_out);
      if (!tr_checkpoint.empty()) trainer.save_checkpoint(tr_checkpoint);
      print_log_summary(log);
    } else if (*session) {
      const RunConfig rc = se_flags.resolve(se_preset);
      log_config("session", rc);
      SessionState state;
      if (fs::exists(se_state)) {
        state = read_session_state(se_state);
        if (!se_manifest.empty() &&
            fs::weakly_canonical(se_manifest) != fs::weakly_canonical(state.base_manifest))
          throw UsageError("--manifest differs from the base manifest recorded in " + se_state);
      } else {
        if (se_manifest.empty() || se_weights.empty() || se_model.empty() || se_work.empty())
          throw UsageError("a new session state needs --manifest, --weights, --model and --work-dir");
        fs::path base = se_manifest;
        fs::path val = se_validation;
        if (val.empty()) {
          fs::create_directories(se_work);
          auto [tr, va] = split(load_manifest(se_manifest), rc.train.train_fraction, derive_seed(rc.train.seed, "split"));
          base = fs::path(se_work) / "base_train.csv";
          val = fs::path(se_work) / "base_validation.csv";
          write_manifest(tr, base);
          write_manifest(va, val);
        }
        state = init_session(base, val, se_test, se_weights, parse_model_kind(se_model), rc.resolution,
                             rc.train.seed, se_work, rc.workers);
      }
      const SessionResult r = run_session(state, rc.train, rc.workers);
      write_session_state(r.state, se_state);
      print_log_summary(r.log);
      std::cout << "session=" << r.state.session_index << " train_rows=" << r.train_rows
                << " rotations=" << r.state.cumulative_rotation_count << " pk=" << num(r.pk.mean_pk)
                << " weights=" << r.state.weights_path.generic_string() << '\n';
    } else if (*fuse_cmd) {
      const RunConfig rc = fu_flags.resolve(fu_finetune ? fu_preset : std::string());
      log_config("fuse", rc);
      // A branch without an implied resolution follows the other branch.
      std::optional<int> res = fu_flags.resolution;
      if (!res) res = implied_resolution(read_tensor_file(fu_a));
      if (!res) res = implied_resolution(read_tensor_file(fu_b));
      const ModelGraph a = load_graph(fu_a, res, rc.resolution);
      const ModelGraph b = load_graph(fu_b, res, rc.resolution);
      ModelGraph fused = fuse(a, b, derive_seed(rc.train.seed, "head"));
      if (fu_finetune) {
        if (fu_manifest.empty()) throw UsageError("--finetune requires --manifest");
        const int res = static_cast<int>(fused.input_shape()[1]);
        const auto [train_m, val_m] = training_manifests(fu_manifest, fu_validation, rc.train);
        const TrainLog log = train(fused, load_dataset(train_m, res, rc.workers), load_dataset(val_m, res, rc.workers),
                                   rc.train, log_epoch);
        print_log_summary(log);
      } else if (!fu_manifest.empty() || !fu_validation.empty()) {
        throw UsageError("--manifest and --validation only apply with --finetune");
      }
      save_weights(fused, fu_out);
      std::cout << "wrote " << fu_out << '\n';
    } else if (*predict_cmd) {
      const RunConfig rc = pr_flags.resolve({});
      const ModelGraph graph = load_graph(pr_weights, pr_flags.resolution, rc.resolution);
      const auto preds = predict_manifest(graph, load_manifest(pr_manifest), rc.workers);
      write_predictions(preds, pr_out);
      std::cout << "wrote " << preds.size() << " predictions to " << pr_out << '\n';
    } else if (*evaluate) {
      const ReferenceTable ref = read_reference(ev_ref);
      const JoinedEvaluation j = join_predictions(ref, read_predictions(ev_pred));
      const AveragePk avg = average_pk(j.reference_columns, j.prediction);
      for (std::size_t r = 0; r < avg.per_rater.size(); ++r) {
        const auto& p = avg.per_rater[r];
        std::cout << "rater " << r + 1 << " pk=" << num(p.pk) << " pairs=" << p.n_pairs_considered
                  << " concordant=" << p.concordant << " discordant=" << p.discordant
                  << " pred_ties=" << p.ties_pred_only << '\n';
      }
      std::cout << "mean_pk=" << num(avg.mean_pk) << " n=" << j.prediction.size() << '\n';
      if (ev_boot > 0) {
        auto draws = bootstrap_average_pk(j.reference_columns, j.prediction, ev_boot, ev_seed);
        if (!ev_boot_out.empty()) {
          std::ofstream out(ev_boot_out, std::ios::trunc);
          if (!out) throw DataError("cannot write " + ev_boot_out);
          for (double d : draws) out << num(d) << '\n';
        }
        std::sort(draws.begin(), draws.end());
        auto q = [&](double f) { return draws[static_cast<std::size_t>(f * static_cast<double>(draws.size() - 1) + 0.5)]; };
        std::cout << "bootstrap B=" << ev_boot << " ci95=[" << num(q(0.025)) << ", " << num(q(0.975)) << "]\n";
      } else if (!ev_boot_out.empty()) {
        throw UsageError("--bootstrap-out requires --bootstrap > 0");
      }
    } else if (*ttest) {
      const auto a = read_number_column(tt_a);
      const auto b = read_number_column(tt_b);
      const TTestResult r = unpaired_t_test(a, b, parse_ttest_variant(tt_variant));
      std::cout << "variant=" << tt_variant << " t=" << num(r.t_statistic) << " df=" << num(r.degrees_of_freedom)
                << " p=" << num(r.p_two_tailed) << '\n';
    } else if (*visualize) {
      const ModelGraph graph = load_graph(vi_weights, vi_resolution, 256);
      const Patch probe = read_ppm(vi_image);
      const Heatmap h = activation_heatmap(graph, probe, vi_layer, vi_filter);
      fs::create_directories(vi_out);
      const std::string tag = vi_layer + "_" + std::to_string(vi_filter);
      write_pgm(heatmap_to_gray(h), fs::path(vi_out) / ("heatmap_" + tag + ".pgm"));
      if (vi_overlay) write_ppm(overlay(h, probe, vi_alpha), fs::path(vi_out) / ("overlay_" + tag + ".ppm"));
      std::cout << "wrote heatmap_" << tag << ".pgm to " << vi_out << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
