#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cellpk/augment.hpp"
#include "cellpk/imgio.hpp"
#include "cellpk/metric.hpp"
#include "cellpk/models.hpp"
#include "cellpk/train.hpp"

namespace cellpk {

namespace fs = std::filesystem;

struct ManifestRow {
  std::string id;
  fs::path image_path;  // absolute or relative to the working directory
  std::vector<double> labels;
};

struct Manifest {
  std::vector<std::string> label_names{"label"};
  std::vector<ManifestRow> rows;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
};

enum class ManifestFormat {
  standard,     // id,image_path,label[,label2,...]
  breastpathq,  // slide,rid,y[,y2,...]; images at <image_dir>/<slide>_<rid>.ppm
};

/// Parses and validates a manifest CSV: unique ids, labels in [0,1],
/// referenced files present. Relative image paths resolve against the
/// manifest's directory. Errors name the offending line.
Manifest load_manifest(const fs::path& path, ManifestFormat format = ManifestFormat::standard,
                       const fs::path& image_dir = {});
Manifest parse_manifest(const std::string& text, const fs::path& base_dir, ManifestFormat format,
                        const fs::path& image_dir, const std::string& origin, bool check_files = true);

/// Image paths under the manifest's directory are written relative to it.
void write_manifest(const Manifest& manifest, const fs::path& path);

/// Id of the original image an augmented row was derived from
/// ("x_rot090" -> "x"). Ids without a rotation suffix are their own source.
std::string source_id(const std::string& id);

/// Seeded shuffle of source groups, partitioned so the training side holds
/// round(groups x train_fraction) groups. Rows sharing a source id always
/// land on the same side.
std::pair<Manifest, Manifest> split(const Manifest& manifest, double train_fraction, std::uint64_t seed);

/// Writes the lossless rotation of every row at every angle to
/// <out_dir>/<stem>_rot<ddd>.ppm and returns rows in (row, angle) order
/// with ids <id>_rot<ddd> and labels copied.
Manifest augment_manifest(const Manifest& manifest, const std::vector<RotationAngle>& angles, const fs::path& out_dir,
                          int workers = 1);

/// 0/90/180/270 per source.
Manifest baseline_augment(const Manifest& manifest, const fs::path& out_dir, int workers = 1);

/// Square patch -> planar C x H x W floats at `resolution` (area downscale,
/// bilinear upscale).
std::vector<float> to_planar(const FloatImage& img);
std::vector<float> prepare_input(const Patch& patch, int resolution);

Dataset load_dataset(const Manifest& manifest, int resolution, int workers = 1);

// --- synthetic data -----------------------------------------------------

struct Ellipse {
  double cx = 0, cy = 0;  // pixel coordinates
  double rx = 0, ry = 0;  // semi-axes in pixels
  double angle = 0;       // radians
};

bool ellipse_contains(const Ellipse& e, double x, double y);

struct SyntheticOptions {
  int min_ellipses = 0;
  int max_ellipses = 6;
  double min_radius = 0.06;  // fraction of the image size
  double max_radius = 0.32;
};

struct SyntheticSample {
  Patch image;
  Mask coverage;  // pixels inside at least one malignant ellipse
  std::vector<Ellipse> ellipses;
  double label = 0.0;  // coverage fraction
};

/// Stroma-like textured background with seeded "malignant" ellipses.
SyntheticSample synthesize_patch(std::uint64_t seed, int index, int size, const SyntheticOptions& options = {});

/// Same, but with caller-supplied ellipses.
SyntheticSample render_patch(std::uint64_t seed, int index, int size, std::vector<Ellipse> ellipses);

/// Writes <out_dir>/synth_<index:05>.ppm and <out_dir>/manifest.csv.
Manifest generate_synthetic_dataset(int n, int image_size, std::uint64_t seed, const fs::path& out_dir,
                                    const SyntheticOptions& options = {});

// --- prediction and evaluation files --------------------------------------

struct Prediction {
  std::string id;
  double value = 0.0;
};

std::vector<Prediction> predict_manifest(const ModelGraph& graph, const Manifest& manifest, int workers = 1);
void write_predictions(const std::vector<Prediction>& predictions, const fs::path& path);
std::vector<Prediction> read_predictions(const fs::path& path);

/// Reference labels by id from `id,label1[,label2...]` or a full manifest.
struct ReferenceTable {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> labels;  // per row
};
ReferenceTable read_reference(const fs::path& path);

struct JoinedEvaluation {
  std::vector<std::vector<double>> reference_columns;
  std::vector<double> prediction;
};

/// Aligns predictions to reference rows by id; every reference id needs a prediction.
JoinedEvaluation join_predictions(const ReferenceTable& reference, const std::vector<Prediction>& predictions);

std::vector<double> read_number_column(const fs::path& path);

// --- training sessions ---------------------------------------------------

struct SessionState {
  int session_index = 0;
  std::uint64_t seed = 0;
  std::set<int> ledger;
  int cumulative_rotation_count = 0;
  ModelKind model = ModelKind::tiny_deep;
  int resolution = 256;
  fs::path weights_path;
  fs::path base_manifest;        // un-augmented training sources
  fs::path train_manifest;       // cumulative augmented training set
  fs::path validation_manifest;  // early stopping
  fs::path test_manifest;        // held-out PK; validation is used when empty
  fs::path work_dir;
};

/// key = value lines, then "ledger:" and one angle per line.
void write_session_state(const SessionState& state, const fs::path& path);
SessionState read_session_state(const fs::path& path);

/// Session 0: baseline rotations of the base set become the cumulative
/// training manifest; `weights` (the baseline-trained model) are copied in.
SessionState init_session(const fs::path& base_manifest, const fs::path& validation_manifest,
                          const fs::path& test_manifest, const fs::path& weights, ModelKind model, int resolution,
                          std::uint64_t seed, const fs::path& work_dir, int workers = 1);

/// Datasets kept in memory across sessions so the cumulative set is not
/// reread from disk.
struct SessionCache {
  Dataset train;
  Dataset validation;
  Dataset test;
  bool loaded = false;
};

struct SessionResult {
  SessionState state;
  TrainLog log;
  AveragePk pk;
  std::vector<RotationAngle> angles;
  std::size_t train_rows = 0;
};

/// One session: 30 new angles, their rotations of every base image appended
/// to the cumulative set, weights reloaded into a fresh graph, training,
/// held-out PK, new weights and state persisted in the work directory.
SessionResult run_session(const SessionState& state, const TrainConfig& config, int workers = 1,
                          SessionCache* cache = nullptr);

}  // namespace cellpk
