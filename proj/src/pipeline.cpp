#include "cellpk/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cellpk/config.hpp"
#include "cellpk/engine.hpp"
#include "cellpk/error.hpp"
#include "cellpk/parallel.hpp"
#include "cellpk/random.hpp"
#include "cellpk/weights_io.hpp"

namespace cellpk {

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto b = cell.find_first_not_of(" \t");
    const auto e = cell.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

double parse_number(const std::string& cell, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v))
    throw DataError(where + ": '" + cell + "' is not a number");
  return v;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

fs::path relative_to(const fs::path& p, const fs::path& dir) {
  const fs::path abs_p = fs::absolute(p).lexically_normal();
  const fs::path abs_dir = fs::absolute(dir).lexically_normal();
  const fs::path rel = abs_p.lexically_relative(abs_dir);
  if (rel.empty() || *rel.begin() == "..") return abs_p;
  return rel;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

Manifest parse_manifest(const std::string& text, const fs::path& base_dir, ManifestFormat format,
                        const fs::path& image_dir, const std::string& origin, bool check_files) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  Manifest m;
  std::size_t label_start = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!blank(line)) break;
  }
  if (blank(line)) throw DataError(origin + ": empty manifest");
  const auto header = split_csv_line(line);
  if (format == ManifestFormat::standard) {
    if (header.size() < 3 || header[0] != "id" || header[1] != "image_path")
      throw DataError(origin + ":" + std::to_string(line_no) + ": header must be id,image_path,label[,label2,...]");
    label_start = 2;
  } else {
    if (header.size() < 3 || header[0] != "slide" || header[1] != "rid")
      throw DataError(origin + ":" + std::to_string(line_no) + ": header must be slide,rid,y[,...]");
    label_start = 2;
  }
  m.label_names.assign(header.begin() + static_cast<std::ptrdiff_t>(label_start), header.end());

  std::unordered_set<std::string> seen;
  const fs::path images = image_dir.empty() ? base_dir : image_dir;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(cells.size()));
    ManifestRow row;
    if (format == ManifestFormat::standard) {
      row.id = cells[0];
      fs::path p(cells[1]);
      row.image_path = p.is_relative() ? base_dir / p : p;
    } else {
      row.id = cells[0] + "_" + cells[1];
      row.image_path = images / (row.id + ".ppm");
    }
    if (row.id.empty()) throw DataError(where + ": empty id");
    if (!seen.insert(row.id).second) throw DataError(where + ": duplicate id '" + row.id + "'");
    for (std::size_t c = label_start; c < cells.size(); ++c) {
      const double v = parse_number(cells[c], where);
      if (v < 0.0 || v > 1.0) throw DataError(where + ": label " + cells[c] + " outside [0,1]");
      row.labels.push_back(v);
    }
    if (check_files && !fs::exists(row.image_path))
      throw DataError(where + ": image file not found: " + row.image_path.string());
    m.rows.push_back(std::move(row));
  }
  return m;
}

Manifest load_manifest(const fs::path& path, ManifestFormat format, const fs::path& image_dir) {
  return parse_manifest(slurp(path), path.parent_path(), format, image_dir, path.string());
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "id,image_path";
  for (const auto& name : manifest.label_names) out << ',' << name;
  out << '\n';
  for (const auto& row : manifest.rows) {
    out << row.id << ',' << relative_to(row.image_path, dir).generic_string();
    for (double v : row.labels) out << ',' << format_number(v);
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::string source_id(const std::string& id) {
  static const std::regex suffix("_rot[0-9]{3}$");
  std::string out = id;
  while (std::regex_search(out, suffix)) out = std::regex_replace(out, suffix, "");
  return out;
}

std::pair<Manifest, Manifest> split(const Manifest& manifest, double train_fraction, std::uint64_t seed) {
  if (manifest.empty()) throw DataError("split: empty manifest");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("split: ratio must be in (0,1)");
  std::vector<std::string> groups;
  std::unordered_map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const std::string src = source_id(manifest.rows[i].id);
    auto [it, inserted] = members.try_emplace(src);
    if (inserted) groups.push_back(src);
    it->second.push_back(i);
  }
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(groups);
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(groups.size()) * train_fraction));
  if (n_train == 0 || n_train == groups.size())
    throw DataError("split: " + std::to_string(groups.size()) + " source images leave one side empty at ratio " +
                    format_number(train_fraction));
  Manifest train{manifest.label_names, {}};
  Manifest val{manifest.label_names, {}};
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (auto i : members[groups[g]]) (g < n_train ? train : val).rows.push_back(manifest.rows[i]);
  return {std::move(train), std::move(val)};
}

Manifest augment_manifest(const Manifest& manifest, const std::vector<RotationAngle>& angles, const fs::path& out_dir,
                          int workers) {
  if (angles.empty()) throw UsageError("augment: no angles");
  {
    std::set<RotationAngle> unique(angles.begin(), angles.end());
    if (unique.size() != angles.size()) throw UsageError("augment: duplicate angle");
  }
  ensure_dir(out_dir);
  std::unordered_set<std::string> stems;
  for (const auto& row : manifest.rows)
    if (!stems.insert(row.image_path.stem().string()).second)
      throw DataError("augment: two rows share the file stem '" + row.image_path.stem().string() + "'");

  std::vector<std::vector<ManifestRow>> produced(manifest.rows.size());
  parallel_for(manifest.rows.size(), workers, [&](std::size_t i) {
    const ManifestRow& row = manifest.rows[i];
    const Patch source = read_ppm(row.image_path);
    const std::string stem = row.image_path.stem().string();
    for (const auto& angle : angles) {
      const AugmentedPatch aug = rotate_lossless(source, angle, row.id);
      const fs::path file = out_dir / (rotated_name(stem, angle) + ".ppm");
      write_ppm(aug.image, file);
      produced[i].push_back({rotated_name(row.id, angle), file, row.labels});
    }
  });
  Manifest out{manifest.label_names, {}};
  for (auto& rows : produced)
    for (auto& r : rows) out.rows.push_back(std::move(r));
  return out;
}

Manifest baseline_augment(const Manifest& manifest, const fs::path& out_dir, int workers) {
  return augment_manifest(manifest, baseline_rotation_angles(), out_dir, workers);
}

std::vector<float> to_planar(const FloatImage& img) {
  std::vector<float> out(img.data.size());
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < img.channels; ++c) out[c * plane + p] = img.data[p * img.channels + c];
  return out;
}

std::vector<float> prepare_input(const Patch& patch, int resolution) {
  return to_planar(resize_auto(to_float(patch), resolution, resolution));
}

Dataset load_dataset(const Manifest& manifest, int resolution, int workers) {
  std::vector<std::vector<float>> samples(manifest.rows.size());
  parallel_for(manifest.rows.size(), workers,
               [&](std::size_t i) { samples[i] = prepare_input(read_ppm(manifest.rows[i].image_path), resolution); });
  Dataset data(3, resolution, resolution);
  for (std::size_t i = 0; i < samples.size(); ++i) data.add(manifest.rows[i].id, samples[i], manifest.rows[i].labels);
  return data;
}

// --- synthetic data -----------------------------------------------------

bool ellipse_contains(const Ellipse& e, double x, double y) {
  const double dx = x - e.cx;
  const double dy = y - e.cy;
  const double c = std::cos(e.angle);
  const double s = std::sin(e.angle);
  const double u = (c * dx + s * dy) / e.rx;
  const double v = (-s * dx + c * dy) / e.ry;
  return u * u + v * v <= 1.0;
}

SyntheticSample render_patch(std::uint64_t seed, int index, int size, std::vector<Ellipse> ellipses) {
  if (size < 1) throw UsageError("synthetic image size must be >= 1");
  SyntheticSample out;
  out.image = Patch(size, size);
  out.coverage = Mask(size, size, false);
  Rng rng(derive_seed(seed, "synth-texture", {static_cast<std::uint64_t>(index)}));

  // Per-ellipse stain tint.
  std::vector<std::array<double, 3>> tint;
  for (std::size_t k = 0; k < ellipses.size(); ++k)
    tint.push_back({rng.uniform(95, 135), rng.uniform(35, 70), rng.uniform(125, 165)});
  const double fx = rng.uniform(0.05, 0.25), fy = rng.uniform(0.05, 0.25);
  const double px = rng.uniform(0, 2 * std::numbers::pi), py = rng.uniform(0, 2 * std::numbers::pi);

  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      int owner = -1;
      for (std::size_t k = 0; k < ellipses.size(); ++k)
        if (ellipse_contains(ellipses[k], c, r)) {
          owner = static_cast<int>(k);
          break;
        }
      double rgb[3];
      if (owner < 0) {
        const double wave = 0.5 + 0.5 * std::sin(c * fx + px) * std::cos(r * fy + py);
        rgb[0] = 232 - 22 * wave;
        rgb[1] = 184 - 30 * wave;
        rgb[2] = 206 - 14 * wave;
        for (double& v : rgb) v += rng.uniform(-12, 12);
      } else {
        out.coverage.set(r, c, true);
        const auto& t = tint[static_cast<std::size_t>(owner)];
        const bool nucleus = rng.uniform() < 0.18;
        for (int ch = 0; ch < 3; ++ch) rgb[ch] = t[ch] * (nucleus ? 0.55 : 1.0) + rng.uniform(-18, 18);
      }
      for (int ch = 0; ch < 3; ++ch) out.image.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(rgb[ch]), 0L, 255L));
    }
  }
  out.ellipses = std::move(ellipses);
  out.label = static_cast<double>(out.coverage.count()) / (static_cast<double>(size) * size);
  return out;
}

SyntheticSample synthesize_patch(std::uint64_t seed, int index, int size, const SyntheticOptions& options) {
  if (options.min_ellipses < 0 || options.max_ellipses < options.min_ellipses)
    throw UsageError("synthetic: invalid ellipse count range");
  Rng rng(derive_seed(seed, "synth-shapes", {static_cast<std::uint64_t>(index)}));
  const int k = options.min_ellipses +
                static_cast<int>(rng.below(static_cast<std::uint64_t>(options.max_ellipses - options.min_ellipses + 1)));
  std::vector<Ellipse> ellipses;
  for (int i = 0; i < k; ++i) {
    Ellipse e;
    e.cx = rng.uniform(0, size - 1);
    e.cy = rng.uniform(0, size - 1);
    e.rx = rng.uniform(options.min_radius, options.max_radius) * size;
    e.ry = rng.uniform(options.min_radius, options.max_radius) * size;
    e.angle = rng.uniform(0, std::numbers::pi);
    ellipses.push_back(e);
  }
  return render_patch(seed, index, size, std::move(ellipses));
}

Manifest generate_synthetic_dataset(int n, int image_size, std::uint64_t seed, const fs::path& out_dir,
                                    const SyntheticOptions& options) {
  if (n < 1) throw UsageError("synthetic: n must be >= 1");
  ensure_dir(out_dir);
  Manifest m;
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synth_%05d", i);
    const SyntheticSample s = synthesize_patch(seed, i, image_size, options);
    const fs::path file = out_dir / (std::string(name) + ".ppm");
    write_ppm(s.image, file);
    m.rows.push_back({name, file, {s.label}});
  }
  write_manifest(m, out_dir / "manifest.csv");
  return m;
}

// --- prediction and evaluation files --------------------------------------

std::vector<Prediction> predict_manifest(const ModelGraph& graph, const Manifest& manifest, int workers) {
  const int resolution = static_cast<int>(graph.input_shape()[1]);
  constexpr std::size_t chunk = 32;
  const std::size_t n_chunks = (manifest.size() + chunk - 1) / chunk;
  std::vector<Prediction> out(manifest.size());
  parallel_for(n_chunks, workers, [&](std::size_t k) {
    const std::size_t start = k * chunk;
    const std::size_t count = std::min(chunk, manifest.size() - start);
    Tensor<float> batch({count, 3, static_cast<std::size_t>(resolution), static_cast<std::size_t>(resolution)});
    for (std::size_t i = 0; i < count; ++i) {
      const auto planar = prepare_input(read_ppm(manifest.rows[start + i].image_path), resolution);
      std::copy(planar.begin(), planar.end(), batch.data() + i * planar.size());
    }
    const auto values = predict_batch(graph, batch);
    for (std::size_t i = 0; i < count; ++i) out[start + i] = {manifest.rows[start + i].id, values[i]};
  });
  return out;
}

void write_predictions(const std::vector<Prediction>& predictions, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write predictions " + path.string());
  out << "id,prediction\n";
  for (const auto& p : predictions) out << p.id << ',' << format_number(p.value) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<Prediction> read_predictions(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::string line;
  int line_no = 0;
  std::vector<Prediction> out;
  bool header_seen = false;
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto cells = split_csv_line(line);
    if (!header_seen) {
      if (cells.size() != 2 || cells[0] != "id" || cells[1] != "prediction")
        throw DataError(where + ": header must be id,prediction");
      header_seen = true;
      continue;
    }
    if (cells.size() != 2) throw DataError(where + ": expected 2 fields");
    if (!seen.insert(cells[0]).second) throw DataError(where + ": duplicate id '" + cells[0] + "'");
    out.push_back({cells[0], parse_number(cells[1], where)});
  }
  if (!header_seen) throw DataError(path.string() + ": empty prediction file");
  return out;
}

ReferenceTable read_reference(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::string line;
  int line_no = 0;
  ReferenceTable t;
  std::size_t first_label = 1;
  std::size_t columns = 0;
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto cells = split_csv_line(line);
    if (columns == 0) {
      if (cells.size() < 2 || cells[0] != "id") throw DataError(where + ": header must be id,label1[,label2,...]");
      if (cells[1] == "image_path") first_label = 2;
      if (cells.size() <= first_label) throw DataError(where + ": no label columns");
      columns = cells.size();
      continue;
    }
    if (cells.size() != columns) throw DataError(where + ": expected " + std::to_string(columns) + " fields");
    if (!seen.insert(cells[0]).second) throw DataError(where + ": duplicate id '" + cells[0] + "'");
    std::vector<double> labels;
    for (std::size_t c = first_label; c < cells.size(); ++c) labels.push_back(parse_number(cells[c], where));
    t.ids.push_back(cells[0]);
    t.labels.push_back(std::move(labels));
  }
  if (columns == 0) throw DataError(path.string() + ": empty reference file");
  return t;
}

JoinedEvaluation join_predictions(const ReferenceTable& reference, const std::vector<Prediction>& predictions) {
  std::unordered_map<std::string, double> by_id;
  for (const auto& p : predictions) by_id.emplace(p.id, p.value);
  JoinedEvaluation j;
  const std::size_t raters = reference.labels.empty() ? 0 : reference.labels.front().size();
  j.reference_columns.assign(raters, {});
  for (std::size_t i = 0; i < reference.ids.size(); ++i) {
    auto it = by_id.find(reference.ids[i]);
    if (it == by_id.end()) throw DataError("no prediction for reference id '" + reference.ids[i] + "'");
    j.prediction.push_back(it->second);
    for (std::size_t r = 0; r < raters; ++r) j.reference_columns[r].push_back(reference.labels[i][r]);
  }
  return j;
}

std::vector<double> read_number_column(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::string line;
  int line_no = 0;
  std::vector<double> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    auto cells = split_csv_line(line);
    out.push_back(parse_number(cells[0], path.string() + ":" + std::to_string(line_no)));
  }
  return out;
}

// --- training sessions ---------------------------------------------------

void write_session_state(const SessionState& s, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write session state " + path.string());
  out << "session_index = " << s.session_index << '\n'
      << "seed = " << s.seed << '\n'
      << "cumulative_rotation_count = " << s.cumulative_rotation_count << '\n'
      << "model = " << model_kind_name(s.model) << '\n'
      << "resolution = " << s.resolution << '\n'
      << "weights = " << s.weights_path.generic_string() << '\n'
      << "base_manifest = " << s.base_manifest.generic_string() << '\n'
      << "train_manifest = " << s.train_manifest.generic_string() << '\n'
      << "validation_manifest = " << s.validation_manifest.generic_string() << '\n'
      << "test_manifest = " << s.test_manifest.generic_string() << '\n'
      << "work_dir = " << s.work_dir.generic_string() << '\n'
      << "ledger:\n";
  for (int a : s.ledger) out << a << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

SessionState read_session_state(const fs::path& path) {
  const std::string text = slurp(path);
  const auto marker = text.find("ledger:");
  if (marker == std::string::npos) throw DataError(path.string() + ": missing 'ledger:' section");
  SessionState s;
  std::set<std::string> keys;
  for (const auto& e : parse_key_values(text.substr(0, marker), path.string())) {
    keys.insert(e.key);
    const std::string where = path.string() + ":" + std::to_string(e.line);
    try {
      if (e.key == "session_index") s.session_index = std::stoi(e.value);
      else if (e.key == "seed") s.seed = std::stoull(e.value);
      else if (e.key == "cumulative_rotation_count") s.cumulative_rotation_count = std::stoi(e.value);
      else if (e.key == "model") s.model = parse_model_kind(e.value);
      else if (e.key == "resolution") s.resolution = std::stoi(e.value);
      else if (e.key == "weights") s.weights_path = e.value;
      else if (e.key == "base_manifest") s.base_manifest = e.value;
      else if (e.key == "train_manifest") s.train_manifest = e.value;
      else if (e.key == "validation_manifest") s.validation_manifest = e.value;
      else if (e.key == "test_manifest") s.test_manifest = e.value;
      else if (e.key == "work_dir") s.work_dir = e.value;
      else throw DataError(where + ": unknown key '" + e.key + "'");
    } catch (const std::logic_error&) {
      throw DataError(where + ": invalid value '" + e.value + "'");
    }
  }
  for (const char* required : {"session_index", "seed", "model", "weights", "base_manifest", "train_manifest",
                               "validation_manifest", "work_dir"})
    if (!keys.contains(required)) throw DataError(path.string() + ": missing key '" + required + "'");
  std::istringstream ledger(text.substr(marker + 7));
  std::string line;
  while (std::getline(ledger, line)) {
    if (blank(line)) continue;
    try {
      s.ledger.insert(std::stoi(line));
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ": invalid ledger entry '" + line + "'");
    }
  }
  if (s.ledger.size() != static_cast<std::size_t>(s.cumulative_rotation_count) ||
      s.cumulative_rotation_count != session_angle_count * s.session_index)
    throw DataError(path.string() + ": ledger size, rotation count and session index disagree");
  return s;
}

SessionState init_session(const fs::path& base_manifest, const fs::path& validation_manifest,
                          const fs::path& test_manifest, const fs::path& weights, ModelKind model, int resolution,
                          std::uint64_t seed, const fs::path& work_dir, int workers) {
  ensure_dir(work_dir);
  const Manifest base = load_manifest(base_manifest);
  const Manifest baseline = baseline_augment(base, work_dir / "rotations", workers);
  SessionState s;
  s.seed = seed;
  s.model = model;
  s.resolution = resolution;
  s.base_manifest = base_manifest;
  s.validation_manifest = validation_manifest;
  s.test_manifest = test_manifest;
  s.work_dir = work_dir;
  s.train_manifest = work_dir / "train_s000.csv";
  write_manifest(baseline, s.train_manifest);
  s.weights_path = work_dir / "session_000.cpkw";
  // Validates topology before the first session needs it.
  ModelGraph g = build_model(model, resolution, 0);
  load_weights(g, weights);
  save_weights(g, s.weights_path);
  write_angle_ledger(s.ledger, work_dir / "angles.txt");
  return s;
}

SessionResult run_session(const SessionState& state, const TrainConfig& config, int workers, SessionCache* cache) {
  SessionResult result;
  const int index = state.session_index + 1;
  result.angles = sample_session_angles(state.seed, index, state.ledger);

  char tag[16];
  std::snprintf(tag, sizeof tag, "%03d", index);
  const Manifest base = load_manifest(state.base_manifest);
  const Manifest added = augment_manifest(base, result.angles, state.work_dir / "rotations", workers);
  Manifest cumulative = load_manifest(state.train_manifest);
  cumulative.rows.insert(cumulative.rows.end(), added.rows.begin(), added.rows.end());
  const fs::path train_manifest = state.work_dir / (std::string("train_s") + tag + ".csv");
  write_manifest(cumulative, train_manifest);

  ModelGraph graph = build_model(state.model, state.resolution, 0);
  load_weights(graph, state.weights_path);

  SessionCache local;
  SessionCache& data = cache ? *cache : local;
  if (data.loaded) {
    data.train.append(load_dataset(added, state.resolution, workers));
  } else {
    data.train = load_dataset(cumulative, state.resolution, workers);
    data.validation = load_dataset(load_manifest(state.validation_manifest), state.resolution, workers);
    if (!state.test_manifest.empty())
      data.test = load_dataset(load_manifest(state.test_manifest), state.resolution, workers);
    data.loaded = true;
  }

  TrainConfig cfg = config;
  cfg.seed = derive_seed(state.seed, "session-train", {static_cast<std::uint64_t>(index)});
  result.log = train(graph, data.train, data.validation, cfg);

  const Dataset& held_out = data.test.empty() ? data.validation : data.test;
  const auto preds = predict(graph, held_out);
  result.pk = average_pk(held_out.label_columns(), std::vector<double>(preds.begin(), preds.end()));

  SessionState next = state;
  next.session_index = index;
  for (const auto& a : result.angles) next.ledger.insert(a.degrees());
  next.cumulative_rotation_count = state.cumulative_rotation_count + session_angle_count;
  next.train_manifest = train_manifest;
  next.weights_path = state.work_dir / (std::string("session_") + tag + ".cpkw");
  save_weights(graph, next.weights_path);
  write_angle_ledger(next.ledger, state.work_dir / "angles.txt");
  result.state = std::move(next);
  result.train_rows = cumulative.size();
  return result;
}

}  // namespace cellpk
