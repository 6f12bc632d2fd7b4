#include "cellpk/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "cellpk/error.hpp"
#include "cellpk/random.hpp"

namespace cellpk {

namespace {

constexpr double boundary_tolerance = 1e-9;

struct UnitRotation {
  double cos;
  double sin;
};

UnitRotation unit_rotation(RotationAngle theta) {
  switch (theta.degrees()) {
    case 0: return {1.0, 0.0};
    case 90: return {0.0, 1.0};
    case 180: return {-1.0, 0.0};
    case 270: return {0.0, -1.0};
    default: {
      const double rad = theta.degrees() * std::numbers::pi / 180.0;
      return {std::cos(rad), std::sin(rad)};
    }
  }
}

bool permutes_exactly(int width, int height, RotationAngle theta) {
  return theta.is_right_angle() && (width == height || theta.degrees() % 180 == 0);
}

// Source row/column feeding output (row, col) for an exact right-angle rotation.
std::pair<int, int> permuted_source(int row, int col, int width, int height, int degrees) {
  switch (degrees) {
    case 90: return {col, width - 1 - row};
    case 180: return {height - 1 - row, width - 1 - col};
    case 270: return {height - 1 - col, row};
    default: return {row, col};
  }
}

FloatImage permute_float(const FloatImage& img, RotationAngle theta) {
  FloatImage out(img.width, img.height, img.channels);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const auto [sr, sc] = permuted_source(r, c, img.width, img.height, theta.degrees());
      for (int ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
    }
  return out;
}

// Mirror about the first and last pixel centers.
double reflect_coordinate(double v, int n) {
  if (n == 1) return 0.0;
  const double last = n - 1;
  const double period = 2.0 * last;
  v = std::fmod(std::abs(v), period);
  if (v > last) v = period - v;
  return std::clamp(v, 0.0, last);
}

bool inside(double v, int n) { return v >= -boundary_tolerance && v <= (n - 1) + boundary_tolerance; }

}  // namespace

Patch rotate_right_angle(const Patch& img, RotationAngle theta) {
  if (!theta.is_right_angle()) throw UsageError("rotate_right_angle: angle is not a multiple of 90");
  if (!permutes_exactly(img.width, img.height, theta))
    throw UsageError("rotate_right_angle: 90/270 degree permutation requires a square patch");
  Patch out(img.width, img.height);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const auto [sr, sc] = permuted_source(r, c, img.width, img.height, theta.degrees());
      for (int ch = 0; ch < Patch::channels; ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
    }
  return out;
}

std::pair<FloatImage, Mask> rotate_cropped_fit(const FloatImage& img, RotationAngle theta) {
  if (permutes_exactly(img.width, img.height, theta))
    return {permute_float(img, theta), Mask(img.width, img.height, true)};

  const auto [cs, sn] = unit_rotation(theta);
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;
  FloatImage out(img.width, img.height, img.channels, 0.0f);
  Mask mask(img.width, img.height, false);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const double dx = c - cx;
      const double dy = r - cy;
      const double sx = cx + cs * dx - sn * dy;
      const double sy = cy + sn * dx + cs * dy;
      if (!inside(sx, img.width) || !inside(sy, img.height)) continue;
      const double x = std::clamp(sx, 0.0, img.width - 1.0);
      const double y = std::clamp(sy, 0.0, img.height - 1.0);
      bilinear_sample(img, x, y, std::span<float>(&out.at(r, c, 0), static_cast<std::size_t>(img.channels)));
      mask.set(r, c, true);
    }
  }
  return {std::move(out), std::move(mask)};
}

std::pair<int, int> expanded_canvas(int width, int height, RotationAngle theta) {
  const auto [cs, sn] = unit_rotation(theta);
  const double w = width * std::abs(cs) + height * std::abs(sn);
  const double h = width * std::abs(sn) + height * std::abs(cs);
  return {static_cast<int>(std::ceil(w - boundary_tolerance)), static_cast<int>(std::ceil(h - boundary_tolerance))};
}

FloatImage rotate_resized_fit(const FloatImage& img, RotationAngle theta) {
  if (permutes_exactly(img.width, img.height, theta)) return permute_float(img, theta);

  const auto [cs, sn] = unit_rotation(theta);
  const auto [ew, eh] = expanded_canvas(img.width, img.height, theta);
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;
  const double ecx = (ew - 1) / 2.0;
  const double ecy = (eh - 1) / 2.0;
  FloatImage canvas(ew, eh, img.channels);
  for (int r = 0; r < eh; ++r) {
    for (int c = 0; c < ew; ++c) {
      const double dx = c - ecx;
      const double dy = r - ecy;
      const double sx = reflect_coordinate(cx + cs * dx - sn * dy, img.width);
      const double sy = reflect_coordinate(cy + sn * dx + cs * dy, img.height);
      bilinear_sample(img, sx, sy, std::span<float>(&canvas.at(r, c, 0), static_cast<std::size_t>(img.channels)));
    }
  }
  return resize_auto(canvas, img.width, img.height);
}

AugmentedPatch rotate_lossless(const Patch& img, RotationAngle theta, std::string source_id) {
  if (permutes_exactly(img.width, img.height, theta))
    return {rotate_right_angle(img, theta), theta, Mask(img.width, img.height, true), std::move(source_id)};

  const FloatImage source = to_float(img);
  auto [cropped, mask] = rotate_cropped_fit(source, theta);
  const FloatImage resized = rotate_resized_fit(source, theta);
  FloatImage composite(img.width, img.height, Patch::channels);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const FloatImage& from = mask.at(r, c) ? cropped : resized;
      for (int ch = 0; ch < Patch::channels; ++ch) composite.at(r, c, ch) = from.at(r, c, ch);
    }
  return {to_patch(composite), theta, std::move(mask), std::move(source_id)};
}

std::vector<AugmentedPatch> rotation_set(const Patch& img, const std::vector<RotationAngle>& angles,
                                         const std::string& source_id) {
  if (angles.empty()) throw UsageError("rotation_set: empty angle list");
  std::set<RotationAngle> seen;
  for (const auto& a : angles)
    if (!seen.insert(a).second)
      throw UsageError("rotation_set: duplicate angle " + std::to_string(a.degrees()));
  std::vector<AugmentedPatch> out;
  out.reserve(angles.size());
  for (const auto& a : angles) out.push_back(rotate_lossless(img, a, source_id));
  return out;
}

std::vector<RotationAngle> full_rotation_angles() {
  std::vector<RotationAngle> out;
  for (int d = 1; d <= 360; ++d) out.emplace_back(d);
  return out;
}

std::vector<RotationAngle> baseline_rotation_angles() {
  return {RotationAngle(0), RotationAngle(90), RotationAngle(180), RotationAngle(270)};
}

std::vector<RotationAngle> sample_session_angles(std::uint64_t seed, int session_index, const std::set<int>& ledger) {
  if (session_index < 1) throw UsageError("session index must be >= 1");
  std::vector<int> pool;
  for (int d = 1; d < 360; ++d)
    if (d % 90 != 0 && !ledger.contains(d)) pool.push_back(d);
  if (pool.size() < static_cast<std::size_t>(session_angle_count))
    throw DataError("rotation angle pool exhausted: " + std::to_string(pool.size()) + " unused angles left, " +
                    std::to_string(session_angle_count) + " needed for session " + std::to_string(session_index));
  Rng rng(derive_seed(seed, "angles", {static_cast<std::uint64_t>(session_index)}));
  std::vector<RotationAngle> out;
  for (std::size_t i = 0; i < static_cast<std::size_t>(session_angle_count); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
    out.emplace_back(pool[i]);
  }
  return out;
}

std::set<int> read_angle_ledger(const std::filesystem::path& path) {
  std::set<int> ledger;
  std::ifstream in(path);
  if (!in) return ledger;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(line, &used);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": not an integer angle");
    }
    if (line.find_first_not_of(" \t\r", used) != std::string::npos || value < 0 || value >= 360)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": invalid angle '" + line + "'");
    ledger.insert(value);
  }
  return ledger;
}

void write_angle_ledger(const std::set<int>& ledger, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write ledger " + path.string());
  for (int a : ledger) out << a << '\n';
}

std::string rotated_name(const std::string& stem, RotationAngle theta) {
  char suffix[16];
  std::snprintf(suffix, sizeof suffix, "_rot%03d", theta.degrees());
  return stem + suffix;
}

}  // namespace cellpk
