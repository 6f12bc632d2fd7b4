#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cellpk/imgio.hpp"

namespace cellpk {

/// Integer rotation in degrees, counterclockwise positive, stored mod 360.
class RotationAngle {
 public:
  constexpr RotationAngle() = default;
  constexpr explicit RotationAngle(int degrees) : degrees_(((degrees % 360) + 360) % 360) {}

  constexpr int degrees() const { return degrees_; }
  constexpr bool is_right_angle() const { return degrees_ % 90 == 0; }

  auto operator<=>(const RotationAngle&) const = default;

 private:
  int degrees_ = 0;
};

struct AugmentedPatch {
  Patch image;
  RotationAngle angle;
  Mask valid_crop_mask;
  std::string source_id;
};

/// Rotation about the image center on the original canvas. Pixels whose
/// source point falls outside the source rectangle are zero and masked out.
/// Right angles on square images (and 0/180 on any image) are exact index
/// permutations with a fully valid mask.
std::pair<FloatImage, Mask> rotate_cropped_fit(const FloatImage& img, RotationAngle theta);

/// Size of the canvas that encloses the whole rotated image.
std::pair<int, int> expanded_canvas(int width, int height, RotationAngle theta);

/// Rotation into the enclosing canvas, resized back to the source size.
/// Canvas corners outside the rotated source are filled from the mirror
/// extension of the source, so the result carries no padding.
FloatImage rotate_resized_fit(const FloatImage& img, RotationAngle theta);

/// Composite of both fits: cropped-fit where its mask is valid, resized-fit
/// elsewhere, quantized back to 8 bits.
AugmentedPatch rotate_lossless(const Patch& img, RotationAngle theta, std::string source_id = {});

/// Exact permutation rotation of an 8-bit patch. Requires a square patch for
/// 90/270.
Patch rotate_right_angle(const Patch& img, RotationAngle theta);

/// One output per angle, in input order. Duplicate angles (mod 360) are rejected.
std::vector<AugmentedPatch> rotation_set(const Patch& img, const std::vector<RotationAngle>& angles,
                                         const std::string& source_id = {});

/// 1..360 (360 is stored as 0).
std::vector<RotationAngle> full_rotation_angles();

/// 0, 90, 180, 270.
std::vector<RotationAngle> baseline_rotation_angles();

inline constexpr int session_angle_count = 30;

/// Draws 30 distinct angles from {1..359} minus {90,180,270} minus the
/// ledger. Deterministic in (seed, session_index, ledger). The caller adds
/// the returned angles to its ledger.
std::vector<RotationAngle> sample_session_angles(std::uint64_t seed, int session_index,
                                                 const std::set<int>& ledger);

/// Ledger file: one integer per line.
std::set<int> read_angle_ledger(const std::filesystem::path& path);
void write_angle_ledger(const std::set<int>& ledger, const std::filesystem::path& path);

/// "<stem>_rot<ddd>"
std::string rotated_name(const std::string& stem, RotationAngle theta);

}  // namespace cellpk
