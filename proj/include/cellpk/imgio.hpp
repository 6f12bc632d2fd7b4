#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cellpk {

/// 8-bit RGB raster, samples in (row, column, channel) order.
struct Patch {
  static constexpr int channels = 3;

  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Patch() = default;
  Patch(int w, int h);
  Patch(int w, int h, std::vector<std::uint8_t> samples);

  std::uint8_t& at(int row, int col, int ch) {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  std::uint8_t at(int row, int col, int ch) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }

  bool operator==(const Patch&) const = default;
};

/// Single-channel 8-bit raster (PGM).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  bool operator==(const GrayImage&) const = default;
};

/// Real-valued raster, nominal range [0,1], interleaved channels.
struct FloatImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  FloatImage() = default;
  FloatImage(int w, int h, int c, float fill = 0.0f);

  float& at(int row, int col, int ch) {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  float at(int row, int col, int ch) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
};

/// Per-pixel geometric validity (true = the pixel maps inside the source).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h, bool fill);

  bool at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col] != 0; }
  void set(int row, int col, bool v) { data[static_cast<std::size_t>(row) * width + col] = v ? 1 : 0; }
  std::size_t count() const;
  double fraction() const;
};

/// Reads a binary P6 file with maxval 255. Comments are tolerated in the
/// header. Errors carry the byte offset at which parsing failed.
Patch read_ppm(const std::filesystem::path& path);
Patch decode_ppm(std::span<const std::uint8_t> bytes);

/// Writes "P6\n<w> <h>\n255\n" followed by raw samples.
void write_ppm(const Patch& patch, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_ppm(const Patch& patch);

GrayImage read_pgm(const std::filesystem::path& path);
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);

/// v / 255 per sample.
FloatImage to_float(const Patch& patch);

/// Round-half-up then clamp to [0, 255]. Requires 3 channels.
Patch to_patch(const FloatImage& image);
std::uint8_t quantize(float v);

enum class ResizeMethod { bilinear, area };

/// Resamples to out_w x out_h. Identical dimensions return an exact copy.
FloatImage resize(const FloatImage& img, int out_w, int out_h, ResizeMethod method);

/// Area averaging when shrinking along both axes, bilinear otherwise.
FloatImage resize_auto(const FloatImage& img, int out_w, int out_h);

/// Samples channel values at real pixel coordinates; pixel (row i, column j)
/// sits at (x=j, y=i). Coordinates must lie within [0,W-1] x [0,H-1].
void bilinear_sample(const FloatImage& img, double x, double y, std::span<float> out);
std::vector<float> bilinear_sample(const FloatImage& img, double x, double y);

}  // namespace cellpk
