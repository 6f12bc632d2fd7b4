#include "cellpk/imgio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cellpk/error.hpp"

namespace cellpk {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

[[noreturn]] void fail_at(std::size_t offset, const std::string& what) {
  throw DataError("netpbm: " + what + " at byte offset " + std::to_string(offset));
}

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void expect_magic(char kind) {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != static_cast<std::uint8_t>(kind))
      fail_at(0, std::string("expected magic P") + kind);
    pos_ = 2;
  }

  long read_number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) fail_at(pos_, std::string("unexpected end of header reading ") + what);
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000L) fail_at(start, std::string(what) + " too large");
      ++pos_;
    }
    if (pos_ == start) fail_at(start, std::string("expected ") + what);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t end_header() {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) fail_at(pos_, "expected whitespace after maxval");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct NetpbmHeader {
  int width;
  int height;
  std::size_t data_offset;
};

NetpbmHeader parse_header(std::span<const std::uint8_t> bytes, char kind, int channels) {
  HeaderReader reader(bytes);
  reader.expect_magic(kind);
  const long w = reader.read_number("width");
  const long h = reader.read_number("height");
  const long maxval = reader.read_number("maxval");
  const std::size_t offset = reader.end_header();
  if (w < 1 || h < 1) fail_at(0, "zero image dimension");
  if (maxval != 255) fail_at(offset - 1, "maxval " + std::to_string(maxval) + " is not 255");
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels;
  if (bytes.size() - offset < need)
    fail_at(bytes.size(), "truncated raster (" + std::to_string(bytes.size() - offset) + " of " +
                              std::to_string(need) + " bytes)");
  return {static_cast<int>(w), static_cast<int>(h), offset};
}

std::vector<std::uint8_t> encode_netpbm(char kind, int w, int h, std::span<const std::uint8_t> samples) {
  std::string header = std::string("P") + kind + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), samples.begin(), samples.end());
  return bytes;
}

}  // namespace

Patch::Patch(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * channels, 0) {
  if (w < 1 || h < 1) throw UsageError("Patch dimensions must be >= 1");
}

Patch::Patch(int w, int h, std::vector<std::uint8_t> samples) : width(w), height(h), data(std::move(samples)) {
  if (w < 1 || h < 1) throw UsageError("Patch dimensions must be >= 1");
  if (data.size() != static_cast<std::size_t>(w) * h * channels)
    throw UsageError("Patch sample count does not match width x height x 3");
}

FloatImage::FloatImage(int w, int h, int c, float fill)
    : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {
  if (w < 1 || h < 1 || c < 1) throw UsageError("FloatImage dimensions must be >= 1");
}

Mask::Mask(int w, int h, bool fill) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(data.begin(), data.end(), 1)); }

double Mask::fraction() const { return data.empty() ? 0.0 : static_cast<double>(count()) / data.size(); }

Patch decode_ppm(std::span<const std::uint8_t> bytes) {
  const NetpbmHeader hdr = parse_header(bytes, '6', 3);
  const auto first = bytes.begin() + static_cast<std::ptrdiff_t>(hdr.data_offset);
  std::vector<std::uint8_t> samples(first, first + static_cast<std::ptrdiff_t>(hdr.width) * hdr.height * 3);
  return Patch(hdr.width, hdr.height, std::move(samples));
}

Patch read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_ppm(const Patch& patch) {
  return encode_netpbm('6', patch.width, patch.height, patch.data);
}

void write_ppm(const Patch& patch, const std::filesystem::path& path) { write_file(path, encode_ppm(patch)); }

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  const NetpbmHeader hdr = parse_header(bytes, '5', 1);
  const auto first = bytes.begin() + static_cast<std::ptrdiff_t>(hdr.data_offset);
  GrayImage img{hdr.width, hdr.height, {}};
  img.data.assign(first, first + static_cast<std::ptrdiff_t>(hdr.width) * hdr.height);
  return img;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  try {
    return decode_pgm(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  if (image.data.size() != static_cast<std::size_t>(image.width) * image.height)
    throw UsageError("GrayImage sample count does not match dimensions");
  return encode_netpbm('5', image.width, image.height, image.data);
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) { write_file(path, encode_pgm(image)); }

FloatImage to_float(const Patch& patch) {
  FloatImage out(patch.width, patch.height, Patch::channels);
  std::transform(patch.data.begin(), patch.data.end(), out.data.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return out;
}

std::uint8_t quantize(float v) {
  const double scaled = std::floor(static_cast<double>(v) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

Patch to_patch(const FloatImage& image) {
  if (image.channels != Patch::channels) throw UsageError("to_patch requires a 3-channel image");
  Patch out(image.width, image.height);
  std::transform(image.data.begin(), image.data.end(), out.data.begin(), quantize);
  return out;
}

void bilinear_sample(const FloatImage& img, double x, double y, std::span<float> out) {
  if (!(x >= 0.0 && x <= img.width - 1 && y >= 0.0 && y <= img.height - 1))
    throw UsageError("bilinear_sample: coordinate outside the image");
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  for (int c = 0; c < img.channels; ++c) {
    const double top = (1.0 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
    const double bottom = (1.0 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
    out[static_cast<std::size_t>(c)] = static_cast<float>((1.0 - fy) * top + fy * bottom);
  }
}

std::vector<float> bilinear_sample(const FloatImage& img, double x, double y) {
  std::vector<float> out(static_cast<std::size_t>(img.channels));
  bilinear_sample(img, x, y, out);
  return out;
}

namespace {

// Sparse 1-D resampling kernel: output index -> (source index, weight) taps.
struct Tap {
  int index;
  double weight;
};
using Kernel1D = std::vector<std::vector<Tap>>;

Kernel1D area_kernel(int in, int out) {
  Kernel1D k(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    double total = 0.0;
    for (int i = static_cast<int>(std::floor(lo)); i < std::min(in, static_cast<int>(std::ceil(hi))); ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) {
        k[o].push_back({i, overlap});
        total += overlap;
      }
    }
    for (auto& tap : k[o]) tap.weight /= total;
  }
  return k;
}

Kernel1D bilinear_kernel(int in, int out) {
  Kernel1D k(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in - 1);
    const double f = src - i0;
    if (f == 0.0 || i1 == i0) {
      k[o].push_back({i0, 1.0});
    } else {
      k[o].push_back({i0, 1.0 - f});
      k[o].push_back({i1, f});
    }
  }
  return k;
}

FloatImage apply_separable(const FloatImage& img, const Kernel1D& kx, const Kernel1D& ky) {
  const int out_w = static_cast<int>(kx.size());
  const int out_h = static_cast<int>(ky.size());
  const int ch = img.channels;
  // Horizontal pass into a double buffer, then vertical.
  std::vector<double> tmp(static_cast<std::size_t>(img.height) * out_w * ch, 0.0);
  for (int r = 0; r < img.height; ++r)
    for (int o = 0; o < out_w; ++o)
      for (const Tap& t : kx[o])
        for (int c = 0; c < ch; ++c)
          tmp[(static_cast<std::size_t>(r) * out_w + o) * ch + c] += t.weight * img.at(r, t.index, c);
  FloatImage out(out_w, out_h, ch);
  std::vector<double> acc(static_cast<std::size_t>(ch));
  for (int o = 0; o < out_h; ++o) {
    for (int col = 0; col < out_w; ++col) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (const Tap& t : ky[o])
        for (int c = 0; c < ch; ++c) acc[c] += t.weight * tmp[(static_cast<std::size_t>(t.index) * out_w + col) * ch + c];
      for (int c = 0; c < ch; ++c) out.at(o, col, c) = static_cast<float>(acc[c]);
    }
  }
  return out;
}

}  // namespace

FloatImage resize(const FloatImage& img, int out_w, int out_h, ResizeMethod method) {
  if (out_w < 1 || out_h < 1) throw UsageError("resize: target dimensions must be >= 1");
  if (out_w == img.width && out_h == img.height) return img;
  if (method == ResizeMethod::area)
    return apply_separable(img, area_kernel(img.width, out_w), area_kernel(img.height, out_h));
  return apply_separable(img, bilinear_kernel(img.width, out_w), bilinear_kernel(img.height, out_h));
}

FloatImage resize_auto(const FloatImage& img, int out_w, int out_h) {
  const bool shrinking = out_w <= img.width && out_h <= img.height;
  return resize(img, out_w, out_h, shrinking ? ResizeMethod::area : ResizeMethod::bilinear);
}

}  // namespace cellpk
