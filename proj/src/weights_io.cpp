#include "cellpk/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "cellpk/error.hpp"

namespace cellpk {

namespace {

constexpr char magic[] = "CPKW1\n";
constexpr std::size_t magic_size = sizeof(magic) - 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::string str(std::size_t n) {
    need(n, "tensor name");
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n)
      throw DataError(std::string("CPKW1: truncated while reading ") + what + " at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors) {
  Writer w;
  w.bytes(magic, magic_size);
  w.le(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) throw UsageError("CPKW1: tensor name too long: " + t.name);
    if (t.value.rank() > 0xff) throw UsageError("CPKW1: tensor rank too large: " + t.name);
    w.le(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.le(static_cast<std::uint8_t>(t.value.rank()));
    for (auto d : t.value.shape()) w.le(static_cast<std::uint32_t>(d));
    for (float v : t.value.values()) w.le(std::bit_cast<std::uint32_t>(v));
  }
  return w.take();
}

std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < magic_size || std::memcmp(bytes.data(), magic, magic_size) != 0)
    throw DataError("CPKW1: bad magic or unsupported version");
  Reader r(bytes.subspan(magic_size));
  const auto count = r.le<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.le<std::uint16_t>("name length");
    std::string name = r.str(len);
    const auto rank = r.le<std::uint8_t>("rank");
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) shape.push_back(r.le<std::uint32_t>("dimension"));
    const std::size_t n = shape_size(shape);
    if (r.remaining() / 4 < n) throw DataError("CPKW1: truncated values for tensor '" + name + "'");
    std::vector<float> values(n);
    for (auto& v : values) v = std::bit_cast<float>(r.le<std::uint32_t>("value"));
    out.push_back({std::move(name), Tensor<float>(std::move(shape), std::move(values))});
  }
  if (r.remaining() != 0) throw DataError("CPKW1: trailing bytes after last tensor");
  return out;
}

void write_tensor_file(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path) {
  const auto bytes = encode_tensors(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return decode_tensors(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_weights(const ModelGraph& graph, const std::filesystem::path& path) {
  std::vector<NamedTensor> tensors;
  for (const auto& p : graph.parameters()) tensors.push_back({p.name, p.value});
  write_tensor_file(tensors, path);
}

void assign_weights(ModelGraph& graph, const std::vector<NamedTensor>& tensors, bool allow_extra) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors)
    if (!by_name.emplace(t.name, &t).second) throw DataError("weights: duplicate tensor '" + t.name + "'");
  for (const auto& p : graph.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DataError("weights: tensor '" + p.name + "' missing from file");
    if (it->second->value.shape() != p.value.shape())
      throw DataError("weights: tensor '" + p.name + "' has shape " + shape_string(it->second->value.shape()) +
                      ", graph expects " + shape_string(p.value.shape()));
  }
  if (!allow_extra)
    for (const auto& t : tensors) {
      bool owned = false;
      for (const auto& p : graph.parameters()) owned = owned || p.name == t.name;
      if (!owned) throw DataError("weights: tensor '" + t.name + "' does not exist in the graph");
    }
  for (auto& p : graph.parameters()) p.value = by_name.at(p.name)->value;
}

void load_weights(ModelGraph& graph, const std::filesystem::path& path, bool allow_extra) {
  const auto tensors = read_tensor_file(path);
  try {
    assign_weights(graph, tensors, allow_extra);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace cellpk
