#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cellpk/graph.hpp"

namespace cellpk {

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

/// CPKW1 container: magic "CPKW1\n", u32 tensor count, then per tensor a
/// u16 name length, UTF-8 name, u8 rank, u32 dims and float32 values. All
/// integers and floats little-endian.
std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes);
void write_tensor_file(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path);
std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path);

void save_weights(const ModelGraph& graph, const std::filesystem::path& path);

/// Copies file tensors into the graph. Names and shapes must match the
/// graph's parameters one-to-one; the first mismatching tensor is named in
/// the error. With allow_extra, tensors the graph does not own are ignored.
void load_weights(ModelGraph& graph, const std::filesystem::path& path, bool allow_extra = false);
void assign_weights(ModelGraph& graph, const std::vector<NamedTensor>& tensors, bool allow_extra = false);

}  // namespace cellpk
