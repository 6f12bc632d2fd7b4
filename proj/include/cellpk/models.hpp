#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cellpk/graph.hpp"
#include "cellpk/train.hpp"
#include "cellpk/weights_io.hpp"

namespace cellpk {

inline constexpr double default_drop_probability = 0.8;

/// Sequential analog of a shallow network:
/// [conv3x3(8)+relu, conv3x3(8)+relu, maxpool2] x 2, flatten,
/// dense(32)+relu, dropout, dense(16)+relu, dropout, dense(1)+sigmoid.
/// Penultimate is the activated dense(16).
ModelGraph build_tiny_shallow(int channels, int height, int width, std::uint64_t seed,
                              double drop_probability = default_drop_probability);

/// Branching analog of a deep network: conv3x3(8)+relu+maxpool2 stem, two
/// inception-style blocks (conv1x1, conv3x3, conv5x5 at 8 channels each,
/// concatenated, relu, maxpool2), global average pool, dense(32)+relu,
/// dropout, dense(1)+sigmoid. Penultimate is the activated dense(32).
ModelGraph build_tiny_deep(int channels, int height, int width, std::uint64_t seed,
                           double drop_probability = default_drop_probability);

/// Parallel architecture: one new input feeding both branches, each
/// branch cut after its penultimate node, penultimates concatenated into a
/// new dense(1)+sigmoid head. Branch nodes and weights are copied verbatim
/// under "a." / "b." prefixes; only the head is freshly initialized.
ModelGraph fuse(const ModelGraph& model_a, const ModelGraph& model_b, std::uint64_t seed);

inline constexpr const char* fused_concat_node = "fusion_concat";
inline constexpr const char* fused_head_node = "head";

/// Training presets "deep", "shallow" and "combined".
std::map<std::string, TrainConfig> presets();
TrainConfig preset(const std::string& name);

enum class ModelKind { tiny_shallow, tiny_deep, fused };

ModelKind parse_model_kind(const std::string& name);
std::string model_kind_name(ModelKind kind);

/// Fresh graph for "tiny-shallow" or "tiny-deep" at a square resolution.
ModelGraph build_model(ModelKind kind, int resolution, std::uint64_t seed);

/// Architecture encoded by a set of tensor names.
ModelKind detect_model_kind(const std::vector<NamedTensor>& tensors);

/// Resolution implied by a tiny-shallow branch's first dense layer, if any.
std::optional<int> implied_resolution(const std::vector<NamedTensor>& tensors);

/// Rebuilds the topology matching a weights file and loads the weights.
/// `resolution` is required unless a shallow branch implies it.
ModelGraph graph_from_weights(const std::vector<NamedTensor>& tensors, std::optional<int> resolution);

}  // namespace cellpk
