#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cellpk/tensor.hpp"

namespace cellpk {

enum class LayerKind { input, conv2d, maxpool, concat, dense, relu, sigmoid, dropout, global_avg_pool, flatten };

std::string_view layer_kind_name(LayerKind kind);

/// Raised when a node cannot accept its inputs, named after the node.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LayerNode {
  std::string name;
  LayerKind kind = LayerKind::input;
  std::vector<std::string> inputs;
  int units = 0;   // conv2d output channels / dense units
  int kernel = 0;  // conv2d and maxpool window
  int stride = 1;
  double drop_probability = 0.0;

  // Filled in when the node is added.
  std::vector<std::size_t> input_indices;
  Shape output_shape;  // per sample, without the batch dimension
};

template <typename T>
struct Parameter {
  std::string name;  // "<node>.weight" or "<node>.bias"
  std::size_t node = 0;
  Tensor<T> value;
};

/// Layer DAG with one input node and one scalar output node. Nodes may only
/// consume nodes added before them, so insertion order is a topological order.
template <typename T>
class BasicGraph {
 public:
  using value_type = T;

  const LayerNode& add_input(std::string name, int channels, int height, int width);
  /// Zero-padded ("same" for odd kernels) convolution.
  const LayerNode& add_conv2d(std::string name, const std::string& input, int out_channels, int kernel, int stride = 1);
  const LayerNode& add_maxpool(std::string name, const std::string& input, int kernel = 2, int stride = 2);
  const LayerNode& add_dense(std::string name, const std::string& input, int units);
  const LayerNode& add_relu(std::string name, const std::string& input);
  const LayerNode& add_sigmoid(std::string name, const std::string& input);
  const LayerNode& add_dropout(std::string name, const std::string& input, double p);
  const LayerNode& add_global_avg_pool(std::string name, const std::string& input);
  const LayerNode& add_flatten(std::string name, const std::string& input);
  /// Concatenates along the channel (feature) axis.
  const LayerNode& add_concat(std::string name, const std::vector<std::string>& inputs);

  /// Adds a node described by `spec` (kind, inputs, attributes). Parameters
  /// are created zero-filled.
  const LayerNode& add_node(LayerNode spec);

  void set_output(const std::string& name);
  void set_penultimate(const std::string& name);

  const std::vector<LayerNode>& nodes() const { return nodes_; }
  const LayerNode& node(std::size_t i) const { return nodes_.at(i); }
  const LayerNode& node(const std::string& name) const;
  std::optional<std::size_t> find(const std::string& name) const;
  bool contains(const std::string& name) const { return find(name).has_value(); }

  std::size_t input_index() const;
  std::size_t output_index() const;
  const LayerNode& input_node() const { return nodes_[input_index()]; }
  const LayerNode& output_node() const { return nodes_[output_index()]; }
  const std::string& penultimate_node() const { return penultimate_; }

  /// Per-sample input shape (C, H, W).
  const Shape& input_shape() const { return input_node().output_shape; }

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  Parameter<T>& parameter(const std::string& name);
  const Parameter<T>& parameter(const std::string& name) const;
  /// Indices into parameters() owned by node i.
  const std::vector<std::size_t>& node_parameters(std::size_t i) const { return node_params_.at(i); }

  std::size_t parameter_count() const;
  int count_layers(LayerKind kind) const;
  std::vector<std::size_t> consumers(std::size_t node) const;

  /// Glorot-uniform weights and zero biases, each tensor drawn from its own
  /// stream derived from (seed, tensor name).
  void initialize_glorot(std::uint64_t seed);
  void initialize_parameter_glorot(const std::string& name, std::uint64_t seed);

  /// Checks the single-input/single-scalar-output contract.
  void validate() const;

  template <typename U>
  BasicGraph<U> cast() const {
    BasicGraph<U> out;
    for (const auto& n : nodes_) out.add_node(n);
    for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i].value = params_[i].value.template cast<U>();
    if (output_.has_value()) out.set_output(nodes_[*output_].name);
    if (!penultimate_.empty()) out.set_penultimate(penultimate_);
    return out;
  }

 private:
  std::vector<LayerNode> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> param_index_;
  std::vector<std::vector<std::size_t>> node_params_;
  std::optional<std::size_t> output_;
  std::string penultimate_;
};

using ModelGraph = BasicGraph<float>;
using WideGraph = BasicGraph<double>;

extern template class BasicGraph<float>;
extern template class BasicGraph<double>;

}  // namespace cellpk
