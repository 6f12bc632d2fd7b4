#pragma once

#include <cstdint>
#include <vector>

#include "cellpk/graph.hpp"

namespace cellpk {

enum class Mode { train, eval };

/// Everything backward() needs from a forward pass: per-node activations,
/// dropout keep-masks and max-pool argmax indices.
template <typename T>
struct ForwardPass {
  Mode mode = Mode::eval;
  std::uint64_t seed = 0;
  std::vector<Tensor<T>> activations;
  std::vector<std::vector<std::uint8_t>> keep_masks;
  std::vector<std::vector<std::uint32_t>> argmax;

  bool empty() const { return activations.empty(); }
};

template <typename T>
struct Gradients {
  T loss{};
  std::vector<Tensor<T>> parameters;  // aligned with graph.parameters()
  Tensor<T> input;
};

/// Runs the graph on an N x C x H x W batch. Dropout is active only in
/// train mode (inverted: kept units scale by 1/(1-p)); its masks are a pure
/// function of (seed, node name). Shape mismatches raise ShapeError naming
/// the node.
template <typename T>
ForwardPass<T> forward(const BasicGraph<T>& graph, const Tensor<T>& batch, Mode mode, std::uint64_t seed = 0);

/// Output tensor (N x 1) of a completed pass.
template <typename T>
const Tensor<T>& output_of(const BasicGraph<T>& graph, const ForwardPass<T>& pass);

/// Gradients of loss_scale * MSE(output, targets) with respect to every
/// parameter and the input batch.
template <typename T>
Gradients<T> backward(const BasicGraph<T>& graph, const ForwardPass<T>& pass, const Tensor<T>& targets,
                      T loss_scale = T{1});

template <typename T>
T mse_loss(const Tensor<T>& output, const Tensor<T>& targets);

/// Eval-mode predictions for a batch, one value per sample.
template <typename T>
std::vector<T> predict_batch(const BasicGraph<T>& graph, const Tensor<T>& batch);

extern template ForwardPass<float> forward(const BasicGraph<float>&, const Tensor<float>&, Mode, std::uint64_t);
extern template ForwardPass<double> forward(const BasicGraph<double>&, const Tensor<double>&, Mode, std::uint64_t);
extern template Gradients<float> backward(const BasicGraph<float>&, const ForwardPass<float>&, const Tensor<float>&,
                                          float);
extern template Gradients<double> backward(const BasicGraph<double>&, const ForwardPass<double>&,
                                           const Tensor<double>&, double);

}  // namespace cellpk
