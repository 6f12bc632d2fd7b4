#include "cellpk/viz.hpp"

#include <algorithm>
#include <cmath>

#include "cellpk/engine.hpp"
#include "cellpk/error.hpp"
#include "cellpk/pipeline.hpp"

namespace cellpk {

std::vector<std::string> conv_layers(const ModelGraph& graph) {
  std::vector<std::string> out;
  for (const auto& n : graph.nodes())
    if (n.kind == LayerKind::conv2d) out.push_back(n.name);
  return out;
}

Heatmap activation_heatmap(const ModelGraph& graph, const Patch& probe, const std::string& layer, int filter_index) {
  const auto idx = graph.find(layer);
  if (!idx) throw UsageError("visualize: no layer named '" + layer + "'");
  if (graph.node(*idx).kind != LayerKind::conv2d)
    throw UsageError("visualize: layer '" + layer + "' is not convolutional");
  const Shape& shape = graph.node(*idx).output_shape;
  if (filter_index < 0 || static_cast<std::size_t>(filter_index) >= shape[0])
    throw UsageError("visualize: filter " + std::to_string(filter_index) + " out of range for '" + layer + "' (" +
                     std::to_string(shape[0]) + " channels)");
  if (probe.width < 1 || probe.height < 1) throw DataError("visualize: empty probe image");

  const Shape& in = graph.input_shape();
  const auto planar = to_planar(resize_auto(to_float(probe), static_cast<int>(in[2]), static_cast<int>(in[1])));
  Tensor<float> batch({1, in[0], in[1], in[2]}, planar);
  const auto pass = forward(graph, batch, Mode::eval);
  const Tensor<float>& act = pass.activations[*idx];

  const std::size_t h = shape[1], w = shape[2];
  const float* channel = act.data() + static_cast<std::size_t>(filter_index) * h * w;
  const auto [lo, hi] = std::minmax_element(channel, channel + h * w);
  FloatImage map(static_cast<int>(w), static_cast<int>(h), 1);
  const float range = *hi - *lo;
  for (std::size_t i = 0; i < h * w; ++i) map.data[i] = range > 0.0f ? (channel[i] - *lo) / range : 0.0f;

  const FloatImage up = resize(map, probe.width, probe.height, ResizeMethod::bilinear);
  Heatmap out;
  out.width = probe.width;
  out.height = probe.height;
  out.values.resize(up.data.size());
  std::transform(up.data.begin(), up.data.end(), out.values.begin(), [](float v) { return std::clamp(v, 0.0f, 1.0f); });
  out.layer = layer;
  out.filter = filter_index;
  return out;
}

void colormap(float value, float rgb[3]) {
  const float k = std::floor(std::clamp(value, 0.0f, 1.0f) * 255.0f + 0.5f);
  rgb[0] = k;
  rgb[1] = 0.0f;
  rgb[2] = 255.0f - k;
}

Patch overlay(const Heatmap& heatmap, const Patch& probe, double alpha) {
  if (heatmap.width != probe.width || heatmap.height != probe.height)
    throw UsageError("overlay: heatmap and probe sizes differ");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("overlay: alpha must be in [0,1]");
  Patch out(probe.width, probe.height);
  for (int r = 0; r < probe.height; ++r)
    for (int c = 0; c < probe.width; ++c) {
      float rgb[3];
      colormap(heatmap.at(r, c), rgb);
      for (int ch = 0; ch < 3; ++ch) {
        const double v = alpha * rgb[ch] + (1.0 - alpha) * probe.at(r, c, ch);
        out.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  return out;
}

GrayImage heatmap_to_gray(const Heatmap& heatmap) {
  GrayImage g{heatmap.width, heatmap.height, {}};
  g.data.reserve(heatmap.values.size());
  for (float v : heatmap.values) g.data.push_back(quantize(v));
  return g;
}

}  // namespace cellpk
