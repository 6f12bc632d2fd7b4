#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cellpk/graph.hpp"
#include "cellpk/imgio.hpp"

namespace cellpk {

/// Per-pixel activation strength in [0,1] at the probe's size.
struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major
  std::string layer;
  int filter = 0;

  float at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

/// Names of convolutional nodes, in graph order.
std::vector<std::string> conv_layers(const ModelGraph& graph);

/// Feature map `filter_index` of `layer` for one probe image: the probe is
/// resized to the model input, run in eval mode, the channel is min-max
/// normalized (a constant map becomes zeros) and bilinearly resized back to
/// the probe's size.
Heatmap activation_heatmap(const ModelGraph& graph, const Patch& probe, const std::string& layer, int filter_index);

/// Colormap entry k in [0,255]: (k, 0, 255-k).
void colormap(float value, float rgb[3]);

/// Alpha blend of the colormapped heatmap over the probe; result rounded half up.
Patch overlay(const Heatmap& heatmap, const Patch& probe, double alpha = 0.4);

GrayImage heatmap_to_gray(const Heatmap& heatmap);

}  // namespace cellpk
