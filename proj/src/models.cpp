#include "cellpk/models.hpp"

#include <cmath>
#include <set>

#include "cellpk/error.hpp"

namespace cellpk {

namespace {

void require_input_size(int height, int width) {
  if (height < 16 || width < 16)
    throw UsageError("model input must be at least 16x16, got " + std::to_string(width) + "x" + std::to_string(height));
}

void add_inception_block(ModelGraph& g, const std::string& name, const std::string& input) {
  g.add_conv2d(name + "_1x1", input, 8, 1);
  g.add_conv2d(name + "_3x3", input, 8, 3);
  g.add_conv2d(name + "_5x5", input, 8, 5);
  g.add_concat(name + "_concat", {name + "_1x1", name + "_3x3", name + "_5x5"});
  g.add_relu(name + "_relu", name + "_concat");
  g.add_maxpool(name + "_pool", name + "_relu");
}

bool has_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

const NamedTensor* find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

ModelKind branch_kind(const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  if (has_tensor(tensors, prefix + "block1_conv1.weight")) return ModelKind::tiny_shallow;
  if (has_tensor(tensors, prefix + "stem_conv.weight")) return ModelKind::tiny_deep;
  throw DataError("weights do not match any known architecture" +
                  (prefix.empty() ? std::string() : " (branch '" + prefix + "')"));
}

}  // namespace

ModelGraph build_tiny_shallow(int channels, int height, int width, std::uint64_t seed, double drop_probability) {
  require_input_size(height, width);
  ModelGraph g;
  g.add_input("input", channels, height, width);
  std::string prev = "input";
  for (int block = 1; block <= 2; ++block) {
    const std::string b = "block" + std::to_string(block);
    g.add_conv2d(b + "_conv1", prev, 8, 3);
    g.add_relu(b + "_relu1", b + "_conv1");
    g.add_conv2d(b + "_conv2", b + "_relu1", 8, 3);
    g.add_relu(b + "_relu2", b + "_conv2");
    g.add_maxpool(b + "_pool", b + "_relu2");
    prev = b + "_pool";
  }
  g.add_flatten("flatten", prev);
  g.add_dense("fc1", "flatten", 32);
  g.add_relu("fc1_relu", "fc1");
  g.add_dropout("fc1_dropout", "fc1_relu", drop_probability);
  g.add_dense("fc2", "fc1_dropout", 16);
  g.add_relu("fc2_relu", "fc2");
  g.add_dropout("fc2_dropout", "fc2_relu", drop_probability);
  g.add_dense("predictions", "fc2_dropout", 1);
  g.add_sigmoid("predictions_sigmoid", "predictions");
  g.set_output("predictions_sigmoid");
  g.set_penultimate("fc2_relu");
  g.initialize_glorot(seed);
  g.validate();
  return g;
}

ModelGraph build_tiny_deep(int channels, int height, int width, std::uint64_t seed, double drop_probability) {
  require_input_size(height, width);
  ModelGraph g;
  g.add_input("input", channels, height, width);
  g.add_conv2d("stem_conv", "input", 8, 3);
  g.add_relu("stem_relu", "stem_conv");
  g.add_maxpool("stem_pool", "stem_relu");
  add_inception_block(g, "mixed1", "stem_pool");
  add_inception_block(g, "mixed2", "mixed1_pool");
  g.add_global_avg_pool("avg_pool", "mixed2_pool");
  g.add_dense("fc1", "avg_pool", 32);
  g.add_relu("fc1_relu", "fc1");
  g.add_dropout("fc1_dropout", "fc1_relu", drop_probability);
  g.add_dense("predictions", "fc1_dropout", 1);
  g.add_sigmoid("predictions_sigmoid", "predictions");
  g.set_output("predictions_sigmoid");
  g.set_penultimate("fc1_relu");
  g.initialize_glorot(seed);
  g.validate();
  return g;
}

ModelGraph fuse(const ModelGraph& model_a, const ModelGraph& model_b, std::uint64_t seed) {
  if (model_a.input_shape() != model_b.input_shape())
    throw UsageError("fuse: input shapes differ (" + shape_string(model_a.input_shape()) + " vs " +
                     shape_string(model_b.input_shape()) + ")");
  if (model_a.penultimate_node().empty() || model_b.penultimate_node().empty())
    throw UsageError("fuse: both models need a penultimate node");

  const Shape& in = model_a.input_shape();
  ModelGraph fused;
  fused.add_input("input", static_cast<int>(in[0]), static_cast<int>(in[1]), static_cast<int>(in[2]));

  auto copy_branch = [&](const ModelGraph& src, const std::string& prefix) {
    // Nodes the penultimate depends on, minus the old input.
    std::vector<bool> keep(src.nodes().size(), false);
    keep[*src.find(src.penultimate_node())] = true;
    for (std::size_t i = src.nodes().size(); i-- > 0;)
      if (keep[i])
        for (auto j : src.node(i).input_indices) keep[j] = true;
    const std::size_t old_input = src.input_index();
    for (std::size_t i = 0; i < src.nodes().size(); ++i) {
      if (!keep[i] || i == old_input) continue;
      LayerNode spec = src.node(i);
      spec.name = prefix + spec.name;
      for (std::size_t k = 0; k < spec.inputs.size(); ++k)
        spec.inputs[k] = spec.input_indices[k] == old_input ? "input" : prefix + spec.inputs[k];
      if (fused.contains(spec.name)) throw UsageError("fuse: node name collision on '" + spec.name + "'");
      fused.add_node(std::move(spec));
      for (auto p : src.node_parameters(i)) {
        const auto& param = src.parameters()[p];
        fused.parameter(prefix + param.name).value = param.value;
      }
    }
    return prefix + src.penultimate_node();
  };

  const std::string pa = copy_branch(model_a, "a.");
  const std::string pb = copy_branch(model_b, "b.");
  for (const char* reserved : {fused_concat_node, fused_head_node, "head_sigmoid"})
    if (fused.contains(reserved)) throw UsageError(std::string("fuse: node name collision on '") + reserved + "'");
  fused.add_concat(fused_concat_node, {pa, pb});
  fused.add_dense(fused_head_node, fused_concat_node, 1);
  fused.add_sigmoid("head_sigmoid", fused_head_node);
  fused.set_output("head_sigmoid");
  fused.set_penultimate(fused_concat_node);
  fused.initialize_parameter_glorot(std::string(fused_head_node) + ".weight", seed);
  fused.initialize_parameter_glorot(std::string(fused_head_node) + ".bias", seed);
  fused.validate();
  return fused;
}

std::map<std::string, TrainConfig> presets() {
  auto make = [](double lr, int epochs, int batch, int patience, double split) {
    TrainConfig c;
    c.learning_rate = lr;
    c.max_epochs = epochs;
    c.batch_size = batch;
    c.early_stop_patience = patience;
    c.train_fraction = split;
    return c;
  };
  return {
      {"deep", make(1e-3, 2000, 16, 10, 0.80)},
      {"shallow", make(1e-5, 2000, 16, 10, 0.80)},
      {"combined", make(1e-5, 50, 14, 5, 0.95)},
  };
}

TrainConfig preset(const std::string& name) {
  const auto all = presets();
  auto it = all.find(name);
  if (it == all.end()) throw UsageError("unknown preset '" + name + "' (expected deep, shallow or combined)");
  return it->second;
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "tiny-shallow") return ModelKind::tiny_shallow;
  if (name == "tiny-deep") return ModelKind::tiny_deep;
  if (name == "fused") return ModelKind::fused;
  throw UsageError("unknown model '" + name + "' (expected tiny-shallow, tiny-deep or fused)");
}

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::tiny_shallow: return "tiny-shallow";
    case ModelKind::tiny_deep: return "tiny-deep";
    case ModelKind::fused: return "fused";
  }
  return "unknown";
}

ModelGraph build_model(ModelKind kind, int resolution, std::uint64_t seed) {
  switch (kind) {
    case ModelKind::tiny_shallow: return build_tiny_shallow(3, resolution, resolution, seed);
    case ModelKind::tiny_deep: return build_tiny_deep(3, resolution, resolution, seed);
    case ModelKind::fused: break;
  }
  throw UsageError("build_model: a fused model is built with fuse() from two branches");
}

ModelKind detect_model_kind(const std::vector<NamedTensor>& tensors) {
  if (has_tensor(tensors, std::string(fused_head_node) + ".weight")) return ModelKind::fused;
  return branch_kind(tensors, "");
}

std::optional<int> implied_resolution(const std::vector<NamedTensor>& tensors) {
  for (const char* prefix : {"", "a.", "b."}) {
    const NamedTensor* fc = find_tensor(tensors, std::string(prefix) + "fc1.weight");
    if (!fc || !has_tensor(tensors, std::string(prefix) + "block1_conv1.weight")) continue;
    // Flattened features are 8 x (R/4) x (R/4) after two 2x2 pools.
    const double side = std::sqrt(static_cast<double>(fc->value.dim(1)) / 8.0);
    const int s = static_cast<int>(std::lround(side));
    if (8 * s * s == static_cast<int>(fc->value.dim(1))) return 4 * s;
  }
  return std::nullopt;
}

ModelGraph graph_from_weights(const std::vector<NamedTensor>& tensors, std::optional<int> resolution) {
  const auto implied = implied_resolution(tensors);
  int res = 0;
  if (resolution) {
    res = *resolution;
    if (implied && (*implied / 4) != (res / 4))
      throw DataError("weights were trained at resolution " + std::to_string(*implied) + ", not " +
                      std::to_string(res));
  } else if (implied) {
    res = *implied;
  } else {
    throw UsageError("the weights do not determine the input resolution; pass it explicitly");
  }
  const ModelKind kind = detect_model_kind(tensors);
  ModelGraph g;
  if (kind == ModelKind::fused) {
    g = fuse(build_model(branch_kind(tensors, "a."), res, 0), build_model(branch_kind(tensors, "b."), res, 0), 0);
  } else {
    g = build_model(kind, res, 0);
  }
  assign_weights(g, tensors);
  return g;
}

}  // namespace cellpk
