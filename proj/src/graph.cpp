#include "cellpk/graph.hpp"

#include <cmath>

#include "cellpk/random.hpp"

namespace cellpk {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::input: return "input";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::concat: return "concat";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::dropout: return "dropout";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::flatten: return "flatten";
  }
  return "unknown";
}

namespace {

[[noreturn]] void node_error(const std::string& node, const std::string& what) {
  throw ShapeError("node '" + node + "': " + what);
}

struct ParamSpec {
  std::string suffix;
  Shape shape;
};

std::vector<ParamSpec> parameter_specs(const LayerNode& n, const std::vector<Shape>& in) {
  switch (n.kind) {
    case LayerKind::conv2d:
      return {{"weight", {static_cast<std::size_t>(n.units), in[0][0], static_cast<std::size_t>(n.kernel),
                          static_cast<std::size_t>(n.kernel)}},
              {"bias", {static_cast<std::size_t>(n.units)}}};
    case LayerKind::dense:
      return {{"weight", {static_cast<std::size_t>(n.units), in[0][0]}}, {"bias", {static_cast<std::size_t>(n.units)}}};
    default:
      return {};
  }
}

Shape infer_shape(const LayerNode& n, const std::vector<Shape>& in) {
  auto require_inputs = [&](std::size_t count) {
    if (in.size() != count) node_error(n.name, "expects " + std::to_string(count) + " input(s)");
  };
  auto require_rank = [&](const Shape& s, std::size_t rank) {
    if (s.size() != rank)
      node_error(n.name, std::string(layer_kind_name(n.kind)) + " expects rank-" + std::to_string(rank) +
                             " input, got " + shape_string(s));
  };
  switch (n.kind) {
    case LayerKind::input:
      require_inputs(0);
      if (n.output_shape.size() != 3) node_error(n.name, "input shape must be C x H x W");
      for (auto d : n.output_shape)
        if (d == 0) node_error(n.name, "input dimensions must be >= 1");
      return n.output_shape;
    case LayerKind::conv2d: {
      require_inputs(1);
      require_rank(in[0], 3);
      if (n.units < 1 || n.kernel < 1 || n.stride < 1) node_error(n.name, "invalid conv2d attributes");
      const long pad = n.kernel / 2;
      const long h = (static_cast<long>(in[0][1]) + 2 * pad - n.kernel) / n.stride + 1;
      const long w = (static_cast<long>(in[0][2]) + 2 * pad - n.kernel) / n.stride + 1;
      if (h < 1 || w < 1) node_error(n.name, "input " + shape_string(in[0]) + " too small for kernel");
      return {static_cast<std::size_t>(n.units), static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
    }
    case LayerKind::maxpool: {
      require_inputs(1);
      require_rank(in[0], 3);
      if (n.kernel < 1 || n.stride < 1) node_error(n.name, "invalid maxpool attributes");
      if (in[0][1] < static_cast<std::size_t>(n.kernel) || in[0][2] < static_cast<std::size_t>(n.kernel))
        node_error(n.name, "input " + shape_string(in[0]) + " smaller than pooling window");
      return {in[0][0], (in[0][1] - n.kernel) / n.stride + 1, (in[0][2] - n.kernel) / n.stride + 1};
    }
    case LayerKind::dense:
      require_inputs(1);
      require_rank(in[0], 1);
      if (n.units < 1) node_error(n.name, "dense units must be >= 1");
      return {static_cast<std::size_t>(n.units)};
    case LayerKind::relu:
    case LayerKind::sigmoid:
      require_inputs(1);
      return in[0];
    case LayerKind::dropout:
      require_inputs(1);
      if (!(n.drop_probability >= 0.0 && n.drop_probability < 1.0))
        node_error(n.name, "drop probability must be in [0, 1)");
      return in[0];
    case LayerKind::global_avg_pool:
      require_inputs(1);
      require_rank(in[0], 3);
      return {in[0][0]};
    case LayerKind::flatten:
      require_inputs(1);
      return {shape_size(in[0])};
    case LayerKind::concat: {
      if (in.empty()) node_error(n.name, "concat needs at least one input");
      Shape out = in[0];
      if (out.size() != 1 && out.size() != 3) node_error(n.name, "concat inputs must be rank 1 or 3");
      out[0] = 0;
      for (const auto& s : in) {
        if (s.size() != in[0].size() || !std::equal(s.begin() + 1, s.end(), in[0].begin() + 1))
          node_error(n.name, "concat inputs disagree on non-channel dimensions: " + shape_string(in[0]) + " vs " +
                                 shape_string(s));
        out[0] += s[0];
      }
      return out;
    }
  }
  node_error(n.name, "unknown layer kind");
}

}  // namespace

template <typename T>
const LayerNode& BasicGraph<T>::add_node(LayerNode spec) {
  if (spec.name.empty()) throw ShapeError("node name must not be empty");
  if (index_.contains(spec.name)) node_error(spec.name, "duplicate node name");
  if (spec.kind == LayerKind::input) {
    for (const auto& n : nodes_)
      if (n.kind == LayerKind::input) node_error(spec.name, "graph already has input node '" + n.name + "'");
  }
  spec.input_indices.clear();
  std::vector<Shape> in_shapes;
  for (const auto& in : spec.inputs) {
    auto it = index_.find(in);
    if (it == index_.end()) node_error(spec.name, "unknown input node '" + in + "'");
    spec.input_indices.push_back(it->second);
    in_shapes.push_back(nodes_[it->second].output_shape);
  }
  spec.output_shape = infer_shape(spec, in_shapes);

  const std::size_t idx = nodes_.size();
  std::vector<std::size_t> owned;
  for (auto& ps : parameter_specs(spec, in_shapes)) {
    Parameter<T> p{spec.name + "." + ps.suffix, idx, Tensor<T>(ps.shape)};
    param_index_.emplace(p.name, params_.size());
    owned.push_back(params_.size());
    params_.push_back(std::move(p));
  }
  node_params_.push_back(std::move(owned));
  index_.emplace(spec.name, idx);
  nodes_.push_back(std::move(spec));
  return nodes_.back();
}

template <typename T>
const LayerNode& BasicGraph<T>::add_input(std::string name, int channels, int height, int width) {
  if (channels < 1 || height < 1 || width < 1) throw ShapeError("node '" + name + "': input dimensions must be >= 1");
  LayerNode n;
  n.name = std::move(name);
  n.kind = LayerKind::input;
  n.output_shape = {static_cast<std::size_t>(channels), static_cast<std::size_t>(height),
                    static_cast<std::size_t>(width)};
  return add_node(std::move(n));
}

template <typename T>
const LayerNode& BasicGraph<T>::add_conv2d(std::string name, const std::string& input, int out_channels, int kernel,
                                           int stride) {
  LayerNode n;
  n.name = std::move(name);
  n.kind = LayerKind::conv2d;
  n.inputs = {input};
  n.units = out_channels;
  n.kernel = kernel;
  n.stride = stride;
  return add_node(std::move(n));
}

template <typename T>
const LayerNode& BasicGraph<T>::add_maxpool(std::string name, const std::string& input, int kernel, int stride) {
  LayerNode n;
  n.name = std::move(name);
  n.kind = LayerKind::maxpool;
  n.inputs = {input};
  n.kernel = kernel;
  n.stride = stride;
  return add_node(std::move(n));
}

template <typename T>
const LayerNode& BasicGraph<T>::add_dense(std::string name, const std::string& input, int units) {
  LayerNode n;
  n.name = std::move(name);
  n.kind = LayerKind::dense;
  n.inputs = {input};
  n.units = units;
  return add_node(std::move(n));
}

namespace {
LayerNode unary(std::string name, LayerKind kind, const std::string& input) {
  LayerNode n;
  n.name = std::move(name);
  n.kind = kind;
  n.inputs = {input};
  return n;
}
}  // namespace

template <typename T>
const LayerNode& BasicGraph<T>::add_relu(std::string name, const std::string& input) {
  return add_node(unary(std::move(name), LayerKind::relu, input));
}

template <typename T>
const LayerNode& BasicGraph<T>::add_sigmoid(std::string name, const std::string& input) {
  return add_node(unary(std::move(name), LayerKind::sigmoid, input));
}

template <typename T>
const LayerNode& BasicGraph<T>::add_dropout(std::string name, const std::string& input, double p) {
  LayerNode n = unary(std::move(name), LayerKind::dropout, input);
  n.drop_probability = p;
  return add_node(std::move(n));
}

template <typename T>
const LayerNode& BasicGraph<T>::add_global_avg_pool(std::string name, const std::string& input) {
  return add_node(unary(std::move(name), LayerKind::global_avg_pool, input));
}

template <typename T>
const LayerNode& BasicGraph<T>::add_flatten(std::string name, const std::string& input) {
  return add_node(unary(std::move(name), LayerKind::flatten, input));
}

template <typename T>
const LayerNode& BasicGraph<T>::add_concat(std::string name, const std::vector<std::string>& inputs) {
  LayerNode n;
  n.name = std::move(name);
  n.kind = LayerKind::concat;
  n.inputs = inputs;
  return add_node(std::move(n));
}

template <typename T>
void BasicGraph<T>::set_output(const std::string& name) {
  const auto idx = find(name);
  if (!idx) throw ShapeError("unknown output node '" + name + "'");
  if (nodes_[*idx].output_shape != Shape{1}) node_error(name, "output node must produce one value per sample");
  output_ = *idx;
}

template <typename T>
void BasicGraph<T>::set_penultimate(const std::string& name) {
  if (!find(name)) throw ShapeError("unknown penultimate node '" + name + "'");
  penultimate_ = name;
}

template <typename T>
const LayerNode& BasicGraph<T>::node(const std::string& name) const {
  const auto idx = find(name);
  if (!idx) throw ShapeError("unknown node '" + name + "'");
  return nodes_[*idx];
}

template <typename T>
std::optional<std::size_t> BasicGraph<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

template <typename T>
std::size_t BasicGraph<T>::input_index() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].kind == LayerKind::input) return i;
  throw ShapeError("graph has no input node");
}

template <typename T>
std::size_t BasicGraph<T>::output_index() const {
  if (!output_) throw ShapeError("graph has no output node");
  return *output_;
}

template <typename T>
Parameter<T>& BasicGraph<T>::parameter(const std::string& name) {
  auto it = param_index_.find(name);
  if (it == param_index_.end()) throw ShapeError("unknown parameter '" + name + "'");
  return params_[it->second];
}

template <typename T>
const Parameter<T>& BasicGraph<T>::parameter(const std::string& name) const {
  auto it = param_index_.find(name);
  if (it == param_index_.end()) throw ShapeError("unknown parameter '" + name + "'");
  return params_[it->second];
}

template <typename T>
std::size_t BasicGraph<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
int BasicGraph<T>::count_layers(LayerKind kind) const {
  return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(), [&](const LayerNode& n) { return n.kind == kind; }));
}

template <typename T>
std::vector<std::size_t> BasicGraph<T>::consumers(std::size_t node) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    for (auto in : nodes_[i].input_indices)
      if (in == node) {
        out.push_back(i);
        break;
      }
  return out;
}

template <typename T>
void BasicGraph<T>::initialize_parameter_glorot(const std::string& name, std::uint64_t seed) {
  Parameter<T>& p = parameter(name);
  if (p.name.ends_with(".bias")) {
    p.value.fill(T{0});
    return;
  }
  const Shape& s = p.value.shape();
  const std::size_t receptive = s.size() == 4 ? s[2] * s[3] : 1;
  const double fan_out = static_cast<double>(s[0] * receptive);
  const double fan_in = static_cast<double>(s[1] * receptive);
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Rng rng(derive_seed(seed, "glorot", {hash_string(p.name)}));
  for (auto& v : p.value.values()) v = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
void BasicGraph<T>::initialize_glorot(std::uint64_t seed) {
  for (const auto& p : params_) initialize_parameter_glorot(p.name, seed);
}

template <typename T>
void BasicGraph<T>::validate() const {
  int inputs = 0;
  for (const auto& n : nodes_) inputs += n.kind == LayerKind::input;
  if (inputs != 1) throw ShapeError("graph must have exactly one input node");
  const auto out = output_index();
  if (nodes_[out].output_shape != Shape{1}) node_error(nodes_[out].name, "output must be scalar per sample");
  if (!consumers(out).empty()) node_error(nodes_[out].name, "output node must not feed other nodes");
  if (!penultimate_.empty()) {
    // The penultimate node must reach the output.
    std::vector<bool> reaches(nodes_.size(), false);
    reaches[out] = true;
    for (std::size_t i = nodes_.size(); i-- > 0;)
      if (reaches[i])
        for (auto in : nodes_[i].input_indices) reaches[in] = true;
    if (!reaches[*find(penultimate_)]) node_error(penultimate_, "penultimate node does not feed the output");
  }
}

template class BasicGraph<float>;
template class BasicGraph<double>;

}  // namespace cellpk
