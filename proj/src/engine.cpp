#include "cellpk/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cellpk/random.hpp"

namespace cellpk {

namespace {

[[noreturn]] void fail(const LayerNode& n, const std::string& what) { throw ShapeError("node '" + n.name + "': " + what); }

Shape batched(std::size_t batch, const Shape& per_sample) {
  Shape s{batch};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w, out_c, out_h, out_w;
  int k, stride, pad;

  // Output columns ox whose input column ox*stride + kx - pad is in range.
  std::pair<long, long> ox_range(int kx) const {
    const long shift = static_cast<long>(kx) - pad;
    long lo = 0;
    if (shift < 0) lo = (-shift + stride - 1) / stride;
    const long last = static_cast<long>(in_w) - 1 - shift;
    long hi = last < 0 ? -1 : last / stride;
    hi = std::min(hi, static_cast<long>(out_w) - 1);
    return {lo, hi};
  }
};

ConvGeometry conv_geometry(const LayerNode& n, const Shape& in, const Shape& out) {
  return {in[0], in[1], in[2], in[3], out[1], out[2], out[3], n.kernel, n.stride, n.kernel / 2};
}

template <typename T>
void conv_forward(const ConvGeometry& g, const T* in, const T* w, const T* b, T* out) {
  const std::size_t kk = static_cast<std::size_t>(g.k) * g.k;
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::size_t in_plane = g.in_h * g.in_w;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out_c; ++o) {
      T* op = out + (n * g.out_c + o) * out_plane;
      std::fill(op, op + out_plane, b[o]);
      for (std::size_t c = 0; c < g.in_c; ++c) {
        const T* ip = in + (n * g.in_c + c) * in_plane;
        const T* wp = w + (o * g.in_c + c) * kk;
        for (int ky = 0; ky < g.k; ++ky) {
          for (int kx = 0; kx < g.k; ++kx) {
            const T wv = wp[ky * g.k + kx];
            const auto [lo, hi] = g.ox_range(kx);
            if (lo > hi) continue;
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
              const long iy = static_cast<long>(oy) * g.stride + ky - g.pad;
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              const long base = iy * static_cast<long>(g.in_w) + kx - g.pad;
              T* orow = op + oy * g.out_w;
              if (g.stride == 1) {
                for (long ox = lo; ox <= hi; ++ox) orow[ox] += wv * ip[base + ox];
              } else {
                for (long ox = lo; ox <= hi; ++ox) orow[ox] += wv * ip[base + ox * g.stride];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward(const ConvGeometry& g, const T* in, const T* w, const T* gout, T* gin, T* gw, T* gb) {
  const std::size_t kk = static_cast<std::size_t>(g.k) * g.k;
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::size_t in_plane = g.in_h * g.in_w;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out_c; ++o) {
      const T* gp = gout + (n * g.out_c + o) * out_plane;
      T bsum{0};
      for (std::size_t i = 0; i < out_plane; ++i) bsum += gp[i];
      gb[o] += bsum;
      for (std::size_t c = 0; c < g.in_c; ++c) {
        const T* ip = in + (n * g.in_c + c) * in_plane;
        T* gip = gin ? gin + (n * g.in_c + c) * in_plane : nullptr;
        const T* wp = w + (o * g.in_c + c) * kk;
        T* gwp = gw + (o * g.in_c + c) * kk;
        for (int ky = 0; ky < g.k; ++ky) {
          for (int kx = 0; kx < g.k; ++kx) {
            const T wv = wp[ky * g.k + kx];
            const auto [lo, hi] = g.ox_range(kx);
            if (lo > hi) continue;
            T acc{0};
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
              const long iy = static_cast<long>(oy) * g.stride + ky - g.pad;
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              const long base = iy * static_cast<long>(g.in_w) + kx - g.pad;
              const T* grow = gp + oy * g.out_w;
              for (long ox = lo; ox <= hi; ++ox) acc += grow[ox] * ip[base + ox * g.stride];
              if (gip) {
                for (long ox = lo; ox <= hi; ++ox) gip[base + ox * g.stride] += wv * grow[ox];
              }
            }
            gwp[ky * g.k + kx] += acc;
          }
        }
      }
    }
  }
}

template <typename T>
T sigmoid(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

}  // namespace

template <typename T>
ForwardPass<T> forward(const BasicGraph<T>& graph, const Tensor<T>& batch, Mode mode, std::uint64_t seed) {
  const auto& nodes = graph.nodes();
  if (nodes.empty()) throw ShapeError("forward: empty graph");
  const LayerNode& input = graph.input_node();
  if (batch.rank() != 4 || !std::equal(input.output_shape.begin(), input.output_shape.end(), batch.shape().begin() + 1))
    fail(input, "batch " + shape_string(batch.shape()) + " does not match input " +
                    shape_string(batched(0, input.output_shape)));
  const std::size_t n_batch = batch.dim(0);
  if (n_batch == 0) fail(input, "empty batch");

  ForwardPass<T> pass;
  pass.mode = mode;
  pass.seed = seed;
  pass.activations.resize(nodes.size());
  pass.keep_masks.resize(nodes.size());
  pass.argmax.resize(nodes.size());

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const LayerNode& n = nodes[i];
    Tensor<T>& out = pass.activations[i];
    if (n.kind == LayerKind::input) {
      out = batch;
      continue;
    }
    const Tensor<T>& in = pass.activations[n.input_indices.at(0)];
    const auto& params = graph.node_parameters(i);
    switch (n.kind) {
      case LayerKind::conv2d: {
        out = Tensor<T>(batched(n_batch, n.output_shape));
        const auto& w = graph.parameters()[params[0]].value;
        const auto& b = graph.parameters()[params[1]].value;
        conv_forward(conv_geometry(n, in.shape(), out.shape()), in.data(), w.data(), b.data(), out.data());
        break;
      }
      case LayerKind::maxpool: {
        out = Tensor<T>(batched(n_batch, n.output_shape));
        auto& arg = pass.argmax[i];
        arg.resize(out.size());
        const std::size_t ch = in.dim(1), h = in.dim(2), w = in.dim(3);
        const std::size_t oh = out.dim(2), ow = out.dim(3);
        for (std::size_t p = 0; p < n_batch * ch; ++p) {
          const T* ip = in.data() + p * h * w;
          for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
              std::size_t best = (oy * n.stride) * w + ox * n.stride;
              for (int ky = 0; ky < n.kernel; ++ky)
                for (int kx = 0; kx < n.kernel; ++kx) {
                  const std::size_t idx = (oy * n.stride + ky) * w + ox * n.stride + kx;
                  if (ip[idx] > ip[best]) best = idx;
                }
              const std::size_t o = p * oh * ow + oy * ow + ox;
              out[o] = ip[best];
              arg[o] = static_cast<std::uint32_t>(p * h * w + best);
            }
        }
        break;
      }
      case LayerKind::dense: {
        out = Tensor<T>(batched(n_batch, n.output_shape));
        const auto& w = graph.parameters()[params[0]].value;
        const auto& b = graph.parameters()[params[1]].value;
        const std::size_t in_f = in.size() / n_batch;
        const std::size_t units = static_cast<std::size_t>(n.units);
        for (std::size_t s = 0; s < n_batch; ++s)
          for (std::size_t u = 0; u < units; ++u) {
            T acc = b[u];
            const T* wr = w.data() + u * in_f;
            const T* x = in.data() + s * in_f;
            for (std::size_t f = 0; f < in_f; ++f) acc += wr[f] * x[f];
            out[s * units + u] = acc;
          }
        break;
      }
      case LayerKind::relu:
        out = in;
        for (auto& v : out.values()) v = v > T{0} ? v : T{0};
        break;
      case LayerKind::sigmoid:
        out = in;
        for (auto& v : out.values()) v = sigmoid(v);
        break;
      case LayerKind::dropout: {
        out = in;
        if (mode == Mode::eval || n.drop_probability == 0.0) break;
        auto& mask = pass.keep_masks[i];
        mask.resize(in.size());
        Rng rng(derive_seed(seed, "dropout", {hash_string(n.name)}));
        const T scale = static_cast<T>(1.0 / (1.0 - n.drop_probability));
        for (std::size_t k = 0; k < in.size(); ++k) {
          mask[k] = rng.uniform() >= n.drop_probability ? 1 : 0;
          out[k] = mask[k] ? in[k] * scale : T{0};
        }
        break;
      }
      case LayerKind::global_avg_pool: {
        out = Tensor<T>(batched(n_batch, n.output_shape));
        const std::size_t plane = in.dim(2) * in.dim(3);
        for (std::size_t p = 0; p < n_batch * in.dim(1); ++p) {
          T acc{0};
          for (std::size_t k = 0; k < plane; ++k) acc += in[p * plane + k];
          out[p] = acc / static_cast<T>(plane);
        }
        break;
      }
      case LayerKind::flatten:
        out = in;
        out.reshape(batched(n_batch, n.output_shape));
        break;
      case LayerKind::concat: {
        out = Tensor<T>(batched(n_batch, n.output_shape));
        const std::size_t out_stride = out.size() / n_batch;
        std::size_t offset = 0;
        for (auto src : n.input_indices) {
          const Tensor<T>& part = pass.activations[src];
          const std::size_t block = part.size() / n_batch;
          for (std::size_t s = 0; s < n_batch; ++s)
            std::copy_n(part.data() + s * block, block, out.data() + s * out_stride + offset);
          offset += block;
        }
        break;
      }
      case LayerKind::input:
        break;
    }
  }
  return pass;
}

template <typename T>
const Tensor<T>& output_of(const BasicGraph<T>& graph, const ForwardPass<T>& pass) {
  if (pass.activations.size() != graph.nodes().size()) throw ShapeError("forward pass does not belong to this graph");
  return pass.activations[graph.output_index()];
}

template <typename T>
T mse_loss(const Tensor<T>& output, const Tensor<T>& targets) {
  if (output.size() != targets.size()) throw ShapeError("mse_loss: output/target size mismatch");
  T acc{0};
  for (std::size_t i = 0; i < output.size(); ++i) {
    const T d = output[i] - targets[i];
    acc += d * d;
  }
  return acc / static_cast<T>(output.size());
}

template <typename T>
Gradients<T> backward(const BasicGraph<T>& graph, const ForwardPass<T>& pass, const Tensor<T>& targets, T loss_scale) {
  const auto& nodes = graph.nodes();
  if (pass.empty() || pass.activations.size() != nodes.size())
    throw ShapeError("backward: missing forward context (run forward on this graph first)");
  const std::size_t out_idx = graph.output_index();
  const Tensor<T>& out = pass.activations[out_idx];
  if (targets.size() != out.size())
    throw ShapeError("backward: " + std::to_string(targets.size()) + " targets for " + std::to_string(out.size()) +
                     " outputs");
  const std::size_t n_batch = out.dim(0);

  Gradients<T> grads;
  grads.loss = loss_scale * mse_loss(out, targets);
  grads.parameters.reserve(graph.parameters().size());
  for (const auto& p : graph.parameters()) grads.parameters.emplace_back(p.value.shape());

  std::vector<Tensor<T>> node_grad(nodes.size());
  node_grad[out_idx] = Tensor<T>(out.shape());
  const T factor = loss_scale * T{2} / static_cast<T>(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) node_grad[out_idx][k] = factor * (out[k] - targets[k]);

  auto grad_for = [&](std::size_t idx) -> Tensor<T>& {
    if (node_grad[idx].empty()) node_grad[idx] = Tensor<T>(pass.activations[idx].shape());
    return node_grad[idx];
  };

  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (node_grad[i].empty()) continue;
    const LayerNode& n = nodes[i];
    const Tensor<T>& g = node_grad[i];
    if (n.kind == LayerKind::input) {
      grads.input = g;
      continue;
    }
    const std::size_t src = n.input_indices.at(0);
    const Tensor<T>& in = pass.activations[src];
    const auto& params = graph.node_parameters(i);
    switch (n.kind) {
      case LayerKind::conv2d: {
        const auto& w = graph.parameters()[params[0]].value;
        Tensor<T>& gin = grad_for(src);
        conv_backward(conv_geometry(n, in.shape(), g.shape()), in.data(), w.data(), g.data(), gin.data(),
                      grads.parameters[params[0]].data(), grads.parameters[params[1]].data());
        break;
      }
      case LayerKind::maxpool: {
        Tensor<T>& gin = grad_for(src);
        const auto& arg = pass.argmax[i];
        for (std::size_t k = 0; k < g.size(); ++k) gin[arg[k]] += g[k];
        break;
      }
      case LayerKind::dense: {
        const auto& w = graph.parameters()[params[0]].value;
        T* gw = grads.parameters[params[0]].data();
        T* gb = grads.parameters[params[1]].data();
        Tensor<T>& gin = grad_for(src);
        const std::size_t in_f = in.size() / n_batch;
        const std::size_t units = static_cast<std::size_t>(n.units);
        for (std::size_t s = 0; s < n_batch; ++s)
          for (std::size_t u = 0; u < units; ++u) {
            const T gu = g[s * units + u];
            gb[u] += gu;
            const T* x = in.data() + s * in_f;
            const T* wr = w.data() + u * in_f;
            T* gwr = gw + u * in_f;
            T* gx = gin.data() + s * in_f;
            for (std::size_t f = 0; f < in_f; ++f) {
              gwr[f] += gu * x[f];
              gx[f] += gu * wr[f];
            }
          }
        break;
      }
      case LayerKind::relu: {
        Tensor<T>& gin = grad_for(src);
        for (std::size_t k = 0; k < g.size(); ++k)
          if (in[k] > T{0}) gin[k] += g[k];
        break;
      }
      case LayerKind::sigmoid: {
        Tensor<T>& gin = grad_for(src);
        const Tensor<T>& y = pass.activations[i];
        for (std::size_t k = 0; k < g.size(); ++k) gin[k] += g[k] * y[k] * (T{1} - y[k]);
        break;
      }
      case LayerKind::dropout: {
        Tensor<T>& gin = grad_for(src);
        const auto& mask = pass.keep_masks[i];
        if (mask.empty()) {
          for (std::size_t k = 0; k < g.size(); ++k) gin[k] += g[k];
        } else {
          const T scale = static_cast<T>(1.0 / (1.0 - n.drop_probability));
          for (std::size_t k = 0; k < g.size(); ++k)
            if (mask[k]) gin[k] += g[k] * scale;
        }
        break;
      }
      case LayerKind::global_avg_pool: {
        Tensor<T>& gin = grad_for(src);
        const std::size_t plane = in.dim(2) * in.dim(3);
        const T inv = T{1} / static_cast<T>(plane);
        for (std::size_t p = 0; p < g.size(); ++p)
          for (std::size_t k = 0; k < plane; ++k) gin[p * plane + k] += g[p] * inv;
        break;
      }
      case LayerKind::flatten: {
        Tensor<T>& gin = grad_for(src);
        for (std::size_t k = 0; k < g.size(); ++k) gin[k] += g[k];
        break;
      }
      case LayerKind::concat: {
        const std::size_t out_stride = g.size() / n_batch;
        std::size_t offset = 0;
        for (auto part_idx : n.input_indices) {
          Tensor<T>& gp = grad_for(part_idx);
          const std::size_t block = gp.size() / n_batch;
          for (std::size_t s = 0; s < n_batch; ++s)
            for (std::size_t k = 0; k < block; ++k) gp[s * block + k] += g[s * out_stride + offset + k];
          offset += block;
        }
        break;
      }
      case LayerKind::input:
        break;
    }
  }
  if (grads.input.empty()) grads.input = Tensor<T>(pass.activations[graph.input_index()].shape());
  return grads;
}

template <typename T>
std::vector<T> predict_batch(const BasicGraph<T>& graph, const Tensor<T>& batch) {
  const auto pass = forward(graph, batch, Mode::eval);
  const auto& out = output_of(graph, pass);
  return {out.values().begin(), out.values().end()};
}

template ForwardPass<float> forward(const BasicGraph<float>&, const Tensor<float>&, Mode, std::uint64_t);
template ForwardPass<double> forward(const BasicGraph<double>&, const Tensor<double>&, Mode, std::uint64_t);
template const Tensor<float>& output_of(const BasicGraph<float>&, const ForwardPass<float>&);
template const Tensor<double>& output_of(const BasicGraph<double>&, const ForwardPass<double>&);
template Gradients<float> backward(const BasicGraph<float>&, const ForwardPass<float>&, const Tensor<float>&, float);
template Gradients<double> backward(const BasicGraph<double>&, const ForwardPass<double>&, const Tensor<double>&,
                                    double);
template float mse_loss(const Tensor<float>&, const Tensor<float>&);
template double mse_loss(const Tensor<double>&, const Tensor<double>&);
template std::vector<float> predict_batch(const BasicGraph<float>&, const Tensor<float>&);
template std::vector<double> predict_batch(const BasicGraph<double>&, const Tensor<double>&);

}  // namespace cellpk
