#pragma once

// Finite-difference checks of the engine's backward pass, one small random
// graph per layer kind, in double precision.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cellpk/engine.hpp"
#include "cellpk/graph.hpp"
#include "cellpk/random.hpp"
#include "oracles.hpp"

namespace gradcheck {

using cellpk::Rng;
using cellpk::WideGraph;

struct Case {
  std::string kind;
  std::function<WideGraph(Rng&)> build;
  bool train_mode = false;
};

inline int pick(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

inline void finish(WideGraph& g, const std::string& last, Rng& rng) {
  if (g.node(last).output_shape.size() != 1) g.add_flatten("flat_head", last);
  g.add_dense("out", g.node(last).output_shape.size() == 1 ? last : "flat_head", 1);
  g.add_sigmoid("out_sigmoid", "out");
  g.set_output("out_sigmoid");
  g.initialize_glorot(rng.next());
  for (auto& p : g.parameters())
    if (p.name.ends_with(".bias"))
      for (auto& v : p.value.values()) v = rng.uniform(-0.3, 0.3);
}

inline std::vector<Case> cases() {
  std::vector<Case> out;
  out.push_back({"conv2d", [](Rng& r) {
                   WideGraph g;
                   g.add_input("in", pick(r, 1, 3), pick(r, 3, 7), pick(r, 3, 7));
                   const int k = std::vector<int>{1, 3, 5}[r.below(3)];
                   g.add_conv2d("layer", "in", pick(r, 1, 3), k, pick(r, 1, 2));
                   finish(g, "layer", r);
                   return g;
                 }});
  out.push_back({"maxpool", [](Rng& r) {
                   WideGraph g;
                   g.add_input("in", pick(r, 1, 2), pick(r, 4, 7), pick(r, 4, 7));
                   g.add_conv2d("pre", "in", 2, 3);
                   g.add_maxpool("layer", "pre", 2, pick(r, 1, 2));
                   finish(g, "layer", r);
                   return g;
                 }});
  out.push_back({"concat", [](Rng& r) {
                   WideGraph g;
                   g.add_input("in", pick(r, 1, 3), pick(r, 3, 5), pick(r, 3, 5));
                   g.add_conv2d("left", "in", pick(r, 1, 3), 1);
                   g.add_conv2d("right", "in", pick(r, 1, 3), 3);
                   g.add_concat("layer", {"left", "right", "in"});
                   finish(g, "layer", r);
                   return g;
                 }});
  out.push_back({"dense", [](Rng& r) {
                   WideGraph g;
                   g.add_input("in", pick(r, 1, 2), pick(r, 2, 4), pick(r, 2, 4));
                   g.add_flatten("flat", "in");
                   g.add_dense("layer", "flat", pick(r, 1, 6));
                   finish(g, "layer", r);
                   return g;
                 }});
  out.push_back({"relu", [](Rng& r) {
                   WideGraph g;
                   g.add_input("in", pick(r, 1, 2), pick(r, 3, 5), pick(r, 3, 5));
                   g.add_conv2d("pre", "in", 2, 3);
                   g.add_relu("layer", "pre");
                   finish(g, "layer", r);
                   return g;
                 }});
  out.push_back({"sigmoid", [](Rng& r) {
                   WideGraph g;
                   g.add_input("in", 1, pick(r, 2, 4), pick(r, 2, 4));
                   g.add_flatten("flat", "in");
                   g.add_dense("pre", "flat", pick(r, 2, 5));
                   g.add_sigmoid("layer", "pre");
                   finish(g, "layer", r);
                   return g;
                 }});
  out.push_back({"dropout",
                 [](Rng& r) {
                   WideGraph g;
                   g.add_input("in", 1, pick(r, 2, 4), pick(r, 2, 4));
                   g.add_flatten("flat", "in");
                   g.add_dense("pre", "flat", pick(r, 4, 8));
                   g.add_dropout("layer", "pre", r.uniform(0.2, 0.8));
                   finish(g, "layer", r);
                   return g;
                 },
                 true});
  out.push_back({"global_avg_pool", [](Rng& r) {
                   WideGraph g;
                   g.add_input("in", pick(r, 1, 3), pick(r, 2, 5), pick(r, 2, 5));
                   g.add_conv2d("pre", "in", pick(r, 1, 3), 3);
                   g.add_global_avg_pool("layer", "pre");
                   finish(g, "layer", r);
                   return g;
                 }});
  out.push_back({"flatten", [](Rng& r) {
                   WideGraph g;
                   g.add_input("in", pick(r, 1, 3), pick(r, 2, 4), pick(r, 2, 4));
                   g.add_flatten("layer", "in");
                   finish(g, "layer", r);
                   return g;
                 }});
  return out;
}

struct Outcome {
  double worst = 0.0;
  int seeds = 0;
  int redrawn = 0;
};

// Pre-activations of relus and max-pool windows within `margin` of a kink
// make central differences meaningless; such draws are redrawn.
inline bool near_kink(const WideGraph& g, const cellpk::ForwardPass<double>& pass, double margin) {
  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    const auto& n = g.node(i);
    if (n.kind == cellpk::LayerKind::relu) {
      for (double v : pass.activations[n.input_indices[0]].values())
        if (std::fabs(v) < margin) return true;
    }
    if (n.kind == cellpk::LayerKind::maxpool) {
      const auto& in = pass.activations[n.input_indices[0]];
      const auto& s = in.shape();
      const std::size_t H = s[2], W = s[3];
      for (std::size_t b = 0; b < s[0] * s[1]; ++b)
        for (std::size_t oy = 0; oy + n.kernel <= H; oy += n.stride)
          for (std::size_t ox = 0; ox + n.kernel <= W; ox += n.stride) {
            std::vector<double> win;
            for (int ky = 0; ky < n.kernel; ++ky)
              for (int kx = 0; kx < n.kernel; ++kx) win.push_back(in.values()[b * H * W + (oy + ky) * W + ox + kx]);
            std::sort(win.begin(), win.end());
            if (win[win.size() - 1] - win[win.size() - 2] < margin) return true;
          }
    }
  }
  return false;
}

inline Outcome run(const Case& c, int seeds, std::uint64_t master) {
  Outcome o;
  std::uint64_t draw = 0;
  while (o.seeds < seeds) {
    Rng rng(cellpk::derive_seed(master, c.kind, {draw++}));
    WideGraph g = c.build(rng);
    const auto& shape = g.input_shape();
    const std::size_t n = 2;
    cellpk::Tensor<double> x({n, shape[0], shape[1], shape[2]});
    for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
    cellpk::Tensor<double> y({n, 1});
    for (auto& v : y.values()) v = rng.uniform(0.0, 1.0);
    const auto mode = c.train_mode ? cellpk::Mode::train : cellpk::Mode::eval;
    const std::uint64_t dseed = 77;

    const auto pass = cellpk::forward(g, x, mode, dseed);
    if (near_kink(g, pass, 1e-3)) {
      ++o.redrawn;
      continue;
    }
    const auto grads = cellpk::backward(g, pass, y);

    std::vector<double*> entries;
    std::vector<double> analytic;
    for (std::size_t p = 0; p < g.parameters().size(); ++p) {
      auto vals = g.parameters()[p].value.values();
      for (std::size_t k = 0; k < vals.size(); ++k) {
        entries.push_back(&vals[k]);
        analytic.push_back(grads.parameters[p].values()[k]);
      }
    }
    for (std::size_t k = 0; k < x.values().size(); ++k) {
      entries.push_back(&x.values()[k]);
      analytic.push_back(grads.input.values()[k]);
    }
    const auto loss = [&] {
      const auto p = cellpk::forward(g, x, mode, dseed);
      return cellpk::mse_loss(cellpk::output_of(g, p), y);
    };
    const auto numeric = oracle::numeric_gradient(loss, entries, 1e-5);
    o.worst = std::max(o.worst, oracle::relative_error(analytic, numeric));
    ++o.seeds;
  }
  return o;
}

}  // namespace gradcheck
