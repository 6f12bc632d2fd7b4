#include <doctest.h>

#include <cmath>

#include "cellpk/engine.hpp"
#include "cellpk/graph.hpp"
#include "cellpk/optim.hpp"
#include "cellpk/random.hpp"
#include "gradcheck.hpp"

using namespace cellpk;

namespace {

Tensor<float> random_batch(std::uint64_t seed, Shape shape) {
  Rng rng(seed);
  Tensor<float> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

ModelGraph dropout_graph(double p) {
  ModelGraph g;
  g.add_input("in", 2, 3, 3);
  g.add_flatten("flat", "in");
  g.add_dense("fc", "flat", 10);
  g.add_dropout("drop", "fc", p);
  g.add_dense("out", "drop", 1);
  g.add_sigmoid("sig", "out");
  g.set_output("sig");
  g.initialize_glorot(5);
  return g;
}

}  // namespace

TEST_CASE("graph shape inference") {
  ModelGraph g;
  g.add_input("in", 3, 9, 7);
  CHECK(g.add_conv2d("c", "in", 4, 3).output_shape == Shape{4, 9, 7});
  CHECK(g.add_conv2d("s", "in", 2, 3, 2).output_shape == Shape{2, 5, 4});
  CHECK(g.add_maxpool("p", "c").output_shape == Shape{4, 4, 3});
  CHECK(g.add_concat("cat", {"c", "c"}).output_shape == Shape{8, 9, 7});
  CHECK(g.add_global_avg_pool("gap", "cat").output_shape == Shape{8});
  CHECK(g.add_flatten("f", "p").output_shape == Shape{48});
  CHECK(g.add_dense("d", "f", 5).output_shape == Shape{5});
  CHECK(g.parameter("c.weight").value.shape() == Shape{4, 3, 3, 3});
  CHECK(g.parameter("d.weight").value.shape() == Shape{5, 48});
  CHECK_THROWS_AS(g.add_concat("bad", {"c", "s"}), ShapeError);
  CHECK_THROWS_AS(g.add_dense("d", "f", 1), std::exception);
  CHECK_THROWS_AS(g.add_relu("r", "missing"), std::exception);
  CHECK_THROWS_AS(g.set_output("d"), std::exception);
}

TEST_CASE("glorot initialization is seeded and bounded") {
  ModelGraph a = dropout_graph(0.5), b = dropout_graph(0.5);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) CHECK(a.parameters()[i].value == b.parameters()[i].value);
  const auto& w = a.parameter("fc.weight").value;
  const double limit = std::sqrt(6.0 / (18 + 10));
  for (float v : w.values()) CHECK(std::fabs(v) <= limit);
  for (float v : a.parameter("fc.bias").value.values()) CHECK(v == 0.0f);
  ModelGraph c = dropout_graph(0.5);
  c.initialize_glorot(6);
  CHECK_FALSE(c.parameter("fc.weight").value == w);
}

TEST_CASE("dropout in eval mode is the identity") {
  ModelGraph g = dropout_graph(0.7);
  const auto x = random_batch(1, {4, 2, 3, 3});
  const auto pass = forward(g, x, Mode::eval);
  CHECK(pass.activations[*g.find("drop")] == pass.activations[*g.find("fc")]);
}

TEST_CASE("dropout in train mode is inverted and seeded") {
  ModelGraph g = dropout_graph(0.5);
  const auto x = random_batch(2, {8, 2, 3, 3});
  const auto a = forward(g, x, Mode::train, 11);
  const auto b = forward(g, x, Mode::train, 11);
  const auto c = forward(g, x, Mode::train, 12);
  const auto& in = a.activations[*g.find("fc")].values();
  const auto& out = a.activations[*g.find("drop")].values();
  CHECK(a.activations[*g.find("drop")] == b.activations[*g.find("drop")]);
  CHECK_FALSE(a.activations[*g.find("drop")] == c.activations[*g.find("drop")]);
  int kept = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (out[i] != 0.0f) {
      ++kept;
      CHECK(out[i] == doctest::Approx(in[i] * 2.0f));
    }
  }
  CHECK(kept > 0);
  CHECK(kept < static_cast<int>(in.size()));
}

TEST_CASE("inverted dropout has unit expectation over seeded masks") {
  ModelGraph g;
  g.add_input("in", 2, 3, 3);
  g.add_flatten("flat", "in");
  g.add_dropout("drop", "flat", 0.8);
  g.add_dense("out", "drop", 1);
  g.set_output("out");
  g.initialize_glorot(1);
  const auto x = random_batch(3, {1, 2, 3, 3});
  double ratio = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const auto pass = forward(g, x, Mode::train, seed);
    const auto& out = pass.activations[*g.find("drop")];
    for (std::size_t i = 0; i < out.size(); ++i, ++n) ratio += out[i] / x[i];
  }
  CHECK(std::fabs(ratio / static_cast<double>(n) - 1.0) < 0.02);
}

TEST_CASE("zero-weight dense output gives a constant sigmoid of the bias") {
  ModelGraph g = dropout_graph(0.0);
  for (auto& v : g.parameter("out.weight").value.values()) v = 0.0f;
  g.parameter("out.bias").value[0] = 0.7f;
  for (float y : predict_batch(g, random_batch(3, {5, 2, 3, 3})))
    CHECK(y == doctest::Approx(1.0 / (1.0 + std::exp(-0.7))));
}

TEST_CASE("1x1 convolution with an identity kernel copies its input") {
  ModelGraph g;
  g.add_input("in", 3, 4, 5);
  g.add_conv2d("id", "in", 3, 1);
  g.add_global_avg_pool("gap", "id");
  g.add_dense("out", "gap", 1);
  g.set_output("out");
  auto& w = g.parameter("id.weight").value;
  for (int k = 0; k < 3; ++k) w[static_cast<std::size_t>(k * 3 + k)] = 1.0f;
  const auto x = random_batch(4, {2, 3, 4, 5});
  CHECK(forward(g, x, Mode::eval).activations[*g.find("id")] == x);
}

TEST_CASE("convolution against a direct zero-padded sum") {
  ModelGraph g;
  g.add_input("in", 2, 5, 4);
  g.add_conv2d("c", "in", 3, 3, 2);
  g.add_global_avg_pool("gap", "c");
  g.add_dense("out", "gap", 1);
  g.set_output("out");
  g.initialize_glorot(9);
  auto& b = g.parameter("c.bias").value;
  b[0] = 0.1f, b[1] = -0.2f, b[2] = 0.3f;
  const auto x = random_batch(5, {1, 2, 5, 4});
  const auto pass = forward(g, x, Mode::eval);
  const auto& y = pass.activations[*g.find("c")];
  const auto& w = g.parameter("c.weight").value;
  REQUIRE(y.shape() == Shape{1, 3, 3, 2});
  for (int o = 0; o < 3; ++o)
    for (int oy = 0; oy < 3; ++oy)
      for (int ox = 0; ox < 2; ++ox) {
        double acc = b[o];
        for (int ci = 0; ci < 2; ++ci)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * 2 + ky - 1, ix = ox * 2 + kx - 1;
              if (iy < 0 || iy >= 5 || ix < 0 || ix >= 4) continue;
              acc += static_cast<double>(w[((o * 2 + ci) * 3 + ky) * 3 + kx]) * x[(ci * 5 + iy) * 4 + ix];
            }
        CHECK(y[(o * 3 + oy) * 2 + ox] == doctest::Approx(acc).epsilon(1e-5));
      }
}

TEST_CASE("finite-difference gradients for every layer kind") {
  for (const auto& c : gradcheck::cases()) {
    CAPTURE(c.kind);
    const auto o = gradcheck::run(c, 5, 123);
    CHECK(o.worst < 1e-4);
  }
}

TEST_CASE("gradients: dropped units receive none, loss scale is linear") {
  WideGraph g = dropout_graph(0.6).cast<double>();
  Tensor<double> x({3, 2, 3, 3});
  Rng rng(8);
  for (auto& v : x.values()) v = rng.uniform(-1, 1);
  Tensor<double> y({3, 1}, 0.25);
  const auto pass = forward(g, x, Mode::train, 21);
  const auto g1 = backward(g, pass, y);
  const auto g2 = backward(g, pass, y, 2.0);
  for (std::size_t p = 0; p < g1.parameters.size(); ++p)
    for (std::size_t k = 0; k < g1.parameters[p].values().size(); ++k)
      CHECK(g2.parameters[p].values()[k] == doctest::Approx(2 * g1.parameters[p].values()[k]).epsilon(1e-12));
  // out.weight[j] only sees unit j of the dropout output.
  const auto& kept = pass.activations[*g.find("drop")].values();
  const auto& gw = g1.parameters[g.node_parameters(*g.find("out"))[0]].values();
  for (std::size_t j = 0; j < 10; ++j) {
    bool any = false;
    for (std::size_t n = 0; n < 3; ++n) any = any || kept[n * 10 + j] != 0.0;
    if (!any) CHECK(gw[j] == 0.0);
  }
  CHECK_THROWS(backward(g, ForwardPass<double>{}, y));
}

TEST_CASE("adam: zero gradient leaves weights, decays moments") {
  ModelGraph g = dropout_graph(0.0);
  auto state = AdamState<float>::zeros_like(g.parameters());
  for (auto& m : state.m) m.fill(0.5f);
  for (auto& v : state.v) v.fill(0.25f);
  const auto before = g.parameters();
  std::vector<Tensor<float>> zeros;
  for (const auto& p : g.parameters()) zeros.emplace_back(p.value.shape());
  adam_step(g.parameters(), zeros, state, 1e-3);
  // Decayed moments still move the weights; with fresh state they would not.
  CHECK(state.m[0][0] == doctest::Approx(0.45f));
  CHECK(state.v[0][0] == doctest::Approx(0.25f * 0.999f));
  auto fresh = AdamState<float>::zeros_like(g.parameters());
  ModelGraph h = dropout_graph(0.0);
  adam_step(h.parameters(), zeros, fresh, 1e-3);
  for (std::size_t i = 0; i < h.parameters().size(); ++i) CHECK(h.parameters()[i].value == before[i].value);
  CHECK(fresh.step == 1);
}

TEST_CASE("adam: first step moves each weight by lr against the gradient sign") {
  ModelGraph g = dropout_graph(0.0);
  auto state = AdamState<float>::zeros_like(g.parameters());
  const auto before = g.parameters();
  std::vector<Tensor<float>> grads;
  Rng rng(3);
  for (const auto& p : g.parameters()) {
    Tensor<float> t(p.value.shape());
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-2, 2));
    grads.push_back(std::move(t));
  }
  const double lr = 1e-3;
  adam_step(g.parameters(), grads, state, lr);
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (std::size_t k = 0; k < grads[i].values().size(); ++k) {
      const double gk = grads[i].values()[k];
      // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
      const double expect = before[i].value.values()[k] - lr * gk / (std::fabs(gk) + 1e-8);
      CHECK(g.parameters()[i].value.values()[k] == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("adam rejects mismatched gradients") {
  ModelGraph g = dropout_graph(0.0);
  auto state = AdamState<float>::zeros_like(g.parameters());
  std::vector<Tensor<float>> bad{Tensor<float>({1})};
  CHECK_THROWS(adam_step(g.parameters(), bad, state, 1e-3));
}
