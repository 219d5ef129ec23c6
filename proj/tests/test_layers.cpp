#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "destine/gradcheck.hpp"
#include "destine/layers.hpp"
#include "destine/optim.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace destine;
using namespace destine::nn;
using destine::testutil::random_tensor;

namespace {

void make_identity(LinearLayer& lin) {
  for (int64_t i = 0; i < lin.weight.size(); ++i) lin.weight.data()[i] = 0.0;
  for (int i = 0; i < lin.weight.rows(); ++i) lin.weight.at(i, i) = 1.0;
  if (lin.has_bias) {
    for (int64_t i = 0; i < lin.bias.size(); ++i) lin.bias.data()[i] = 0.0;
  }
}

MultiHeadAttentionLayer identity_attention(int dim) {
  Rng rng(0);
  MultiHeadAttentionLayer mha(rng, dim, 1);
  make_identity(mha.wq);
  make_identity(mha.wk);
  make_identity(mha.wv);
  make_identity(mha.wo);
  return mha;
}

}  // namespace

TEST_CASE("single-token attention returns the value row") {
  MultiHeadAttentionLayer mha = identity_attention(3);
  Graph g;
  Var q = g.constant({1, 3}, {0.4, -1.0, 2.0});
  Var v = g.constant({1, 3}, {7.0, 8.0, 9.0});
  Var y = mha.apply(g, q, q, v);
  for (int j = 0; j < 3; ++j) CHECK(g.value(y).at(0, j) == 7.0 + j);
}

TEST_CASE("masked attention gives blocked tokens exactly zero weight") {
  // With identity projections and V = I, the output row equals the attention
  // weights over tokens.
  MultiHeadAttentionLayer mha = identity_attention(3);
  Rng rng(5);
  Tensor tokens = random_tensor(rng, {3, 3});
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  AttentionMask mask(3, 3);
  mask.set_allowed(0, 2, false);
  Graph g;
  Var y = mha.apply(g, g.constant(tokens), g.constant(tokens), g.constant(eye), &mask);
  CHECK(g.value(y).at(0, 2) == 0.0);
  double row0 = g.value(y).at(0, 0) + g.value(y).at(0, 1);
  CHECK(row0 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("attention rejects bad masks") {
  Rng rng(6);
  MultiHeadAttentionLayer mha(rng, 4, 2);
  Tensor x = random_tensor(rng, {3, 4});
  Graph g;
  Var vx = g.constant(x);
  AttentionMask wrong(2, 3);
  CHECK_THROWS_AS(mha.apply(g, vx, vx, vx, &wrong), DimensionError);
  AttentionMask blocked(3, 3);
  for (int c = 0; c < 3; ++c) blocked.set_allowed(2, c, false);
  CHECK_THROWS_AS(mha.apply(g, vx, vx, vx, &blocked), DegenerateMaskError);
}

TEST_CASE("attention gradients match finite differences across seeds") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(40 + seed);
    MultiHeadAttentionLayer mha(rng, 8, 2);
    Tensor x = random_tensor(rng, {4, 8});
    Tensor w = random_tensor(rng, {4, 8});
    std::vector<Tensor*> leaves{&x,           &mha.wq.weight, &mha.wq.bias, &mha.wk.weight,
                                &mha.wk.bias, &mha.wv.weight, &mha.wv.bias, &mha.wo.weight,
                                &mha.wo.bias};
    auto report = grad_check(
        [&](Graph& g) {
          Var vx = g.param(x);
          return g.sum(g.mul(mha.apply(g, vx, vx, vx), g.constant(w)));
        },
        leaves);
    CAPTURE(seed);
    CHECK(report.max_rel_err < 1e-4);
  }
}

TEST_CASE("mlp with zero weights returns zero") {
  Rng rng(7);
  MlpLayer mlp(rng, {5, 4, 3});
  for (LinearLayer& lin : mlp.layers) {
    for (int64_t i = 0; i < lin.weight.size(); ++i) lin.weight.data()[i] = 0.0;
    for (int64_t i = 0; i < lin.bias.size(); ++i) lin.bias.data()[i] = 0.0;
  }
  Graph g;
  Var y = mlp.apply(g, g.constant(random_tensor(rng, {2, 5})));
  for (int64_t i = 0; i < g.value(y).size(); ++i) CHECK(g.value(y).data()[i] == 0.0);
}

TEST_CASE("one-layer mlp is a plain affine map") {
  Rng rng(8);
  MlpLayer mlp(rng, {3, 2});
  Tensor x = random_tensor(rng, {4, 3});
  Graph g;
  Var y = mlp.apply(g, g.constant(x));
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 2; ++c) {
      double expect = mlp.layers[0].bias.at(0, c);
      for (int i = 0; i < 3; ++i) expect += x.at(r, i) * mlp.layers[0].weight.at(i, c);
      CHECK(g.value(y).at(r, c) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("two-layer mlp gradients match finite differences") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(90 + seed);
    MlpLayer mlp(rng, {6, 8, 2});
    Tensor x = random_tensor(rng, {3, 6});
    std::vector<Tensor*> leaves{&x};
    for (LinearLayer& lin : mlp.layers) {
      leaves.push_back(&lin.weight);
      leaves.push_back(&lin.bias);
    }
    auto report = grad_check([&](Graph& g) { return g.sum(mlp.apply(g, g.param(x))); }, leaves);
    CAPTURE(seed);
    CHECK(report.max_rel_err < 1e-4);
  }
}

TEST_CASE("linear layer gradient check is tight") {
  Rng rng(17);
  LinearLayer lin(rng, 5, 4);
  Tensor x = random_tensor(rng, {3, 5});
  auto report = grad_check([&](Graph& g) { return g.sum(lin.apply(g, g.param(x))); },
                           {&x, &lin.weight, &lin.bias});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("decoder layer gradients match finite differences") {
  Rng rng(18);
  DecoderLayer layer(rng, 6, 2, 8);
  Tensor q = random_tensor(rng, {4, 6});
  Tensor mem = random_tensor(rng, {3, 6});
  ParamSet ps;
  layer.register_into(ps, "dec");
  std::vector<Tensor*> leaves{&q, &mem};
  for (const NamedParam& p : ps.items()) leaves.push_back(p.tensor);
  auto report = grad_check(
      [&](Graph& g) { return g.sum(layer.apply(g, g.param(q), g.param(mem))); }, leaves);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("adam with zero gradients and zero weight decay is a no-op") {
  Tensor x({1, 2}, {1.5, -2.5});
  ParamSet ps;
  ps.add("x", x);
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  AdamOptimizer opt(ps, cfg);
  opt.zero_grad();
  opt.step(0.1);
  CHECK(x.data()[0] == 1.5);
  CHECK(x.data()[1] == -2.5);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam steps descend on a scalar") {
  Tensor x({1, 1}, {1.0});
  ParamSet ps;
  ps.add("x", x);
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  AdamOptimizer opt(ps, cfg);
  x.grad()[0] = 1.0;
  opt.step(0.1);
  CHECK(x.data()[0] < 1.0);
}

TEST_CASE("adam drives a quadratic to its minimum") {
  Tensor x({1, 1}, {1.0});
  ParamSet ps;
  ps.add("x", x);
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  AdamOptimizer opt(ps, cfg);
  for (int i = 0; i < 100; ++i) {
    opt.zero_grad();
    x.grad()[0] = 2.0 * x.data()[0];
    opt.step(0.1);
  }
  CHECK(std::fabs(x.data()[0]) < 1e-2);
}

TEST_CASE("adam rejects non-finite gradients") {
  Tensor x({1, 1}, {1.0});
  ParamSet ps;
  ps.add("x", x);
  AdamOptimizer opt(ps);
  x.grad()[0] = std::nan("");
  CHECK_THROWS_AS(opt.step(0.1), NumericError);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(0, 100, 5e-4) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(cosine_lr(100, 100, 5e-4) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cosine_lr(50, 100, 5e-4) == doctest::Approx(2.5e-4).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_lr(101, 100, 5e-4), RangeError);
}

TEST_CASE("layer construction is deterministic in the seed") {
  Rng r1(123), r2(123);
  LinearLayer a(r1, 7, 7), b(r2, 7, 7);
  for (int64_t i = 0; i < a.weight.size(); ++i) CHECK(a.weight.data()[i] == b.weight.data()[i]);
}

TEST_CASE("embed_dim must divide into heads") {
  Rng rng(1);
  CHECK_THROWS_AS(MultiHeadAttentionLayer(rng, 10, 3), DimensionError);
}
