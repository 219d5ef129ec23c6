#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "destine/gradcheck.hpp"
#include "destine/graph.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace destine;
using namespace destine::nn;
using destine::testutil::random_tensor;

TEST_CASE("softmax of a constant row is uniform") {
  Graph g;
  Var y = g.row_softmax(g.constant({1, 3}, {0.0, 0.0, 0.0}));
  for (int j = 0; j < 3; ++j) {
    CHECK(g.value(y).at(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("matmul by identity returns the input") {
  Rng rng(11);
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  for (int m : {1, 4, 7}) {
    Tensor x = random_tensor(rng, {3, m});
    Graph g;
    Var y = g.matmul(g.constant(eye), g.constant(x));
    for (int64_t i = 0; i < x.size(); ++i) {
      CHECK(g.value(y).data()[i] == x.data()[i]);
    }
  }
}

TEST_CASE("add forward and backward with all-ones seed") {
  Graph g;
  Tensor a({1, 2}, {1.0, 2.0});
  Tensor b({1, 2}, {3.0, 4.0});
  Var va = g.leaf(a);
  Var vb = g.leaf(b);
  Var y = g.add(va, vb);
  CHECK(g.value(y).data()[0] == 4.0);
  CHECK(g.value(y).data()[1] == 6.0);
  Var s = g.sum(y);
  g.backward(s);
  for (double gv : g.grad(va)) CHECK(gv == 1.0);
  for (double gv : g.grad(vb)) CHECK(gv == 1.0);
}

TEST_CASE("add gradient matches finite differences") {
  Rng rng(3);
  Tensor a = random_tensor(rng, {2, 3});
  Tensor b = random_tensor(rng, {2, 3});
  auto report = grad_check(
      [&](Graph& g) { return g.sum(g.add(g.param(a), g.param(b))); }, {&a, &b});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("shape mismatch raises dimension errors") {
  Graph g;
  Var a = g.constant({2, 2}, {1, 2, 3, 4});
  Var b = g.constant({1, 2}, {1, 2});
  CHECK_THROWS_AS(g.add(a, b), DimensionError);
  CHECK_THROWS_AS(g.matmul(b, b), DimensionError);
  CHECK_THROWS_AS(g.mul(a, b), DimensionError);
}

TEST_CASE("non-finite output raises a numeric error") {
  Graph g;
  Var a = g.constant({1, 1}, {-1.0});
  CHECK_THROWS_AS(g.log(a), NumericError);
  Var x = g.constant({1, 1}, {1000.0});
  CHECK_THROWS_AS(g.exp(x), NumericError);
}

TEST_CASE("softmax rows sum to one and stay nonnegative") {
  for (uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(seed);
    Tensor x = random_tensor(rng, {6, 9}, 3.0);
    Graph g;
    Var y = g.row_softmax(g.constant(x));
    for (int r = 0; r < 6; ++r) {
      double s = 0.0;
      for (int c = 0; c < 9; ++c) {
        const double v = g.value(y).at(r, c);
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::fabs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("masked softmax puts exactly zero on blocked positions") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    Tensor x = random_tensor(rng, {4, 5}, 5.0);
    AttentionMask mask(4, 5);
    // Block a deterministic pseudo-random pattern, keep one allowed per row.
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 5; ++c) {
        if (c != r && rng.uniform() < 0.5) mask.set_allowed(r, c, false);
      }
    }
    Graph g;
    Var y = g.row_softmax(g.constant(x), &mask);
    for (int r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int c = 0; c < 5; ++c) {
        const double v = g.value(y).at(r, c);
        if (!mask.is_allowed(r, c)) CHECK(v == 0.0);
        s += v;
      }
      CHECK(std::fabs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("fully blocked mask row is rejected") {
  AttentionMask mask(3, 3);
  for (int c = 0; c < 3; ++c) mask.set_allowed(1, c, false);
  Graph g;
  Var x = g.constant({3, 3}, std::vector<double>(9, 0.5));
  CHECK_THROWS_AS(g.row_softmax(x, &mask), DegenerateMaskError);
}

TEST_CASE("softmax gradient matches finite differences") {
  Rng rng(7);
  Tensor x = random_tensor(rng, {3, 4});
  Tensor w = random_tensor(rng, {3, 4});
  auto report = grad_check(
      [&](Graph& g) { return g.sum(g.mul(g.row_softmax(g.param(x)), g.param(w))); }, {&x});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("masked softmax gradient matches finite differences") {
  Rng rng(8);
  Tensor x = random_tensor(rng, {4, 4});
  Tensor w = random_tensor(rng, {4, 4});
  AttentionMask mask(4, 4);
  for (int r = 0; r < 4; ++r) {
    for (int c = r + 1; c < 4; ++c) mask.set_allowed(r, c, false);
  }
  auto report = grad_check(
      [&](Graph& g) { return g.sum(g.mul(g.row_softmax(g.param(x), &mask), g.param(w))); }, {&x});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("matmul gradients match finite differences in all transpose modes") {
  Rng rng(9);
  for (int mode = 0; mode < 4; ++mode) {
    const bool ta = mode & 1, tb = mode & 2;
    Tensor a = ta ? random_tensor(rng, {4, 2}) : random_tensor(rng, {2, 4});
    Tensor b = tb ? random_tensor(rng, {3, 4}) : random_tensor(rng, {4, 3});
    auto report = grad_check(
        [&](Graph& g) { return g.sum(g.matmul(g.param(a), g.param(b), ta, tb)); }, {&a, &b});
    CAPTURE(mode);
    CHECK(report.max_rel_err < 1e-6);
  }
}

TEST_CASE("layer_norm gradient matches finite differences") {
  Rng rng(10);
  Tensor x = random_tensor(rng, {3, 6});
  Tensor gamma = random_tensor(rng, {1, 6});
  Tensor beta = random_tensor(rng, {1, 6});
  Tensor w = random_tensor(rng, {3, 6});
  auto report = grad_check(
      [&](Graph& g) {
        return g.sum(g.mul(g.layer_norm(g.param(x), g.param(gamma), g.param(beta)), g.param(w)));
      },
      {&x, &gamma, &beta});
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("structural ops route gradients exactly") {
  Rng rng(12);
  Tensor a = random_tensor(rng, {3, 4});
  Tensor b = random_tensor(rng, {2, 4});
  Tensor w = random_tensor(rng, {2, 4});

  auto report = grad_check(
      [&](Graph& g) {
        Var cat = g.concat_rows({g.param(a), g.param(b)});   // 5 x 4
        Var sl = g.slice_cols(cat, 1, 2);                    // 5 x 2
        Var picked = g.pick_rows(sl, {4, 0, 2, 2});          // repeated row
        Var re = g.reshape(picked, {2, 4});
        return g.sum(g.mul(re, g.param(w)));
      },
      {&a, &b, &w});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("gather with padding produces zeros and routes gradients") {
  Rng rng(13);
  Tensor a = random_tensor(rng, {2, 3});
  {
    Graph g;
    Var y = g.gather(g.constant(a), {1, 4}, {0, -1, 5, -1});
    CHECK(g.value(y).data()[0] == a.data()[0]);
    CHECK(g.value(y).data()[1] == 0.0);
    CHECK(g.value(y).data()[2] == a.data()[5]);
    CHECK(g.value(y).data()[3] == 0.0);
  }
  Tensor w = random_tensor(rng, {1, 4});
  auto report = grad_check(
      [&](Graph& g) {
        return g.sum(g.mul(g.gather(g.param(a), {1, 4}, {0, -1, 5, 0}), g.param(w)));
      },
      {&a, &w});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("elementwise op gradients match finite differences") {
  Rng rng(14);
  Tensor x = random_tensor(rng, {2, 5});
  // Keep away from relu/huber kinks and clamp edges.
  for (int64_t i = 0; i < x.size(); ++i) {
    if (std::fabs(x.data()[i]) < 0.05) x.data()[i] += 0.2;
  }
  Tensor t = random_tensor(rng, {2, 5}, 2.0);

  auto report = grad_check(
      [&](Graph& g) {
        Var v = g.param(x);
        Var out = g.add(g.relu(v), g.exp(g.affine(v, 0.3, 0.1)));
        out = g.add(out, g.clamp(v, -0.8, 0.8));
        out = g.add(out, g.huber_elementwise(g.sub(v, g.param(t)), 1.0));
        return g.mean(out);
      },
      {&x, &t});
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("clamp is inert outside its range") {
  Graph g;
  Var x = g.constant({1, 3}, {-9.0, 0.3, 7.2});
  Var y = g.clamp(x, -4.6, 4.6);
  CHECK(g.value(y).data()[0] == -4.6);
  CHECK(g.value(y).data()[1] == 0.3);
  CHECK(g.value(y).data()[2] == 4.6);
}

TEST_CASE("dynamic_linear matches per-row matmul and its gradients") {
  Rng rng(15);
  Tensor h = random_tensor(rng, {3, 4});
  Tensor f = random_tensor(rng, {3, 4 * 2});
  {
    Graph g;
    Var y = g.dynamic_linear(g.constant(h), g.constant(f), 2);
    for (int r = 0; r < 3; ++r) {
      for (int m = 0; m < 2; ++m) {
        double expect = 0.0;
        for (int c = 0; c < 4; ++c) expect += h.at(r, c) * f.at(r, c * 2 + m);
        CHECK(g.value(y).at(r, m) == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
  auto report = grad_check(
      [&](Graph& g) { return g.sum(g.dynamic_linear(g.param(h), g.param(f), 2)); }, {&h, &f});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("backward requires a scalar") {
  Graph g;
  Var x = g.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  CHECK_THROWS_AS(g.backward(x), DimensionError);
}

TEST_CASE("shared parameter accumulates gradient from every use") {
  Tensor w({1, 2}, {0.5, -0.25});
  w.set_requires_grad(true);
  Graph g;
  Var vw = g.param(w);
  Var vw2 = g.param(w);  // same leaf
  CHECK(vw.id == vw2.id);
  Var y = g.sum(g.add(vw, g.mul(vw, vw)));
  g.backward(y);
  g.accumulate_param_grads();
  // d/dw (w + w^2) = 1 + 2w
  CHECK(w.grad()[0] == doctest::Approx(1.0 + 2.0 * 0.5));
  CHECK(w.grad()[1] == doctest::Approx(1.0 + 2.0 * -0.25));
}
