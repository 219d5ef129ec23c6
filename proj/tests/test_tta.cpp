#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "destine/gradcheck.hpp"
#include "destine/tta.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace destine;
using destine::testutil::random_tensor;
using nn::AttentionMask;
using nn::Graph;
using nn::Tensor;
using nn::Var;
using nn::grad_check;

namespace {

ModelConfig tta_cfg(TtaConfig::Variant variant, int layers = 1, bool residual = false) {
  ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.k_modes = 2;
  cfg.goal_layers = 1;
  cfg.n_max = 3;
  cfg.t_pred_steps = 6;
  cfg.tta.variant = variant;
  cfg.tta.layers = layers;
  cfg.tta.residual = residual;
  cfg.tta.tw_seconds = 0.3;  // w = 3 at dt = 0.1
  return cfg;
}

// Minimal scene context for the history variant's observation tokens.
SceneContext context_for(int n) {
  static Scene scene;  // kept alive for the ctx pointer
  scene = Scene{};
  for (int a = 0; a < n; ++a) {
    AgentTrack tr;
    tr.agent_id = a;
    for (int t = 0; t < scene.t_obs_steps; ++t) {
      tr.obs.push_back({a * 10.0 + 0.5 * t, 1.0 * a});
    }
    for (int t = 1; t <= scene.t_pred_steps; ++t) {
      tr.fut.push_back(tr.obs.back() + Vec2{0.5 * t, 0.0});
    }
    tr.heading_t0 = 0.0;
    scene.agents.push_back(std::move(tr));
  }
  return SceneContext::build(scene);
}

}  // namespace

TEST_CASE("windowed square-subsequent mask structure") {
  AttentionMask mask = build_window_mask(30, 2.0, 0.1);
  CHECK(mask.window_steps == 20);
  // Row 25 allows exactly columns 6..25.
  for (int j = 0; j < 30; ++j) {
    CHECK(mask.is_allowed(25, j) == (j >= 6 && j <= 25));
  }
  // Row 0 allows only column 0.
  for (int j = 0; j < 30; ++j) CHECK(mask.is_allowed(0, j) == (j == 0));
  // Row i allows min(i+1, w) positions.
  for (int i = 0; i < 30; ++i) CHECK(mask.allowed_in_row(i) == std::min(i + 1, 20));
}

TEST_CASE("a window covering the horizon reduces to the full causal mask") {
  AttentionMask mask = build_window_mask(10, 1.0, 0.1);  // w = 10 = T
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) CHECK(mask.is_allowed(i, j) == (j <= i));
  }
}

TEST_CASE("history mask lets early predictions see recent observations") {
  const int t_obs = 5, t = 8;
  AttentionMask mask = build_history_mask(t_obs, t, 0.4, 0.1);  // w = 4
  // Prediction row 0 sits at global index t_obs and attends min(w-1, t_obs)
  // observation tokens plus itself.
  int obs_allowed = 0;
  for (int j = 0; j < t_obs; ++j) obs_allowed += mask.is_allowed(t_obs, j) ? 1 : 0;
  CHECK(obs_allowed == std::min(4 - 1, t_obs));
  CHECK(mask.is_allowed(t_obs, t_obs));

  // Degenerate history equals the plain window mask.
  AttentionMask plain = build_window_mask(t, 0.4, 0.1);
  AttentionMask hist0 = build_history_mask(0, t, 0.4, 0.1);
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < t; ++j) CHECK(plain.is_allowed(i, j) == hist0.is_allowed(i, j));
  }
}

TEST_CASE("window narrower than one step is a config error") {
  CHECK_THROWS_AS(build_window_mask(10, 0.04, 0.1), ConfigError);
}

TEST_CASE("identity stress test: zero scores average the window uniformly") {
  ModelConfig cfg = tta_cfg(TtaConfig::Variant::kMasked);
  Rng rng(1);
  TtaModule tta(rng, cfg);
  auto& lp = tta.layers()[0];
  for (int64_t i = 0; i < lp.wq.size(); ++i) lp.wq.data()[i] = 0.0;
  for (int64_t i = 0; i < lp.wk.size(); ++i) lp.wk.data()[i] = 0.0;
  for (int64_t i = 0; i < lp.wv.size(); ++i) lp.wv.data()[i] = 0.0;
  for (int i = 0; i < tta.d_t(); ++i) lp.wv.at(i, i) = 1.0;

  Rng data_rng(2);
  Tensor tokens = random_tensor(data_rng, {cfg.t_pred_steps, tta.d_t()});
  Graph g;
  const Tensor out = g.value(tta.layer_forward(g, 0, g.constant(tokens), Var{}));
  const int w = 3;
  for (int t = 0; t < cfg.t_pred_steps; ++t) {
    const int lo = std::max(0, t - w + 1);
    for (int c = 0; c < tta.d_t(); ++c) {
      double mean = 0.0;
      for (int j = lo; j <= t; ++j) mean += tokens.at(j, c);
      mean /= (t - lo + 1);
      CHECK(out.at(t, c) == doctest::Approx(mean).epsilon(1e-12));
    }
  }
}

TEST_CASE("aligned output preserves shape and the confidence channel") {
  ModelConfig cfg = tta_cfg(TtaConfig::Variant::kMasked);
  Rng rng(3);
  TtaModule tta(rng, cfg);
  SceneContext ctx = context_for(2);
  Rng data_rng(4);
  Tensor fine = random_tensor(data_rng, {2 * cfg.k_modes, cfg.t_pred_steps * 5});
  Graph g;
  const Tensor out = g.value(tta.apply(g, g.constant(fine), ctx, 2, cfg.k_modes));
  CHECK(out.rows() == fine.rows());
  CHECK(out.cols() == fine.cols());
  for (int r = 0; r < out.rows(); ++r) {
    for (int s = 0; s < cfg.t_pred_steps; ++s) {
      CHECK(out.at(r, s * 5 + 4) == fine.at(r, s * 5 + 4));
    }
  }
}

TEST_CASE("output at step t ignores perturbations of later steps") {
  ModelConfig cfg = tta_cfg(TtaConfig::Variant::kMasked);
  Rng rng(5);
  TtaModule tta(rng, cfg);
  SceneContext ctx = context_for(2);
  Rng data_rng(6);
  Tensor fine = random_tensor(data_rng, {2 * cfg.k_modes, cfg.t_pred_steps * 5});
  Graph g1;
  const Tensor base = g1.value(tta.apply(g1, g1.constant(fine), ctx, 2, cfg.k_modes));

  Tensor bumped = fine;
  const int t_probe = 3;
  for (int r = 0; r < bumped.rows(); ++r) {
    for (int s = t_probe + 1; s < cfg.t_pred_steps; ++s) {
      for (int c = 0; c < 4; ++c) bumped.at(r, s * 5 + c) += 7.0;
    }
  }
  Graph g2;
  const Tensor moved = g2.value(tta.apply(g2, g2.constant(bumped), ctx, 2, cfg.k_modes));
  for (int r = 0; r < base.rows(); ++r) {
    for (int s = 0; s <= t_probe; ++s) {
      for (int c = 0; c < 4; ++c) {
        CHECK(std::fabs(base.at(r, s * 5 + c) - moved.at(r, s * 5 + c)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("no-mask variant attends across every step") {
  ModelConfig cfg = tta_cfg(TtaConfig::Variant::kNoMask);
  Rng rng(7);
  TtaModule tta(rng, cfg);
  SceneContext ctx = context_for(2);
  Rng data_rng(8);
  Tensor fine = random_tensor(data_rng, {2 * cfg.k_modes, cfg.t_pred_steps * 5});
  Graph g1;
  const Tensor base = g1.value(tta.apply(g1, g1.constant(fine), ctx, 2, cfg.k_modes));
  Tensor bumped = fine;
  for (int r = 0; r < bumped.rows(); ++r) bumped.at(r, (cfg.t_pred_steps - 1) * 5) += 5.0;
  Graph g2;
  const Tensor moved = g2.value(tta.apply(g2, g2.constant(bumped), ctx, 2, cfg.k_modes));
  double diff0 = 0.0;
  for (int c = 0; c < 4; ++c) diff0 += std::fabs(base.at(0, c) - moved.at(0, c));
  CHECK(diff0 > 0.0);  // step 0 saw the change: no causal mask
}

TEST_CASE("history variant runs and keeps shapes") {
  ModelConfig cfg = tta_cfg(TtaConfig::Variant::kMaskedHistory);
  Rng rng(9);
  TtaModule tta(rng, cfg);
  SceneContext ctx = context_for(3);
  Rng data_rng(10);
  Tensor fine = random_tensor(data_rng, {3 * cfg.k_modes, cfg.t_pred_steps * 5});
  Graph g;
  const Tensor out = g.value(tta.apply(g, g.constant(fine), ctx, 3, cfg.k_modes));
  CHECK(out.rows() == fine.rows());
  CHECK(out.cols() == fine.cols());
}

TEST_CASE("residual flag adds the input back") {
  ModelConfig plain_cfg = tta_cfg(TtaConfig::Variant::kMasked, 1, false);
  ModelConfig res_cfg = tta_cfg(TtaConfig::Variant::kMasked, 1, true);
  Rng rng1(11), rng2(11);
  TtaModule plain(rng1, plain_cfg);
  TtaModule residual(rng2, res_cfg);
  Rng data_rng(12);
  Tensor tokens = random_tensor(data_rng, {plain_cfg.t_pred_steps, plain.d_t()});
  Graph g;
  const Tensor a = g.value(plain.layer_forward(g, 0, g.constant(tokens), Var{}));
  const Tensor b = g.value(residual.layer_forward(g, 0, g.constant(tokens), Var{}));
  for (int64_t i = 0; i < a.size(); ++i) {
    CHECK(b.data()[i] == doctest::Approx(a.data()[i] + tokens.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("two stacked layers run") {
  ModelConfig cfg = tta_cfg(TtaConfig::Variant::kMasked, 2);
  Rng rng(13);
  TtaModule tta(rng, cfg);
  SceneContext ctx = context_for(2);
  Rng data_rng(14);
  Tensor fine = random_tensor(data_rng, {2 * cfg.k_modes, cfg.t_pred_steps * 5});
  Graph g;
  CHECK(g.value(tta.apply(g, g.constant(fine), ctx, 2, cfg.k_modes)).all_finite());
}

TEST_CASE("capacity error when agents exceed n_max") {
  ModelConfig cfg = tta_cfg(TtaConfig::Variant::kMasked);
  Rng rng(15);
  TtaModule tta(rng, cfg);
  SceneContext ctx = context_for(4);  // n_max is 3
  Rng data_rng(16);
  Tensor fine = random_tensor(data_rng, {4 * cfg.k_modes, cfg.t_pred_steps * 5});
  Graph g;
  CHECK_THROWS_AS(tta.apply(g, g.constant(fine), ctx, 4, cfg.k_modes), CapacityError);
}

TEST_CASE("masked TTA layer gradients match finite differences") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    ModelConfig cfg = tta_cfg(TtaConfig::Variant::kMasked);
    Rng rng(20 + seed);
    TtaModule tta(rng, cfg);
    Rng data_rng(30 + seed);
    Tensor tokens = random_tensor(data_rng, {cfg.t_pred_steps, tta.d_t()});
    Tensor w = random_tensor(data_rng, {cfg.t_pred_steps, tta.d_t()});
    auto& lp = tta.layers()[0];
    auto report = grad_check(
        [&](Graph& g) {
          return g.sum(g.mul(tta.layer_forward(g, 0, g.param(tokens), Var{}), g.constant(w)));
        },
        {&tokens, &lp.wq, &lp.wk, &lp.wv, &lp.pos});
    CAPTURE(seed);
    CHECK(report.max_rel_err < 1e-4);
  }
}
