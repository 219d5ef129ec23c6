#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "destine/encoder.hpp"
#include "destine/generator.hpp"
#include "doctest.h"

using namespace destine;
using nn::Graph;
using nn::Tensor;
using nn::Var;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.k_modes = 2;
  return cfg;
}

// A hand-built straight-motion scene with full control over placement.
Scene manual_scene(const std::vector<Vec2>& starts, const std::vector<Vec2>& velocities,
                   bool with_lane = true) {
  Scene s;
  for (size_t a = 0; a < starts.size(); ++a) {
    AgentTrack tr;
    tr.agent_id = static_cast<int>(a);
    for (int t = 0; t < s.t_obs_steps; ++t) {
      tr.obs.push_back(starts[a] + velocities[a] * (0.1 * t));
    }
    for (int t = 1; t <= s.t_pred_steps; ++t) {
      tr.fut.push_back(tr.obs.back() + velocities[a] * (0.1 * t));
    }
    tr.heading_t0 = std::atan2(velocities[a].y, velocities[a].x);
    if (velocities[a].norm() == 0.0) tr.heading_t0 = 0.0;
    s.agents.push_back(std::move(tr));
  }
  if (with_lane) {
    LanePolyline lane;
    lane.width = 3.5;
    for (int i = 0; i <= 40; ++i) lane.centerline.push_back({-100.0 + 5.0 * i, 0.0});
    s.lanes.push_back(std::move(lane));
  }
  s.focal_agent = 0;
  return s;
}

Scene translated(const Scene& s, Vec2 offset) {
  Scene t = s;
  for (AgentTrack& a : t.agents) {
    for (Vec2& p : a.obs) p = p + offset;
    for (Vec2& p : a.fut) p = p + offset;
  }
  for (LanePolyline& lane : t.lanes) {
    for (Vec2& p : lane.centerline) p = p + offset;
  }
  for (auto& poly : t.drivable) {
    for (Vec2& p : poly) p = p + offset;
  }
  return t;
}

Tensor encode_local_values(LocalEncoder& enc, const Scene& s, const ModelConfig& cfg) {
  Graph g;
  SceneContext ctx = SceneContext::build(s);
  return g.value(enc.encode(g, ctx, cfg));
}

}  // namespace

TEST_CASE("single agent with no lanes depends only on its own motion") {
  ModelConfig cfg = small_config();
  Rng rng(1);
  LocalEncoder enc(rng, cfg);
  Scene a = manual_scene({{0, 0}}, {{5, 0}}, /*with_lane=*/false);
  // Same motion, plus a lane far outside the 50 m radius.
  Scene b = manual_scene({{0, 0}}, {{5, 0}}, /*with_lane=*/false);
  LanePolyline far_lane;
  far_lane.width = 3.5;
  far_lane.centerline = {{500, 500}, {600, 500}};
  b.lanes.push_back(far_lane);
  Tensor fa = encode_local_values(enc, a, cfg);
  Tensor fb = encode_local_values(enc, b, cfg);
  for (int64_t i = 0; i < fa.size(); ++i) CHECK(fa.data()[i] == fb.data()[i]);
}

TEST_CASE("local features are invariant to global translation") {
  ModelConfig cfg = small_config();
  Rng rng(2);
  LocalEncoder enc(rng, cfg);
  Scene a = manual_scene({{0, 0}, {10, 3}}, {{5, 0}, {4, 1}});
  Scene b = translated(a, {100.0, -50.0});
  Tensor fa = encode_local_values(enc, a, cfg);
  Tensor fb = encode_local_values(enc, b, cfg);
  for (int64_t i = 0; i < fa.size(); ++i) {
    CHECK(std::fabs(fa.data()[i] - fb.data()[i]) < 1e-9);
  }
}

TEST_CASE("agents outside the radius have exactly zero influence") {
  ModelConfig cfg = small_config();
  Rng rng(3);
  LocalEncoder enc(rng, cfg);
  Scene a = manual_scene({{0, 0}, {200, 200}}, {{5, 0}, {5, 0}}, /*with_lane=*/false);
  Scene b = manual_scene({{0, 0}, {220, 260}}, {{5, 0}, {2, 2}}, /*with_lane=*/false);
  Tensor fa = encode_local_values(enc, a, cfg);
  Tensor fb = encode_local_values(enc, b, cfg);
  // Row 0 (the near agent) is bit-identical; the far agent's row changes.
  for (int j = 0; j < cfg.embed_dim; ++j) CHECK(fa.at(0, j) == fb.at(0, j));
  double diff = 0.0;
  for (int j = 0; j < cfg.embed_dim; ++j) diff += std::fabs(fa.at(1, j) - fb.at(1, j));
  CHECK(diff > 0.0);
}

TEST_CASE("in-radius agents do influence local features") {
  ModelConfig cfg = small_config();
  Rng rng(4);
  LocalEncoder enc(rng, cfg);
  Scene a = manual_scene({{0, 0}, {10, 0}}, {{5, 0}, {5, 0}}, false);
  Scene b = manual_scene({{0, 0}, {12, 2}}, {{5, 0}, {5, 0}}, false);
  Tensor fa = encode_local_values(enc, a, cfg);
  Tensor fb = encode_local_values(enc, b, cfg);
  double diff = 0.0;
  for (int j = 0; j < cfg.embed_dim; ++j) diff += std::fabs(fa.at(0, j) - fb.at(0, j));
  CHECK(diff > 0.0);
}

TEST_CASE("permuting agents permutes local and global features") {
  ModelConfig cfg = small_config();
  Rng rng(5);
  LocalEncoder enc(rng, cfg);
  GlobalEncoder genc(rng, cfg);
  Scene a = manual_scene({{0, 0}, {15, 4}, {-8, 2}}, {{5, 0}, {4, 1}, {6, -1}});
  Scene b = a;
  std::swap(b.agents[0], b.agents[2]);  // ids travel with the agents
  b.focal_agent = 2;

  Graph ga, gb;
  SceneContext ca = SceneContext::build(a);
  SceneContext cb = SceneContext::build(b);
  Var la = enc.encode(ga, ca, cfg);
  Var lb = enc.encode(gb, cb, cfg);
  Tensor va = ga.value(genc.encode(ga, la, ca));
  Tensor vb = gb.value(genc.encode(gb, lb, cb));
  const int perm[3] = {2, 1, 0};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < cfg.embed_dim; ++j) {
      CHECK(std::fabs(va.at(i, j) - vb.at(perm[i], j)) < 1e-9);
    }
  }
}

TEST_CASE("global features for a single agent are a function of its local feature") {
  ModelConfig cfg = small_config();
  Rng rng(6);
  LocalEncoder enc(rng, cfg);
  GlobalEncoder genc(rng, cfg);
  Scene s = manual_scene({{3, 1}}, {{6, 0}});
  Graph g;
  SceneContext ctx = SceneContext::build(s);
  Var local = enc.encode(g, ctx, cfg);
  Var global_ = genc.encode(g, local, ctx);
  CHECK(g.value(global_).rows() == 1);
  CHECK(g.value(global_).cols() == cfg.embed_dim);
}

TEST_CASE("global features are invariant to translation") {
  ModelConfig cfg = small_config();
  Rng rng(7);
  LocalEncoder enc(rng, cfg);
  GlobalEncoder genc(rng, cfg);
  Scene a = manual_scene({{0, 0}, {20, 5}}, {{5, 0}, {3, 2}});
  Scene b = translated(a, {100.0, -50.0});
  Graph ga, gb;
  SceneContext ca = SceneContext::build(a);
  SceneContext cb = SceneContext::build(b);
  Tensor va = ga.value(genc.encode(ga, enc.encode(ga, ca, cfg), ca));
  Tensor vb = gb.value(genc.encode(gb, enc.encode(gb, cb, cfg), cb));
  for (int64_t i = 0; i < va.size(); ++i) {
    CHECK(std::fabs(va.data()[i] - vb.data()[i]) < 1e-9);
  }
}

TEST_CASE("encoder output stays finite on generated scenes") {
  ModelConfig cfg = small_config();
  Rng rng(8);
  LocalEncoder enc(rng, cfg);
  GlobalEncoder genc(rng, cfg);
  for (uint64_t seed = 0; seed < 4; ++seed) {
    GeneratorSpec spec;
    spec.num_agents = 4;
    spec.layout = seed % 2 == 0 ? Layout::kCross : Layout::kCurve;
    Scene s = generate_scene(seed, spec);
    Graph g;
    SceneContext ctx = SceneContext::build(s);
    Var out = genc.encode(g, enc.encode(g, ctx, cfg), ctx);
    CHECK(g.value(out).all_finite());
  }
}
