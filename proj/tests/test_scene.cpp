#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "destine/generator.hpp"
#include "destine/rng.hpp"
#include "destine/scene.hpp"
#include "doctest.h"

using namespace destine;

namespace {

// Independent point-in-polygon oracle: winding number via signed angles.
bool winding_number_inside(const Vec2& p, const std::vector<Vec2>& poly) {
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    if (point_on_segment(p, poly[i], poly[(i + 1) % n])) return true;
  }
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i] - p;
    const Vec2 b = poly[(i + 1) % n] - p;
    total += std::atan2(a.cross(b), a.dot(b));
  }
  return std::fabs(total) > 3.141592653589793;  // ~2*pi inside, ~0 outside
}

Scene tiny_valid_scene() {
  GeneratorSpec spec;
  spec.num_agents = 2;
  spec.layout = Layout::kStraight;
  return generate_scene(7, spec);
}

}  // namespace

TEST_CASE("agent frame maps the anchor pose to the origin") {
  Scene s = tiny_valid_scene();
  AgentFrame frame;
  Scene local = to_agent_frame(s, 0, &frame);
  const Vec2 p0 = local.agents[0].obs.back();
  CHECK(std::fabs(p0.x) < 1e-12);
  CHECK(std::fabs(p0.y) < 1e-12);
  CHECK(std::fabs(local.agents[0].heading_t0) < 1e-12);
}

TEST_CASE("heading pi/2 aligns motion with +x after the transform") {
  AgentFrame frame{{5.0, 5.0}, 3.14159265358979323846 / 2.0};
  // A velocity step along +y in global space.
  const Vec2 a = frame.to_frame({5.0, 5.0});
  const Vec2 b = frame.to_frame({5.0, 6.0});
  CHECK((b - a).x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::fabs((b - a).y) < 1e-12);
}

TEST_CASE("frame round-trip is the identity within 1e-9") {
  Rng rng(21);
  AgentFrame frame{{rng.uniform(-50, 50), rng.uniform(-50, 50)}, rng.uniform(-3.14, 3.14)};
  for (int i = 0; i < 100; ++i) {
    const Vec2 p{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    const Vec2 back = frame.to_global(frame.to_frame(p));
    CHECK(dist(back, p) < 1e-9);
  }
}

TEST_CASE("frame transform is an isometry") {
  Rng rng(22);
  AgentFrame frame{{12.0, -3.0}, 0.7};
  for (int i = 0; i < 50; ++i) {
    const Vec2 a{rng.uniform(-80, 80), rng.uniform(-80, 80)};
    const Vec2 b{rng.uniform(-80, 80), rng.uniform(-80, 80)};
    CHECK(std::fabs(dist(frame.to_frame(a), frame.to_frame(b)) - dist(a, b)) < 1e-9);
  }
}

TEST_CASE("from_agent_frame inverts to_agent_frame on unit vectors") {
  AgentFrame frame{{3.0, 4.0}, 0.5};
  const std::vector<Vec2> local{{0.0, 0.0}, {1.0, 0.0}};
  const std::vector<Vec2> global = from_agent_frame(local, frame);
  CHECK(dist(global[0], frame.origin) < 1e-12);
  CHECK(global[1].x == doctest::Approx(3.0 + std::cos(0.5)).epsilon(1e-12));
  CHECK(global[1].y == doctest::Approx(4.0 + std::sin(0.5)).epsilon(1e-12));
}

TEST_CASE("point_in_polygon basics") {
  const std::vector<Vec2> square{{0, 0}, {10, 0}, {10, 10}, {0, 10}};
  CHECK(point_in_polygon({5, 5}, square));
  CHECK(point_in_polygon({0, 5}, square));  // boundary counts as inside
  CHECK(!point_in_polygon({1000.0, 5}, square));
}

TEST_CASE("even-odd test agrees with the winding-number oracle") {
  // A convex box, a concave L-shape, and a thin sliver.
  const std::vector<std::vector<Vec2>> polys{
      {{-10, -5}, {10, -5}, {10, 5}, {-10, 5}},
      {{0, 0}, {8, 0}, {8, 3}, {3, 3}, {3, 8}, {0, 8}},
      {{-4, -4}, {6, -3.7}, {6.2, -3.4}, {-3.8, -3.8}},
  };
  Rng rng(33);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 p{rng.uniform(-12, 12), rng.uniform(-8, 10)};
    for (const auto& poly : polys) {
      CHECK(point_in_polygon(p, poly) == winding_number_inside(p, poly));
    }
  }
}

TEST_CASE("generator: keep-lane endpoint lands ~30m ahead at 10 m/s") {
  for (uint64_t seed : {1ULL, 2ULL, 3ULL, 17ULL, 99ULL}) {
    GeneratorSpec spec;
    spec.num_agents = 1;
    spec.layout = Layout::kStraight;
    spec.intents = {Intent::kKeepLane};
    spec.speed_mps = 10.0;
    Scene s = generate_scene(seed, spec);
    const Vec2 p0 = s.agents[0].obs.back();
    const Vec2 pT = s.agents[0].fut.back();
    // The straight layout runs along +x, so along-lane displacement is dx.
    CHECK(std::fabs((pT.x - p0.x) - 30.0) <= 2.0);
  }
}

TEST_CASE("generator: stationary stop intent stays put") {
  GeneratorSpec spec;
  spec.num_agents = 1;
  spec.layout = Layout::kStraight;
  spec.intents = {Intent::kStop};
  spec.speed_mps = 0.0;
  Scene s = generate_scene(5, spec);
  const Vec2 p0 = s.agents[0].obs.back();
  for (const Vec2& p : s.agents[0].fut) {
    CHECK(p.x == p0.x);
    CHECK(p.y == p0.y);
  }
  CHECK(s.agents[0].heading_t0 == 0.0);
}

TEST_CASE("generator determinism: same seed gives bit-identical scenes") {
  GeneratorSpec spec;
  spec.num_agents = 4;
  spec.layout = Layout::kCross;
  Scene a = generate_scene(1234, spec);
  Scene b = generate_scene(1234, spec);
  REQUIRE(a.num_agents() == b.num_agents());
  for (int i = 0; i < a.num_agents(); ++i) {
    for (size_t j = 0; j < a.agents[i].obs.size(); ++j) {
      CHECK(a.agents[i].obs[j].x == b.agents[i].obs[j].x);
      CHECK(a.agents[i].obs[j].y == b.agents[i].obs[j].y);
    }
    for (size_t j = 0; j < a.agents[i].fut.size(); ++j) {
      CHECK(a.agents[i].fut[j].x == b.agents[i].fut[j].x);
      CHECK(a.agents[i].fut[j].y == b.agents[i].fut[j].y);
    }
  }
}

TEST_CASE("generator: ground-truth futures are always on-road") {
  for (Layout layout : {Layout::kStraight, Layout::kCurve, Layout::kTee, Layout::kCross}) {
    for (uint64_t seed = 0; seed < 12; ++seed) {
      GeneratorSpec spec;
      spec.num_agents = 3;
      spec.layout = layout;
      Scene s = generate_scene(seed, spec);
      int off_road = 0;
      for (const AgentTrack& a : s.agents) {
        for (const Vec2& p : a.fut) {
          if (!point_in_drivable(p, s)) ++off_road;
        }
      }
      CAPTURE(layout_to_string(layout));
      CAPTURE(seed);
      CHECK(off_road == 0);
    }
  }
}

TEST_CASE("generator rejects infeasible specs") {
  GeneratorSpec too_many;
  too_many.num_agents = 16;
  too_many.layout = Layout::kStraight;  // 2 entries x 4 slots
  CHECK_THROWS_AS(generate_scene(1, too_many), GenerationError);

  GeneratorSpec turn_on_straight;
  turn_on_straight.num_agents = 1;
  turn_on_straight.layout = Layout::kStraight;
  turn_on_straight.intents = {Intent::kTurnLeft};
  CHECK_THROWS_AS(generate_scene(1, turn_on_straight), GenerationError);

  GeneratorSpec zero;
  zero.num_agents = 0;
  CHECK_THROWS_AS(generate_scene(1, zero), GenerationError);
}

TEST_CASE("scene json round-trip preserves every field") {
  GeneratorSpec spec;
  spec.num_agents = 3;
  spec.layout = Layout::kTee;
  Scene s = generate_scene(42, spec);
  Scene t = scene_from_json(scene_to_json(s));
  CHECK(t.dt == s.dt);
  CHECK(t.t_obs_steps == s.t_obs_steps);
  CHECK(t.t_pred_steps == s.t_pred_steps);
  CHECK(t.focal_agent == s.focal_agent);
  REQUIRE(t.num_agents() == s.num_agents());
  for (int i = 0; i < s.num_agents(); ++i) {
    CHECK(t.agents[i].agent_id == s.agents[i].agent_id);
    CHECK(t.agents[i].heading_t0 == s.agents[i].heading_t0);
    for (size_t j = 0; j < s.agents[i].obs.size(); ++j) {
      CHECK(t.agents[i].obs[j].x == s.agents[i].obs[j].x);
      CHECK(t.agents[i].obs[j].y == s.agents[i].obs[j].y);
    }
    for (size_t j = 0; j < s.agents[i].fut.size(); ++j) {
      CHECK(t.agents[i].fut[j].x == s.agents[i].fut[j].x);
      CHECK(t.agents[i].fut[j].y == s.agents[i].fut[j].y);
    }
  }
  REQUIRE(t.lanes.size() == s.lanes.size());
  REQUIRE(t.drivable.size() == s.drivable.size());
}

TEST_CASE("scene file round-trip through disk") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "destine_scene_rt.json").string();
  Scene s = tiny_valid_scene();
  save_scene(s, path);
  Scene t = load_scene(path);
  CHECK(t.agents[0].obs.back().x == s.agents[0].obs.back().x);
  fs::remove(path);
}

TEST_CASE("missing dt is reported by name") {
  const std::string text = R"({"t_obs_steps":20,"t_pred_steps":30,"focal_agent":0,
    "agents":[],"lanes":[],"drivable":[]})";
  try {
    scene_from_json(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("'dt'") != std::string::npos);
  }
}

TEST_CASE("a scene with zero agents fails validation") {
  Scene s = tiny_valid_scene();
  s.agents.clear();
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("malformed json is a parse error") {
  CHECK_THROWS_AS(scene_from_json("{not json"), ParseError);
}

TEST_CASE("translation of a scene is an exact shift of every point") {
  Scene s = tiny_valid_scene();
  Scene t = s;
  const Vec2 offset{100.0, -50.0};
  for (AgentTrack& a : t.agents) {
    for (Vec2& p : a.obs) p = p + offset;
    for (Vec2& p : a.fut) p = p + offset;
  }
  // Agent-frame views of the two scenes agree to fp rounding.
  Scene la = to_agent_frame(s, 0);
  Scene lb = to_agent_frame(t, 0);
  for (int i = 0; i < s.num_agents(); ++i) {
    for (size_t j = 0; j < la.agents[i].obs.size(); ++j) {
      CHECK(std::fabs(la.agents[i].obs[j].x - lb.agents[i].obs[j].x) < 1e-9);
      CHECK(std::fabs(la.agents[i].obs[j].y - lb.agents[i].obs[j].y) < 1e-9);
    }
  }
}
