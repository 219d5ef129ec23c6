#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "destine/decoders.hpp"
#include "destine/gradcheck.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace destine;
using destine::testutil::random_tensor;
using nn::Graph;
using nn::Tensor;
using nn::Var;

namespace {

ModelConfig tiny_cfg(double rate) {
  ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.k_modes = 2;
  cfg.goal_layers = 1;
  cfg.coarse_rate_hz = rate;
  return cfg;
}

}  // namespace

TEST_CASE("waypoint count strictly follows the coarse rate") {
  for (auto [rate, expect] : std::vector<std::pair<double, int>>{{1, 3}, {2, 6}, {3, 9}}) {
    ModelConfig cfg;
    cfg.coarse_rate_hz = rate;
    CHECK(cfg.t_waypoints() == expect);
  }
  ModelConfig off;
  off.coarse_rate_hz = 0;
  CHECK(off.t_waypoints() == 0);
}

TEST_CASE("invalid coarse rate is a config error") {
  ModelConfig cfg = tiny_cfg(2.5);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("coarse decoder output shape is (N*K) x (T_wp*5)") {
  ModelConfig cfg = tiny_cfg(1.0);
  cfg.k_modes = 6;
  Rng rng(1);
  CoarseDecoder dec(rng, cfg);
  Rng data_rng(2);
  Tensor h = random_tensor(data_rng, {12, 8});
  Tensor goals = random_tensor(data_rng, {12, 5});
  Graph g;
  const Tensor& out = g.value(dec.decode(g, g.constant(h), g.constant(goals)));
  CHECK(out.rows() == 12);  // N=2, K=6
  CHECK(out.cols() == 3 * 5);
}

TEST_CASE("fine decoder emits the 10 Hz horizon and normalized mode scores") {
  ModelConfig cfg = tiny_cfg(1.0);
  Rng rng(3);
  FineDecoder dec(rng, cfg);
  Rng data_rng(4);
  Tensor h = random_tensor(data_rng, {6, 8});
  Tensor wp = random_tensor(data_rng, {6, 15});
  Graph g;
  auto out = dec.decode(g, g.constant(h), g.constant(wp), 3, 2);
  CHECK(g.value(out.traj).rows() == 6);
  CHECK(g.value(out.traj).cols() == 30 * 5);
  const Tensor probs = g.value(g.row_softmax(out.mode_logits));
  for (int a = 0; a < 3; ++a) {
    double s = 0.0;
    for (int m = 0; m < 2; ++m) s += probs.at(a, m);
    CHECK(std::fabs(s - 1.0) <= 1e-7);
  }
}

TEST_CASE("goal-only and unconditioned fine decoding are available") {
  ModelConfig goal_only = tiny_cfg(0.0);
  CHECK(FineDecoder::conditioning_for(goal_only) == FineDecoder::Conditioning::kGoal);
  ModelConfig traj_only = tiny_cfg(0.0);
  traj_only.use_goal = false;
  CHECK(FineDecoder::conditioning_for(traj_only) == FineDecoder::Conditioning::kNone);

  Rng rng(5);
  FineDecoder dec(rng, traj_only);
  Rng data_rng(6);
  Tensor h = random_tensor(data_rng, {4, 8});
  Graph g;
  auto out = dec.decode(g, g.constant(h), Var{}, 2, 2);
  CHECK(g.value(out.traj).cols() == traj_only.t_pred_steps * 5);
}

TEST_CASE("teacher forcing swaps means before the switch epoch only") {
  Graph g;
  Rng rng(7);
  Tensor goals = random_tensor(rng, {4, 5});
  Tensor endpoints({4, 2});
  for (int r = 0; r < 4; ++r) {
    endpoints.at(r, 0) = 10.0 + r;
    endpoints.at(r, 1) = -3.0 - r;
  }
  Var vgoals = g.constant(goals);

  Var forced = teacher_forcing_select(g, vgoals, endpoints, 0, 6);
  for (int r = 0; r < 4; ++r) {
    CHECK(g.value(forced).at(r, 0) == endpoints.at(r, 0));
    CHECK(g.value(forced).at(r, 1) == endpoints.at(r, 1));
    for (int c = 2; c < 5; ++c) CHECK(g.value(forced).at(r, c) == goals.at(r, c));
  }

  Var passthrough = teacher_forcing_select(g, vgoals, endpoints, 6, 6);
  CHECK(passthrough.id == vgoals.id);
  CHECK_THROWS_AS(teacher_forcing_select(g, vgoals, endpoints, -1, 6), RangeError);
}

TEST_CASE("proportional desk-scale schedule mirrors the 60-of-80 split") {
  // 60 of 80 epochs scales to 6 of 8 at desk scale.
  CHECK(60 * 8 / 80 == 6);
}

TEST_CASE("fine output responds to goal conditioning") {
  ModelConfig cfg = tiny_cfg(0.0);
  Rng rng(8);
  FineDecoder dec(rng, cfg);
  Rng data_rng(9);
  Tensor h = random_tensor(data_rng, {4, 8});
  Tensor goals = random_tensor(data_rng, {4, 5});
  Graph g;
  auto base = dec.decode(g, g.constant(h), g.constant(goals), 2, 2);
  Tensor nudged = goals;
  nudged.at(0, 0) += 0.5;
  auto moved = dec.decode(g, g.constant(h), g.constant(nudged), 2, 2);
  double diff = 0.0;
  for (int64_t i = 0; i < g.value(base.traj).size(); ++i) {
    diff += std::fabs(g.value(base.traj).data()[i] - g.value(moved.traj).data()[i]);
  }
  CHECK(diff > 1e-8);
}

TEST_CASE("gradients flow through both decoders end to end") {
  ModelConfig cfg = tiny_cfg(1.0);
  cfg.t_pred_steps = 5;  // short horizon keeps the finite-difference sweep fast
  cfg.coarse_rate_hz = 2.0;
  Rng rng(10);
  CoarseDecoder coarse(rng, cfg);
  FineDecoder fine(rng, cfg);
  Rng data_rng(11);
  Tensor h = random_tensor(data_rng, {4, 8});
  Tensor goals = random_tensor(data_rng, {4, 5});
  Tensor w = random_tensor(data_rng, {4, cfg.t_pred_steps * 5});

  std::vector<Tensor*> leaves{&h, &goals, &coarse.decoder.query_proj.weight,
                              &coarse.decoder.head.layers[1].weight,
                              &fine.decoder.query_proj.weight};
  auto report = grad_check(
      [&](Graph& g) {
        Var wp = coarse.decode(g, g.param(h), g.param(goals));
        auto out = fine.decode(g, g.param(h), wp, 2, 2);
        Var score_part = g.mean(out.mode_logits);
        return g.add(g.mean(g.mul(out.traj, g.constant(w))), score_part);
      },
      leaves);
  CHECK(report.max_rel_err < 1e-4);
}
