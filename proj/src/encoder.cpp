#include "destine/encoder.hpp"

#include <cmath>

namespace destine {

using nn::AttentionMask;
using nn::Graph;
using nn::Tensor;
using nn::Var;

SceneContext SceneContext::build(const Scene& scene) {
  SceneContext ctx;
  ctx.scene = &scene;
  const int n = scene.num_agents();
  ctx.frames.resize(static_cast<size_t>(n));
  ctx.local.reserve(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a) {
    ctx.local.push_back(to_agent_frame(scene, a, &ctx.frames[static_cast<size_t>(a)]));
  }
  return ctx;
}

// ---------------------------------------------------------------------------

LocalEncoder::LocalEncoder(Rng& rng, const ModelConfig& cfg)
    : token_embed(rng, 4, cfg.embed_dim),
      patch_block(rng, cfg.embed_dim, cfg.heads, cfg.mlp_hidden()),
      lane_embed(rng, 5, cfg.embed_dim),
      lane_ln_q(cfg.embed_dim),
      lane_ln_kv(cfg.embed_dim),
      lane_attn(rng, cfg.embed_dim, cfg.heads),
      mix_ln(cfg.embed_dim),
      mix_mlp(rng, {cfg.embed_dim, cfg.mlp_hidden(), cfg.embed_dim}) {
  time_pos = Tensor({cfg.t_obs_steps, cfg.embed_dim});
  for (int64_t i = 0; i < time_pos.size(); ++i) time_pos.data()[i] = rng.normal(0.0, 0.02);
  temporal.reserve(static_cast<size_t>(cfg.layers));
  for (int i = 0; i < cfg.layers; ++i) {
    temporal.emplace_back(rng, cfg.embed_dim, cfg.heads, cfg.mlp_hidden());
  }
}

Var LocalEncoder::encode(Graph& g, const SceneContext& ctx, const ModelConfig& cfg) {
  const Scene& scene = *ctx.scene;
  const int n = scene.num_agents();
  const int t_obs = scene.t_obs_steps;

  std::vector<Var> per_agent;
  per_agent.reserve(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a) {
    const Scene& view = ctx.local[static_cast<size_t>(a)];

    // Motion tokens for every (step, agent), step-major.
    Tensor feats({t_obs * n, 4});
    AttentionMask mask(t_obs * n, t_obs * n, /*allow_all=*/false);
    for (int t = 0; t < t_obs; ++t) {
      const Vec2 pa = view.agents[static_cast<size_t>(a)].obs[static_cast<size_t>(t)];
      std::vector<bool> in_patch(static_cast<size_t>(n));
      for (int b = 0; b < n; ++b) {
        const Vec2 pb = view.agents[static_cast<size_t>(b)].obs[static_cast<size_t>(t)];
        in_patch[static_cast<size_t>(b)] = dist(pa, pb) <= cfg.radius;
        const Vec2 rel = pb - pa;
        Vec2 disp{0.0, 0.0};
        if (t > 0) {
          disp = pb - view.agents[static_cast<size_t>(b)].obs[static_cast<size_t>(t - 1)];
        }
        const int row = t * n + b;
        feats.at(row, 0) = rel.x;
        feats.at(row, 1) = rel.y;
        feats.at(row, 2) = disp.x;
        feats.at(row, 3) = disp.y;
      }
      for (int b = 0; b < n; ++b) {
        const int rb = t * n + b;
        mask.set_allowed(rb, rb, true);
        if (!in_patch[static_cast<size_t>(b)]) continue;
        for (int c = 0; c < n; ++c) {
          if (in_patch[static_cast<size_t>(c)]) mask.set_allowed(rb, t * n + c, true);
        }
      }
    }

    Var tokens = token_embed.apply(g, g.constant(feats));
    tokens = patch_block.apply(g, tokens, &mask);

    // The central agent's per-step outputs, in time order.
    std::vector<int> own_rows(static_cast<size_t>(t_obs));
    for (int t = 0; t < t_obs; ++t) own_rows[static_cast<size_t>(t)] = t * n + a;
    Var seq = g.pick_rows(tokens, own_rows);
    seq = g.add(seq, g.param(time_pos));
    for (auto& block : temporal) seq = block.apply(g, seq);
    Var summary = g.pick_rows(seq, {t_obs - 1});  // the t = 0 token

    // Lane segments within the radius of the agent's t = 0 position.
    std::vector<double> lane_feats;
    int lane_count = 0;
    for (const LanePolyline& lane : view.lanes) {
      for (size_t i = 0; i + 1 < lane.centerline.size(); ++i) {
        const Vec2 p0 = lane.centerline[i];
        const Vec2 p1 = lane.centerline[i + 1];
        const Vec2 mid = (p0 + p1) * 0.5;
        if (mid.norm() > cfg.radius) continue;
        const Vec2 dir = (p1 - p0).normalized();
        lane_feats.insert(lane_feats.end(), {mid.x, mid.y, dir.x, dir.y, lane.width});
        ++lane_count;
      }
    }
    Var h = summary;
    {
      Var q = lane_ln_q.apply(g, summary);
      Var keys;
      if (lane_count > 0) {
        Var lanes = lane_embed.apply(g, g.constant({lane_count, 5}, std::move(lane_feats)));
        keys = lane_ln_kv.apply(g, g.concat_rows({lanes, summary}));
      } else {
        // No lane in range: the agent's own token is the only key.
        keys = lane_ln_kv.apply(g, summary);
      }
      h = g.add(h, lane_attn.apply(g, q, keys, keys));
    }
    h = g.add(h, mix_mlp.apply(g, mix_ln.apply(g, h)));
    per_agent.push_back(h);
  }
  return n == 1 ? per_agent[0] : g.concat_rows(per_agent);
}

void LocalEncoder::register_into(nn::ParamSet& ps, const std::string& prefix) {
  token_embed.register_into(ps, prefix + ".token_embed");
  patch_block.register_into(ps, prefix + ".patch");
  ps.add(prefix + ".time_pos", time_pos);
  for (size_t i = 0; i < temporal.size(); ++i) {
    temporal[i].register_into(ps, prefix + ".temporal" + std::to_string(i));
  }
  lane_embed.register_into(ps, prefix + ".lane_embed");
  lane_ln_q.register_into(ps, prefix + ".lane_ln_q");
  lane_ln_kv.register_into(ps, prefix + ".lane_ln_kv");
  lane_attn.register_into(ps, prefix + ".lane_attn");
  mix_ln.register_into(ps, prefix + ".mix_ln");
  mix_mlp.register_into(ps, prefix + ".mix_mlp");
}

// ---------------------------------------------------------------------------

GlobalEncoder::GlobalEncoder(Rng& rng, const ModelConfig& cfg)
    : rel_embed(rng, {3, cfg.embed_dim, cfg.embed_dim}),
      ln_in(cfg.embed_dim),
      wq(rng, cfg.embed_dim, cfg.embed_dim),
      wk(rng, cfg.embed_dim, cfg.embed_dim),
      wv(rng, cfg.embed_dim, cfg.embed_dim),
      ln_mlp(cfg.embed_dim),
      mlp(rng, {cfg.embed_dim, cfg.mlp_hidden(), cfg.embed_dim}) {}

namespace {

double wrap_angle(double a) {
  const double pi = 3.14159265358979323846;
  while (a > pi) a -= 2.0 * pi;
  while (a < -pi) a += 2.0 * pi;
  return a;
}

}  // namespace

Var GlobalEncoder::encode(Graph& g, Var local, const SceneContext& ctx) {
  const int n = ctx.scene->num_agents();
  if (local.rows() != n) throw DimensionError("global encoder: local features row mismatch");
  const int d = local.cols();

  // Relative pose features between agent frames, row (a*n + b).
  Tensor rel({n * n, 3});
  for (int a = 0; a < n; ++a) {
    const AgentFrame& fa = ctx.frames[static_cast<size_t>(a)];
    for (int b = 0; b < n; ++b) {
      const AgentFrame& fb = ctx.frames[static_cast<size_t>(b)];
      const Vec2 delta = fa.to_frame(fb.origin);
      rel.at(a * n + b, 0) = delta.x;
      rel.at(a * n + b, 1) = delta.y;
      rel.at(a * n + b, 2) = wrap_angle(fb.rotation - fa.rotation);
    }
  }
  Var rel_e = rel_embed.apply(g, g.constant(rel));

  Var ln = ln_in.apply(g, local);
  Var q = wq.apply(g, ln);
  Var k = wk.apply(g, ln);
  Var v = wv.apply(g, ln);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  std::vector<Var> rows;
  rows.reserve(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a) {
    std::vector<int> rel_rows(static_cast<size_t>(n));
    for (int b = 0; b < n; ++b) rel_rows[static_cast<size_t>(b)] = a * n + b;
    Var ea = g.pick_rows(rel_e, rel_rows);
    Var keys = g.add(k, ea);
    Var vals = g.add(v, ea);
    Var qa = g.pick_rows(q, {a});
    Var attn = g.row_softmax(g.affine(g.matmul(qa, keys, false, true), scale, 0.0));
    rows.push_back(g.matmul(attn, vals));
  }
  Var out = g.add(local, n == 1 ? rows[0] : g.concat_rows(rows));
  out = g.add(out, mlp.apply(g, ln_mlp.apply(g, out)));
  return out;
}

void GlobalEncoder::register_into(nn::ParamSet& ps, const std::string& prefix) {
  rel_embed.register_into(ps, prefix + ".rel_embed");
  ln_in.register_into(ps, prefix + ".ln_in");
  wq.register_into(ps, prefix + ".wq");
  wk.register_into(ps, prefix + ".wk");
  wv.register_into(ps, prefix + ".wv");
  ln_mlp.register_into(ps, prefix + ".ln_mlp");
  mlp.register_into(ps, prefix + ".mlp");
}

}  // namespace destine
