#include "destine/decoders.hpp"

namespace destine {

using nn::Graph;
using nn::Tensor;
using nn::Var;

namespace {

// Heads emit per-step displacements for the location channels; integrating
// them keeps the raw outputs near the optimizer's natural scale while the
// tensors carry agent-frame positions. An optional anchor (constant-velocity
// rollout per row) shifts the integrated positions.
Var integrate_position_channels(Graph& g, Var raw, int t, const PositionAnchor* anchor) {
  const int rows = raw.rows();
  if (raw.cols() != t * 5) throw DimensionError("integrate: row width must be t*5");
  std::vector<int64_t> dx_idx, dy_idx;
  dx_idx.reserve(static_cast<size_t>(rows) * t);
  dy_idx.reserve(static_cast<size_t>(rows) * t);
  for (int r = 0; r < rows; ++r) {
    for (int s = 0; s < t; ++s) {
      dx_idx.push_back(static_cast<int64_t>(r) * t * 5 + s * 5 + 0);
      dy_idx.push_back(static_cast<int64_t>(r) * t * 5 + s * 5 + 1);
    }
  }
  Var dx = g.gather(raw, {rows, t}, std::move(dx_idx));
  Var dy = g.gather(raw, {rows, t}, std::move(dy_idx));
  Tensor tri({t, t});
  for (int s = 0; s < t; ++s) {
    for (int c = s; c < t; ++c) tri.at(s, c) = 1.0;
  }
  Var tri_c = g.constant(tri);
  Var px = g.matmul(dx, tri_c);
  Var py = g.matmul(dy, tri_c);
  if (anchor != nullptr) {
    if (anchor->x.rows() != rows || anchor->x.cols() != t) {
      throw DimensionError("integrate: anchor shape mismatch");
    }
    px = g.add(px, g.constant(anchor->x));
    py = g.add(py, g.constant(anchor->y));
  }

  // Stitch positions back into the (.., t*5) layout.
  Var stacked = g.concat_rows({g.reshape(px, {rows * t, 1}), g.reshape(py, {rows * t, 1}),
                               g.reshape(raw, {static_cast<int>(raw.shape()[0]) * t * 5, 1})});
  const int64_t base_py = static_cast<int64_t>(rows) * t;
  const int64_t base_raw = 2 * base_py;
  std::vector<int64_t> out_idx(static_cast<size_t>(rows) * t * 5);
  for (int r = 0; r < rows; ++r) {
    for (int s = 0; s < t; ++s) {
      const int64_t flat = static_cast<int64_t>(r) * t * 5 + s * 5;
      out_idx[static_cast<size_t>(flat) + 0] = static_cast<int64_t>(r) * t + s;
      out_idx[static_cast<size_t>(flat) + 1] = base_py + static_cast<int64_t>(r) * t + s;
      for (int c = 2; c < 5; ++c) {
        out_idx[static_cast<size_t>(flat) + c] = base_raw + flat + c;
      }
    }
  }
  return g.gather(stacked, {rows, t * 5}, std::move(out_idx));
}

}  // namespace

TrajectoryDecoder::TrajectoryDecoder(Rng& rng, int cond_dim, int dim, int heads, int mlp_hidden,
                                     int depth, int out_per_row)
    : query_proj(rng, cond_dim, dim), head(rng, {dim, mlp_hidden, out_per_row}) {
  layers.reserve(static_cast<size_t>(depth));
  for (int i = 0; i < depth; ++i) layers.emplace_back(rng, dim, heads, mlp_hidden);
}

Var TrajectoryDecoder::decode_tokens(Graph& g, Var query_in, Var memory) {
  Var q = query_proj.apply(g, query_in);
  for (auto& layer : layers) q = layer.apply(g, q, memory);
  return q;
}

Var TrajectoryDecoder::decode(Graph& g, Var query_in, Var memory) {
  return head.apply(g, decode_tokens(g, query_in, memory));
}

void TrajectoryDecoder::register_into(nn::ParamSet& ps, const std::string& prefix) {
  query_proj.register_into(ps, prefix + ".query_proj");
  for (size_t i = 0; i < layers.size(); ++i) {
    layers[i].register_into(ps, prefix + ".layer" + std::to_string(i));
  }
  head.register_into(ps, prefix + ".head");
}

// ---------------------------------------------------------------------------

CoarseDecoder::CoarseDecoder(Rng& rng, const ModelConfig& cfg)
    : decoder(rng, kGoalDim + cfg.embed_dim, cfg.embed_dim, cfg.heads, cfg.mlp_hidden(), cfg.layers,
              cfg.t_waypoints() * 5),
      t_waypoints(cfg.t_waypoints()) {
  if (t_waypoints <= 0) throw ConfigError("coarse decoder constructed with rate 0");
}

Var CoarseDecoder::decode(Graph& g, Var h, Var goals5) {
  if (goals5.rows() != h.rows()) throw DimensionError("coarse decoder: goals/h row mismatch");
  Var raw = decoder.decode(g, g.concat_cols({goals5, h}), h);
  return integrate_position_channels(g, raw, t_waypoints);
}

void CoarseDecoder::register_into(nn::ParamSet& ps, const std::string& prefix) {
  decoder.register_into(ps, prefix);
}

// ---------------------------------------------------------------------------

FineDecoder::Conditioning FineDecoder::conditioning_for(const ModelConfig& cfg) {
  if (!cfg.use_goal) return Conditioning::kNone;
  if (cfg.coarse_rate_hz > 0.0) return Conditioning::kWaypoints;
  return Conditioning::kGoal;
}

namespace {

int fine_cond_dim(const ModelConfig& cfg) {
  switch (FineDecoder::conditioning_for(cfg)) {
    case FineDecoder::Conditioning::kNone: return cfg.embed_dim;
    case FineDecoder::Conditioning::kGoal: return cfg.embed_dim + kGoalDim;
    case FineDecoder::Conditioning::kWaypoints: return cfg.embed_dim + cfg.t_waypoints() * 5;
  }
  return cfg.embed_dim;
}

}  // namespace

FineDecoder::FineDecoder(Rng& rng, const ModelConfig& cfg)
    : decoder(rng, fine_cond_dim(cfg), cfg.embed_dim, cfg.heads, cfg.mlp_hidden(), cfg.layers,
              cfg.t_pred_steps * 5),
      score_head(rng, {cfg.embed_dim, cfg.mlp_hidden(), 1}),
      conditioning(conditioning_for(cfg)),
      t_pred(cfg.t_pred_steps) {}

FineDecoder::Outputs FineDecoder::decode(Graph& g, Var h, Var cond, int n, int k) {
  Var query_in;
  if (conditioning == Conditioning::kNone) {
    query_in = h;
  } else {
    if (!cond.valid()) throw DimensionError("fine decoder: missing conditioning input");
    if (cond.rows() != h.rows()) throw DimensionError("fine decoder: conditioning row mismatch");
    query_in = g.concat_cols({h, cond});
  }
  Var tokens = decoder.decode_tokens(g, query_in, h);
  Outputs out;
  out.traj = integrate_position_channels(g, decoder.head.apply(g, tokens), t_pred);
  out.mode_logits = g.reshape(score_head.apply(g, tokens), {n, k});
  return out;
}

void FineDecoder::register_into(nn::ParamSet& ps, const std::string& prefix) {
  decoder.register_into(ps, prefix);
  score_head.register_into(ps, prefix + ".score_head");
}

// ---------------------------------------------------------------------------

Var teacher_forcing_select(Graph& g, Var goals5, const Tensor& gt_endpoints, int epoch,
                           int switch_epoch) {
  if (epoch < 0) throw RangeError("teacher_forcing_select: epoch must be >= 0");
  if (epoch >= switch_epoch) return goals5;
  if (gt_endpoints.rows() != goals5.rows() || gt_endpoints.cols() != 2) {
    throw DimensionError("teacher forcing endpoints must be (N*K) x 2");
  }
  Var rest = g.slice_cols(goals5, 2, 3);
  return g.concat_cols({g.constant(gt_endpoints), rest});
}

}  // namespace destine
