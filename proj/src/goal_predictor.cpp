#include "destine/goal_predictor.hpp"

namespace destine {

using nn::Graph;
using nn::Tensor;
using nn::Var;

namespace {

void init_normal(Rng& rng, Tensor& t, double stddev) {
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0, stddev);
}

// Row pattern (a, k) -> a for broadcasting per-agent rows over modes.
std::vector<int> agent_of_row(int n, int k) {
  std::vector<int> rows(static_cast<size_t>(n) * k);
  for (int a = 0; a < n; ++a) {
    for (int m = 0; m < k; ++m) rows[static_cast<size_t>(a) * k + m] = a;
  }
  return rows;
}

// Row pattern (a, k) -> k for tiling per-mode tables over agents.
std::vector<int> mode_of_row(int n, int k) {
  std::vector<int> rows(static_cast<size_t>(n) * k);
  for (int a = 0; a < n; ++a) {
    for (int m = 0; m < k; ++m) rows[static_cast<size_t>(a) * k + m] = m;
  }
  return rows;
}

Tensor id_column(const std::vector<double>& agent_id_norm, int k) {
  const int n = static_cast<int>(agent_id_norm.size());
  Tensor col({n * k, 1});
  for (int a = 0; a < n; ++a) {
    for (int m = 0; m < k; ++m) col.at(a * k + m, 0) = agent_id_norm[static_cast<size_t>(a)];
  }
  return col;
}

}  // namespace

// ---------------------------------------------------------------------------

IntentionEmbedding::IntentionEmbedding(Rng& rng, int k_modes, int dim)
    : idx_proj(rng, dim + 1, dim) {
  onehot_w = Tensor({k_modes, dim});
  const double a = std::sqrt(6.0 / (k_modes + dim));
  for (int64_t i = 0; i < onehot_w.size(); ++i) onehot_w.data()[i] = rng.uniform(-a, a);
  onehot_b = Tensor({1, dim});
  mode_pos = Tensor({k_modes, dim});
  init_normal(rng, mode_pos, 0.02);
}

Var IntentionEmbedding::build(Graph& g, const std::vector<double>& agent_id_norm) {
  const int n = static_cast<int>(agent_id_norm.size());
  const int k = onehot_w.rows();
  // One-hot through the projection is a row lookup plus bias and mode encoding.
  Var table = g.add(g.add_row_broadcast(g.param(onehot_w), g.param(onehot_b)), g.param(mode_pos));
  Var tiled = g.pick_rows(table, mode_of_row(n, k));
  Var with_idx = g.concat_cols({tiled, g.constant(id_column(agent_id_norm, k))});
  return idx_proj.apply(g, with_idx);
}

void IntentionEmbedding::register_into(nn::ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".onehot_w", onehot_w);
  ps.add(prefix + ".onehot_b", onehot_b);
  ps.add(prefix + ".mode_pos", mode_pos);
  idx_proj.register_into(ps, prefix + ".idx_proj");
}

// ---------------------------------------------------------------------------

GoalTransformer::GoalTransformer(Rng& rng, int k_modes, int dim, int heads, int mlp_hidden,
                                 int depth) {
  q0 = Tensor({k_modes, dim});
  init_normal(rng, q0, 0.5);
  pq_mode = Tensor({k_modes, dim});
  pq_agent = Tensor({1, dim});
  ph_mode = Tensor({k_modes, dim});
  ph_agent = Tensor({1, dim});
  init_normal(rng, pq_mode, 0.02);
  init_normal(rng, pq_agent, 0.02);
  init_normal(rng, ph_mode, 0.02);
  init_normal(rng, ph_agent, 0.02);
  layers.reserve(static_cast<size_t>(depth));
  for (int i = 0; i < depth; ++i) layers.emplace_back(rng, dim, heads, mlp_hidden);
}

Var GoalTransformer::run(Graph& g, Var h, const std::vector<double>& agent_id_norm) {
  const int n = static_cast<int>(agent_id_norm.size());
  const int k = q0.rows();
  if (h.rows() != n * k) throw DimensionError("goal transformer: h must have N*K rows");
  Var idcol = g.constant(id_column(agent_id_norm, k));
  auto slot_embedding = [&](Tensor& mode_table, Tensor& agent_vec) {
    Var tiled = g.pick_rows(g.param(mode_table), mode_of_row(n, k));
    return g.add(tiled, g.matmul(idcol, g.param(agent_vec)));
  };
  Var pos_q = slot_embedding(pq_mode, pq_agent);
  Var pos_h = slot_embedding(ph_mode, ph_agent);
  Var queries = g.pick_rows(g.param(q0), mode_of_row(n, k));
  for (auto& layer : layers) {
    queries = layer.apply(g, queries, h, pos_q, pos_h);
  }
  return queries;
}

void GoalTransformer::register_into(nn::ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".q0", q0);
  ps.add(prefix + ".pq_mode", pq_mode);
  ps.add(prefix + ".pq_agent", pq_agent);
  ps.add(prefix + ".ph_mode", ph_mode);
  ps.add(prefix + ".ph_agent", ph_agent);
  for (size_t i = 0; i < layers.size(); ++i) {
    layers[i].register_into(ps, prefix + ".layer" + std::to_string(i));
  }
}

// ---------------------------------------------------------------------------

DynamicGoalHead::DynamicGoalHead(Rng& rng, int dim, int hidden)
    : expand(rng, {dim, hidden, dim * kGoalDim}) {}

Var DynamicGoalHead::predict(Graph& g, Var queries, Var h) {
  Var filters = expand.apply(g, queries);
  return g.dynamic_linear(h, filters, kGoalDim);
}

void DynamicGoalHead::register_into(nn::ParamSet& ps, const std::string& prefix) {
  expand.register_into(ps, prefix + ".expand");
}

// ---------------------------------------------------------------------------

Var finalize_goal5(Graph& g, Var raw) {
  if (raw.cols() != kGoalDim) throw DimensionError("goal rows must have 5 columns");
  Var means = g.affine(g.slice_cols(raw, 0, 2), kGoalMeanScale, 0.0);
  Var log_sigma = g.clamp(g.slice_cols(raw, 2, 2), -kLogSigmaClamp, kLogSigmaClamp);
  Var conf = g.slice_cols(raw, 4, 1);
  return g.concat_cols({means, log_sigma, conf});
}

// ---------------------------------------------------------------------------

namespace {

std::vector<int> learned_mlp_dims(int dim, int hidden, int depth) {
  std::vector<int> dims{dim};
  for (int i = 1; i < depth; ++i) dims.push_back(hidden);
  dims.push_back(kGoalDim);
  return dims;
}

}  // namespace

GoalPredictor::GoalPredictor(Rng& rng, const ModelConfig& cfg)
    : intention(rng, cfg.k_modes, cfg.embed_dim),
      h_proj(rng, 3 * cfg.embed_dim, cfg.embed_dim),
      transformer(rng, cfg.k_modes, cfg.embed_dim, cfg.heads, cfg.mlp_hidden(), cfg.goal_layers),
      dynamic_head(rng, cfg.embed_dim, cfg.mlp_hidden()),
      learned_head(rng, learned_mlp_dims(cfg.embed_dim, cfg.mlp_hidden(), cfg.learned_depth)),
      kind(cfg.goal_kind) {}

Var GoalPredictor::assemble_h(Graph& g, Var local, Var global_,
                              const std::vector<double>& agent_id_norm) {
  const int n = static_cast<int>(agent_id_norm.size());
  if (local.rows() != n || global_.rows() != n) {
    throw DimensionError("assemble_h: encoder features must have one row per agent");
  }
  const int k = intention.onehot_w.rows();
  Var intent = intention.build(g, agent_id_norm);
  const std::vector<int> rep = agent_of_row(n, k);
  Var local_rep = g.pick_rows(local, rep);
  Var global_rep = g.pick_rows(global_, rep);
  return h_proj.apply(g, g.concat_cols({intent, local_rep, global_rep}));
}

GoalPredictor::Outputs GoalPredictor::run(Graph& g, Var local, Var global_,
                                          const std::vector<double>& agent_id_norm) {
  Outputs out;
  out.h = assemble_h(g, local, global_, agent_id_norm);
  Var raw;
  if (kind == ModelConfig::GoalKind::kDynamic) {
    Var queries = transformer.run(g, out.h, agent_id_norm);
    raw = dynamic_head.predict(g, queries, out.h);
  } else {
    raw = learned_head.apply(g, out.h);
  }
  out.goals5 = finalize_goal5(g, raw);
  return out;
}

void GoalPredictor::register_into(nn::ParamSet& ps, const std::string& prefix) {
  intention.register_into(ps, prefix + ".intention");
  h_proj.register_into(ps, prefix + ".h_proj");
  if (kind == ModelConfig::GoalKind::kDynamic) {
    transformer.register_into(ps, prefix + ".transformer");
    dynamic_head.register_into(ps, prefix + ".dynamic_head");
  } else {
    learned_head.register_into(ps, prefix + ".learned_head");
  }
}

}  // namespace destine
