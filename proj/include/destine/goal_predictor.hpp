#pragma once

#include <vector>

#include "destine/encoder.hpp"
#include "destine/layers.hpp"
#include "destine/model_config.hpp"

namespace destine {

// Goal rows are 5-vectors: (mu_x, mu_y, log sigma_x, log sigma_y, confidence logit).
constexpr int kGoalDim = 5;
constexpr double kLogSigmaClamp = 4.6;  // sigma in [e^-4.6, e^4.6] ~ [1e-2, 1e2]
// Raw mean outputs are scaled to agent-frame meters; goals sit tens of
// meters out while network outputs live near unit scale.
constexpr double kGoalMeanScale = 10.0;

// Mode identity embedding: one-hot over K modes through a linear projection,
// plus a learned per-mode position encoding, concatenated with the agent
// index feature and projected back to the embedding width. Rows depend only
// on (agent id, mode), never on scene content.
struct IntentionEmbedding {
  nn::Tensor onehot_w;   // K x C
  nn::Tensor onehot_b;   // 1 x C
  nn::Tensor mode_pos;   // K x C
  nn::LinearLayer idx_proj;  // (C + 1) -> C

  IntentionEmbedding() = default;
  IntentionEmbedding(Rng& rng, int k_modes, int dim);

  // agent_id_norm: one entry per agent, id / N. Returns (N*K) x C.
  nn::Var build(nn::Graph& g, const std::vector<double>& agent_id_norm);
  void register_into(nn::ParamSet& ps, const std::string& prefix);
};

// The dynamic goal transformer: learned per-mode query initialization tiled
// over agents, with query/feature position embeddings carrying mode identity
// plus a linear agent-id term. Each layer runs self-attention over the
// queries, cross-attention into h, and an MLP.
struct GoalTransformer {
  nn::Tensor q0;        // K x C
  nn::Tensor pq_mode;   // K x C
  nn::Tensor pq_agent;  // 1 x C
  nn::Tensor ph_mode;   // K x C
  nn::Tensor ph_agent;  // 1 x C
  std::vector<nn::DecoderLayer> layers;

  GoalTransformer() = default;
  GoalTransformer(Rng& rng, int k_modes, int dim, int heads, int mlp_hidden, int depth);

  // h: (N*K) x C. Returns the final goal queries, same shape.
  nn::Var run(nn::Graph& g, nn::Var h, const std::vector<double>& agent_id_norm);
  void register_into(nn::ParamSet& ps, const std::string& prefix);
};

// Expands each goal query into a (C x 5) filter applied to that row of h.
struct DynamicGoalHead {
  nn::MlpLayer expand;  // C -> hidden -> C*5

  DynamicGoalHead() = default;
  DynamicGoalHead(Rng& rng, int dim, int hidden);

  nn::Var predict(nn::Graph& g, nn::Var queries, nn::Var h);
  void register_into(nn::ParamSet& ps, const std::string& prefix);
};

// Clamps the log-sigma channels; means and confidence pass through.
nn::Var finalize_goal5(nn::Graph& g, nn::Var raw);

struct GoalPredictor {
  IntentionEmbedding intention;
  nn::LinearLayer h_proj;  // 3*C -> C
  GoalTransformer transformer;
  DynamicGoalHead dynamic_head;
  nn::MlpLayer learned_head;  // the non-dynamic baseline
  ModelConfig::GoalKind kind = ModelConfig::GoalKind::kDynamic;

  GoalPredictor() = default;
  GoalPredictor(Rng& rng, const ModelConfig& cfg);

  struct Outputs {
    nn::Var h;       // (N*K) x C joint feature encoding
    nn::Var goals5;  // (N*K) x 5, log-sigma clamped
  };

  // local/global_: N x C encoder outputs. agent_id_norm: per agent.
  Outputs run(nn::Graph& g, nn::Var local, nn::Var global_,
              const std::vector<double>& agent_id_norm);
  // Feature assembly alone (intention + local + global -> h).
  nn::Var assemble_h(nn::Graph& g, nn::Var local, nn::Var global_,
                     const std::vector<double>& agent_id_norm);
  void register_into(nn::ParamSet& ps, const std::string& prefix);
};

}  // namespace destine
