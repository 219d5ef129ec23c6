#pragma once

#include <vector>

#include "destine/layers.hpp"
#include "destine/model_config.hpp"
#include "destine/scene.hpp"

namespace destine {

// Per-agent view of the scene plus the frames used to map predictions back
// to global coordinates. Built once per forward pass.
struct SceneContext {
  const Scene* scene = nullptr;
  std::vector<AgentFrame> frames;
  std::vector<Scene> local;  // scene transformed into each agent's frame

  static SceneContext build(const Scene& scene);
};

// Local context: per time step the agents within the patch radius attend to
// each other; the central agent's per-step outputs feed a temporal
// transformer; lane segments within the radius attend in the agent frame.
struct LocalEncoder {
  nn::LinearLayer token_embed;  // (rel pos, step displacement) -> d
  nn::SelfAttentionBlock patch_block;
  nn::Tensor time_pos;  // t_obs x d, learned
  std::vector<nn::SelfAttentionBlock> temporal;
  nn::LinearLayer lane_embed;  // (midpoint, direction, width) -> d
  nn::LayerNormLayer lane_ln_q;
  nn::LayerNormLayer lane_ln_kv;
  nn::MultiHeadAttentionLayer lane_attn;
  nn::LayerNormLayer mix_ln;
  nn::MlpLayer mix_mlp;

  LocalEncoder() = default;
  LocalEncoder(Rng& rng, const ModelConfig& cfg);

  // Returns N x d local features.
  nn::Var encode(nn::Graph& g, const SceneContext& ctx, const ModelConfig& cfg);
  void register_into(nn::ParamSet& ps, const std::string& prefix);
};

// One round of message passing over local features, keyed by embeddings of
// relative pose (dx, dy, dheading) between agent frames.
struct GlobalEncoder {
  nn::MlpLayer rel_embed;  // 3 -> d -> d
  nn::LayerNormLayer ln_in;
  nn::LinearLayer wq, wk, wv;
  nn::LayerNormLayer ln_mlp;
  nn::MlpLayer mlp;

  GlobalEncoder() = default;
  GlobalEncoder(Rng& rng, const ModelConfig& cfg);

  // local: N x d. Returns N x d global features.
  nn::Var encode(nn::Graph& g, nn::Var local, const SceneContext& ctx);
  void register_into(nn::ParamSet& ps, const std::string& prefix);
};

}  // namespace destine
