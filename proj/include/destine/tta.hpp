#pragma once

#include <vector>

#include "destine/encoder.hpp"
#include "destine/layers.hpp"
#include "destine/model_config.hpp"

namespace destine {

// Windowed square-subsequent mask: row i allows columns in
// [max(0, i - w + 1), i] with w = round(tw / dt).
nn::AttentionMask build_window_mask(int t, double tw_seconds, double dt);

// Same banded-causal rule over a sequence of t_obs observation tokens
// followed by t prediction tokens.
nn::AttentionMask build_history_mask(int t_obs, int t, double tw_seconds, double dt);

// One TTA layer per Eq-style attention: tokens are per-step concatenations of
// the four location/scale channels across agents (zero-padded to n_max);
// queries/keys see tokens plus a learned temporal position embedding, values
// are the raw tokens, and there is no output projection.
struct TtaLayerParams {
  nn::Tensor wq;   // d_t x d_t, no bias
  nn::Tensor wk;
  nn::Tensor wv;
  nn::Tensor pos;  // t_total x d_t

  TtaLayerParams() = default;
  TtaLayerParams(Rng& rng, int d_t, int t_total);
  void register_into(nn::ParamSet& ps, const std::string& prefix);
};

class TtaModule {
 public:
  TtaModule() = default;
  TtaModule(Rng& rng, const ModelConfig& cfg);

  bool enabled() const { return cfg_.variant != TtaConfig::Variant::kOff; }

  // fine: (N*K) x (t_pred * 5). Returns the aligned tensor, same shape; the
  // confidence channel passes through untouched.
  nn::Var apply(nn::Graph& g, nn::Var fine, const SceneContext& ctx, int n, int k);

  // Single-layer forward on a per-mode token sequence (used by apply and the
  // tests). pred_tokens: t_pred x d_t; obs_tokens empty unless the history
  // variant is active.
  nn::Var layer_forward(nn::Graph& g, size_t layer_idx, nn::Var pred_tokens, nn::Var obs_tokens);

  void register_into(nn::ParamSet& ps, const std::string& prefix);

  int d_t() const { return d_t_; }
  const nn::AttentionMask* mask() const { return has_mask_ ? &mask_ : nullptr; }
  std::vector<TtaLayerParams>& layers() { return layers_; }

 private:
  TtaConfig cfg_;
  int n_max_ = 0;
  int t_pred_ = 0;
  int t_obs_ = 0;  // 0 unless the history variant is active
  int d_t_ = 0;
  std::vector<TtaLayerParams> layers_;
  nn::AttentionMask mask_{1, 1};
  bool has_mask_ = false;
};

}  // namespace destine
