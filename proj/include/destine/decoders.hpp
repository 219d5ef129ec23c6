#pragma once

#include <vector>

#include "destine/goal_predictor.hpp"

namespace destine {

// Constant-velocity rollout per (agent, mode) row; decoders predict
// displacement residuals around it.
struct PositionAnchor {
  nn::Tensor x;  // rows x t
  nn::Tensor y;  // rows x t

  // disp: last observed per-step displacement per agent, in its own frame.
  // step_of(w) maps output slot w to a future step index (1-based).
  static PositionAnchor constant_velocity(const std::vector<Vec2>& disp, int k, int t_out,
                                          const std::vector<int>& step_of);
};

// Transformer decoder shared by the coarse and fine stages: the conditioned
// query rows self-attend, cross-attend into h, and an MLP head emits the
// whole output tensor for every (agent, mode) row in one shot.
struct TrajectoryDecoder {
  nn::LinearLayer query_proj;
  std::vector<nn::DecoderLayer> layers;
  nn::MlpLayer head;

  TrajectoryDecoder() = default;
  TrajectoryDecoder(Rng& rng, int cond_dim, int dim, int heads, int mlp_hidden, int depth,
                    int out_per_row);

  // query_in: (N*K) x cond_dim; memory: (N*K) x dim.
  nn::Var decode_tokens(nn::Graph& g, nn::Var query_in, nn::Var memory);
  nn::Var decode(nn::Graph& g, nn::Var query_in, nn::Var memory);  // head applied
  void register_into(nn::ParamSet& ps, const std::string& prefix);
};

// Coarse stage: queries are concat(goal row, h row); the head emits
// t_waypoints x 5 per row with the horizon endpoint always included.
struct CoarseDecoder {
  TrajectoryDecoder decoder;
  int t_waypoints = 0;

  CoarseDecoder() = default;
  CoarseDecoder(Rng& rng, const ModelConfig& cfg);

  nn::Var decode(nn::Graph& g, nn::Var h, nn::Var goals5);
  void register_into(nn::ParamSet& ps, const std::string& prefix);
};

// Fine stage at the full sample rate. Conditioning depends on the configured
// pipeline: waypoints when the coarse stage runs, the goal row when it is
// disabled, or nothing for the trajectory-only baseline. A separate scoring
// head produces one mode logit per row.
struct FineDecoder {
  enum class Conditioning { kNone, kGoal, kWaypoints };

  TrajectoryDecoder decoder;
  nn::MlpLayer score_head;
  Conditioning conditioning = Conditioning::kWaypoints;
  int t_pred = 0;

  FineDecoder() = default;
  FineDecoder(Rng& rng, const ModelConfig& cfg);

  struct Outputs {
    nn::Var traj;         // (N*K) x (t_pred * 5)
    nn::Var mode_logits;  // N x K
  };
  // `cond` must match the configured conditioning: goals5 or flattened
  // waypoints; ignored for kNone.
  Outputs decode(nn::Graph& g, nn::Var h, nn::Var cond, int n, int k);
  void register_into(nn::ParamSet& ps, const std::string& prefix);

  static Conditioning conditioning_for(const ModelConfig& cfg);
};

// Teacher forcing: replace the goal means used as decoder conditioning with
// the ground-truth endpoints; sigma and confidence pass through untouched.
nn::Var teacher_forcing_select(nn::Graph& g, nn::Var goals5, const nn::Tensor& gt_endpoints,
                               int epoch, int switch_epoch);

}  // namespace destine
