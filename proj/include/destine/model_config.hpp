#pragma once

#include <string>

#include "destine/common.hpp"

namespace destine {

struct TtaConfig {
  enum class Variant { kOff, kNoMask, kMasked, kMaskedHistory };
  Variant variant = Variant::kMasked;
  int layers = 1;  // 1 or 2
  double tw_seconds = 2.0;
  bool residual = false;
};

TtaConfig::Variant tta_variant_from_string(const std::string& s);
std::string tta_variant_to_string(TtaConfig::Variant v);

struct ModelConfig {
  int embed_dim = 128;
  int heads = 8;
  int layers = 4;  // depth of the temporal / goal / decoder transformers
  int k_modes = 6;
  double radius = 50.0;
  int t_obs_steps = 20;
  int t_pred_steps = 30;
  double dt = 0.1;
  int n_max = 8;

  bool use_goal = true;
  enum class GoalKind { kDynamic, kLearned };
  GoalKind goal_kind = GoalKind::kDynamic;
  int goal_layers = 4;    // dynamic goal transformer depth
  int learned_depth = 4;  // learned goal MLP depth, in {2, 4, 6}

  double coarse_rate_hz = 1.0;  // 0 disables the coarse decoder
  TtaConfig tta;

  int mlp_hidden() const { return 2 * embed_dim; }
  double horizon_seconds() const { return t_pred_steps * dt; }
  // Waypoint count at the configured coarse rate (0 when disabled).
  int t_waypoints() const;

  void validate() const;
};

}  // namespace destine
