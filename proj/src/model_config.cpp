#include "destine/model_config.hpp"

#include <cmath>

namespace destine {

TtaConfig::Variant tta_variant_from_string(const std::string& s) {
  if (s == "off") return TtaConfig::Variant::kOff;
  if (s == "no_mask") return TtaConfig::Variant::kNoMask;
  if (s == "masked") return TtaConfig::Variant::kMasked;
  if (s == "masked_history") return TtaConfig::Variant::kMaskedHistory;
  throw ConfigError("unknown tta.variant '" + s + "' (expected off|no_mask|masked|masked_history)");
}

std::string tta_variant_to_string(TtaConfig::Variant v) {
  switch (v) {
    case TtaConfig::Variant::kOff: return "off";
    case TtaConfig::Variant::kNoMask: return "no_mask";
    case TtaConfig::Variant::kMasked: return "masked";
    case TtaConfig::Variant::kMaskedHistory: return "masked_history";
  }
  return "off";
}

int ModelConfig::t_waypoints() const {
  if (coarse_rate_hz <= 0.0) return 0;
  return static_cast<int>(std::lround(horizon_seconds() * coarse_rate_hz));
}

void ModelConfig::validate() const {
  if (embed_dim <= 0 || heads <= 0 || layers <= 0) throw ConfigError("model dims must be positive");
  if (embed_dim % heads != 0) throw ConfigError("embed_dim must be divisible by heads");
  if (k_modes < 1) throw ConfigError("k_modes must be >= 1");
  if (radius <= 0.0) throw ConfigError("radius must be positive");
  if (t_obs_steps < 1 || t_pred_steps < 1) throw ConfigError("step counts must be >= 1");
  if (dt <= 0.0) throw ConfigError("dt must be positive");
  if (n_max < 1) throw ConfigError("n_max must be >= 1");
  const double rate = coarse_rate_hz;
  if (rate != 0.0 && rate != 1.0 && rate != 2.0 && rate != 3.0) {
    throw ConfigError("coarse.rate_hz must be one of 0, 1, 2, 3");
  }
  if (rate > 0.0 && !use_goal) {
    throw ConfigError("the coarse decoder requires the goal predictor (set coarse.rate_hz = 0)");
  }
  if (goal_layers < 1) throw ConfigError("goal.layers must be >= 1");
  if (learned_depth != 2 && learned_depth != 4 && learned_depth != 6) {
    throw ConfigError("goal.learned_depth must be one of 2, 4, 6");
  }
  if (tta.layers != 1 && tta.layers != 2) throw ConfigError("tta.layers must be 1 or 2");
  if (tta.tw_seconds <= 0.0) throw ConfigError("tta.tw_seconds must be positive");
}

}  // namespace destine
