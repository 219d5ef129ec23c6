#pragma once

#include <string>

#include "destine/losses.hpp"
#include "destine/model_config.hpp"

namespace destine {

// Flat key=value configuration with dotted namespaces. Every key maps to one
// field below; unknown keys are hard errors.
struct TrainConfig {
  int epochs_tf = 6;
  int epochs_ft = 2;
  int batch_size = 32;
  double lr0 = 5e-4;
  double weight_decay = 1e-4;
  int seed = 1;

  int k = 6;
  int embed_dim = 128;
  int layers = 4;
  int heads = 8;
  double radius = 50.0;
  int n_max = 8;

  bool goal_enabled = true;
  std::string goal_kind = "dynamic";  // dynamic | learned
  int goal_layers = 4;
  int goal_learned_depth = 4;
  double coarse_rate_hz = 1.0;

  std::string tta_variant = "masked";  // off | no_mask | masked | masked_history
  int tta_layers = 1;
  double tta_tw_seconds = 2.0;
  bool tta_residual = false;

  double loss_alpha = 1.0;
  double loss_gamma = 1.0;
  double loss_beta = 1.0;
  double huber_delta = 1.0;
  double miss_threshold = 2.0;

  int total_epochs() const { return epochs_tf + epochs_ft; }
  ModelConfig to_model_config() const;
  LossWeights to_loss_weights() const;
  void validate() const;

  // Sorted key=value lines; the basis for the config hash.
  std::string canonical_text() const;
  std::string hash() const;  // FNV-1a hex of the canonical text
};

// `text` holds lines of `key = value`; '#' starts a comment.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);
void apply_config_override(TrainConfig& cfg, const std::string& key, const std::string& value);

}  // namespace destine
