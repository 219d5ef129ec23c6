#pragma once

#include <vector>

#include "destine/decoders.hpp"
#include "destine/encoder.hpp"
#include "destine/goal_predictor.hpp"
#include "destine/losses.hpp"
#include "destine/metrics.hpp"
#include "destine/tta.hpp"

namespace destine {

// Per-step Gaussian parameters and mode scores for one scene, in each
// agent's own frame. The fifth channel per step is reserved.
struct TrajectoryDistribution {
  int n = 0;
  int k = 0;
  int t = 0;
  double sample_rate_hz = 10.0;
  std::vector<double> params;       // n*k*t*5
  std::vector<double> mode_scores;  // n*k, rows sum to 1 per agent

  double param(int a, int m, int s, int c) const {
    return params[(((static_cast<size_t>(a) * k + m) * t + s) * 5) + c];
  }
  double score(int a, int m) const { return mode_scores[static_cast<size_t>(a) * k + m]; }
};

struct GoalSetValues {
  int n = 0;
  int k = 0;
  std::vector<double> values;  // n*k*5: mu_x, mu_y, log sx, log sy, conf logit

  double at(int a, int m, int c) const {
    return values[(static_cast<size_t>(a) * k + m) * 5 + c];
  }
};

struct ForwardOptions {
  int epoch = 0;
  int tf_switch_epoch = 0;  // teacher forcing active while epoch < switch
  const SceneTargets* targets = nullptr;
};

class DestineModel {
 public:
  DestineModel(const ModelConfig& cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }

  struct Forward {
    SceneContext ctx;
    std::vector<double> agent_id_norm;
    ForwardVars vars;
  };
  // Builds the scene's graph. Teacher forcing requires options.targets.
  Forward forward(nn::Graph& g, const Scene& scene, const ForwardOptions& options);

  struct Prediction {
    TrajectoryDistribution traj;
    GoalSetValues goals;  // n == 0 when the goal stage is off
    std::vector<AgentFrame> frames;
  };
  Prediction predict(const Scene& scene);
  // Focal-agent modes mapped to global coordinates, for metrics and plots.
  ScenePrediction predict_focal_global(const Scene& scene);

 private:
  ModelConfig cfg_;
  LocalEncoder local_encoder_;
  GlobalEncoder global_encoder_;
  GoalPredictor goal_predictor_;
  CoarseDecoder coarse_decoder_;  // constructed only when the rate is nonzero
  bool has_coarse_ = false;
  FineDecoder fine_decoder_;
  TtaModule tta_;
  nn::ParamSet params_;
};

}  // namespace destine
