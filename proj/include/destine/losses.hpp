#pragma once

#include <vector>

#include "destine/graph.hpp"
#include "destine/model_config.hpp"
#include "destine/scene.hpp"

namespace destine {

struct LossWeights {
  double alpha = 1.0;  // goal term
  double gamma = 1.0;  // waypoint term
  double beta = 1.0;   // final trajectory term
  double huber_delta = 1.0;
};

struct LossBreakdown {
  double l_g = 0.0;
  double l_wp = 0.0;
  double l_y = 0.0;
  double total = 0.0;
};

// Diagonal Gaussian NLL per row: sum_dim [0.5*((t-mu)/sigma)^2 + log sigma]
// + log(2*pi). log_sigma is clamped to the goal bounds before use.
nn::Var gaussian_nll_rows(nn::Graph& g, nn::Var mu, nn::Var log_sigma, const nn::Tensor& target);

// Scalar conveniences used by the op-level tests; computed with the same
// graph ops as the training path.
double gaussian_nll(const Vec2& mu, const Vec2& log_sigma, const Vec2& target);
double huber_loss(const std::vector<Vec2>& pred, const std::vector<Vec2>& target,
                  double delta = 1.0);

// Winner-takes-all mode selection: per agent, the mode whose endpoint is
// closest to the ground-truth endpoint; ties resolve to the lowest index.
std::vector<int> select_best_mode(const nn::Tensor& y_hat, int n, int k,
                                  const std::vector<Vec2>& gt_endpoints);

// Ground truth for one scene, expressed in each agent's own frame.
struct SceneTargets {
  int n = 0;
  int t_pred = 0;
  std::vector<Vec2> futures;       // n * t_pred, row-major by agent
  std::vector<Vec2> endpoints;     // per agent
  nn::Tensor endpoints_nk;         // (n*k) x 2, endpoint tiled over modes

  static SceneTargets build(const Scene& scene, const std::vector<AgentFrame>& frames, int k);
};

struct ForwardVars {
  nn::Var goals5;       // invalid when the goal stage is off
  nn::Var waypoints;    // invalid when the coarse stage is off
  nn::Var y_hat;        // (n*k) x (t*5), post-TTA
  nn::Var mode_logits;  // n x k
};

struct TotalLossResult {
  nn::Var total;
  LossBreakdown values;
  std::vector<int> best_modes;
};

// Assembles alpha*L_g + gamma*L_wp + beta*L_y with winner-takes-all mode
// selection from the y_hat endpoints. Waypoint targets are the ground truth
// subsampled at the coarse timestamps.
TotalLossResult total_loss(nn::Graph& g, const ForwardVars& fw, const SceneTargets& targets,
                           double coarse_rate_hz, double dt, const LossWeights& weights);

}  // namespace destine
