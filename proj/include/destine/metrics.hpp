#pragma once

#include <string>
#include <vector>

#include "destine/scene.hpp"

namespace destine {

struct MetricsReport {
  double min_ade = 0.0;
  double min_fde = 0.0;
  double mr = 0.0;
  double hor_pct = 0.0;
  double sor_pct = 0.0;
  double min_de_1s = 0.0;
  double min_de_2s = 0.0;
  double min_de_3s = 0.0;
  int k_used = 0;
  int scene_count = 0;

  static std::string csv_header();
  std::string csv_row(const std::string& config, int seed) const;
};

// Focal-agent prediction for one scene, in global coordinates.
struct ScenePrediction {
  std::vector<std::vector<Vec2>> modes;  // K trajectories of t_pred points
  std::vector<double> probs;             // per-mode scores, sum to 1
};

// Deterministic ordered fold over scenes. When k is below the available mode
// count the top-k modes by score are evaluated.
class MetricsAccumulator {
 public:
  MetricsAccumulator(int k, double miss_threshold = 2.0) : k_(k), miss_threshold_(miss_threshold) {}

  void add(const Scene& scene, const ScenePrediction& pred);
  MetricsReport report() const;

 private:
  int k_;
  double miss_threshold_;
  int scenes_ = 0;
  double sum_min_ade_ = 0.0;
  double sum_min_fde_ = 0.0;
  int misses_ = 0;
  int hard_offroad_trajectories_ = 0;
  int total_trajectories_ = 0;
  double sum_offroad_fraction_ = 0.0;
  double sum_de1_ = 0.0, sum_de2_ = 0.0, sum_de3_ = 0.0;
};

MetricsReport compute_metrics(const std::vector<Scene>& scenes,
                              const std::vector<ScenePrediction>& preds, int k,
                              double miss_threshold = 2.0);

}  // namespace destine
