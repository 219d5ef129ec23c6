#include "destine/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace destine {

std::string MetricsReport::csv_header() {
  return "config,seed,k,scenes,min_ade,min_fde,mr,hor_pct,sor_pct,min_de_1s,min_de_2s,min_de_3s";
}

std::string MetricsReport::csv_row(const std::string& config, int seed) const {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                config.c_str(), seed, k_used, scene_count, min_ade, min_fde, mr, hor_pct, sor_pct,
                min_de_1s, min_de_2s, min_de_3s);
  return std::string(buf);
}

void MetricsAccumulator::add(const Scene& scene, const ScenePrediction& pred) {
  const int available = static_cast<int>(pred.modes.size());
  if (k_ > available) {
    throw ConfigError("metrics: k=" + std::to_string(k_) + " exceeds the " +
                      std::to_string(available) + " available modes");
  }
  if (scene.drivable.empty()) throw ConfigError("metrics: scene has no drivable polygons");
  const AgentTrack& focal = scene.agents[static_cast<size_t>(scene.focal_agent)];
  const std::vector<Vec2>& gt = focal.fut;
  const int t = static_cast<int>(gt.size());
  if (t == 0) throw ConfigError("metrics: focal agent has no ground-truth future");

  // Top-k modes by score.
  std::vector<int> order(static_cast<size_t>(available));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return pred.probs[static_cast<size_t>(a)] > pred.probs[static_cast<size_t>(b)]; });
  order.resize(static_cast<size_t>(k_));

  auto de_at = [&](int mode, int step_idx) {
    return dist(pred.modes[static_cast<size_t>(mode)][static_cast<size_t>(step_idx)],
                gt[static_cast<size_t>(step_idx)]);
  };

  double best_ade = std::numeric_limits<double>::infinity();
  double best_fde = std::numeric_limits<double>::infinity();
  for (int mode : order) {
    if (static_cast<int>(pred.modes[static_cast<size_t>(mode)].size()) != t) {
      throw ConfigError("metrics: prediction length differs from ground truth");
    }
    double ade = 0.0;
    for (int s = 0; s < t; ++s) ade += de_at(mode, s);
    ade /= t;
    best_ade = std::min(best_ade, ade);
    best_fde = std::min(best_fde, de_at(mode, t - 1));
  }

  auto min_de_at_seconds = [&](double ts) {
    const int step = static_cast<int>(std::lround(ts / scene.dt));
    if (step < 1 || step > t) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (int mode : order) best = std::min(best, de_at(mode, step - 1));
    return best;
  };

  sum_min_ade_ += best_ade;
  sum_min_fde_ += best_fde;
  if (best_fde > miss_threshold_) ++misses_;
  sum_de1_ += min_de_at_seconds(1.0);
  sum_de2_ += min_de_at_seconds(2.0);
  sum_de3_ += min_de_at_seconds(3.0);

  int offroad_points = 0;
  for (int mode : order) {
    bool any_off = false;
    for (const Vec2& p : pred.modes[static_cast<size_t>(mode)]) {
      if (!point_in_drivable(p, scene)) {
        any_off = true;
        ++offroad_points;
      }
    }
    if (any_off) ++hard_offroad_trajectories_;
    ++total_trajectories_;
  }
  sum_offroad_fraction_ += static_cast<double>(offroad_points) / (static_cast<double>(k_) * t);
  ++scenes_;
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport r;
  r.k_used = k_;
  r.scene_count = scenes_;
  if (scenes_ == 0) return r;
  r.min_ade = sum_min_ade_ / scenes_;
  r.min_fde = sum_min_fde_ / scenes_;
  r.mr = static_cast<double>(misses_) / scenes_;
  r.hor_pct = 100.0 * static_cast<double>(hard_offroad_trajectories_) /
              static_cast<double>(total_trajectories_);
  r.sor_pct = 100.0 * sum_offroad_fraction_ / scenes_;
  r.min_de_1s = sum_de1_ / scenes_;
  r.min_de_2s = sum_de2_ / scenes_;
  r.min_de_3s = sum_de3_ / scenes_;
  return r;
}

MetricsReport compute_metrics(const std::vector<Scene>& scenes,
                              const std::vector<ScenePrediction>& preds, int k,
                              double miss_threshold) {
  if (scenes.size() != preds.size()) throw DimensionError("metrics: scene/prediction count mismatch");
  MetricsAccumulator acc(k, miss_threshold);
  for (size_t i = 0; i < scenes.size(); ++i) acc.add(scenes[i], preds[i]);
  return acc.report();
}

}  // namespace destine
