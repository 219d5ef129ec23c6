#pragma once

#include <string>

#include "destine/metrics.hpp"
#include "destine/scene.hpp"

namespace destine {

// Deterministic scene plot: drivable area, lanes, the focal agent's
// observation (orange), predicted modes (teal, opacity = mode score) and the
// ground-truth future (red). An empty prediction plots the scene alone.
std::string render_scene_svg(const Scene& scene, const ScenePrediction& pred);
void plot_scene(const Scene& scene, const ScenePrediction& pred, const std::string& path);

}  // namespace destine
