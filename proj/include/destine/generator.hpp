#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "destine/scene.hpp"

namespace destine {

enum class Layout { kStraight, kCurve, kTee, kCross };
enum class Intent { kKeepLane, kTurnLeft, kTurnRight, kStop };

Layout layout_from_string(const std::string& s);
std::string layout_to_string(Layout layout);
Intent intent_from_string(const std::string& s);

struct GeneratorSpec {
  int num_agents = 3;
  Layout layout = Layout::kStraight;
  // Either empty (sampled per agent from what the layout supports) or one
  // entry per agent.
  std::vector<Intent> intents;
  // Fixed initial speed for every agent; sampled in [4, 12] m/s when unset.
  std::optional<double> speed_mps;
  double lane_width = 3.5;
};

// Deterministic in (seed, spec). Generated futures always stay inside the
// drivable area and respect the acceleration and curvature bounds.
Scene generate_scene(uint64_t seed, const GeneratorSpec& spec);

}  // namespace destine
