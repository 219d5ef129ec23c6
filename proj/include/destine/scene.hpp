#pragma once

#include <string>
#include <vector>

#include "destine/geometry.hpp"

namespace destine {

constexpr double kMaxAgentSpeed = 30.0;  // m/s, generator bound used in validation

struct AgentTrack {
  int agent_id = 0;
  double heading_t0 = 0.0;  // radians, global frame
  std::vector<Vec2> obs;    // exactly t_obs_steps points, last one is t = 0
  std::vector<Vec2> fut;    // exactly t_pred_steps points, or empty for test scenes
};

struct LanePolyline {
  double width = 3.5;
  std::vector<Vec2> centerline;
};

struct Scene {
  double dt = 0.1;
  int t_obs_steps = 20;
  int t_pred_steps = 30;
  int focal_agent = 0;
  std::vector<AgentTrack> agents;
  std::vector<LanePolyline> lanes;
  std::vector<std::vector<Vec2>> drivable;

  int num_agents() const { return static_cast<int>(agents.size()); }
  double horizon_seconds() const { return t_pred_steps * dt; }

  // Throws ConfigError with a field diagnostic on any violated invariant.
  void validate(bool require_futures = true) const;
};

// Transforms every agent, lane and polygon into `agent`'s frame (position at
// t = 0 at the origin, heading at t = 0 along +x).
Scene to_agent_frame(const Scene& scene, int agent, AgentFrame* frame_out = nullptr);

std::vector<Vec2> from_agent_frame(const std::vector<Vec2>& local_points, const AgentFrame& frame);

// True iff p lies inside or on the boundary of any drivable polygon.
bool point_in_drivable(const Vec2& p, const Scene& scene);

// JSON file I/O. Serialization is lossless for fp64 coordinates.
void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);

// Sorted scene files (*.json) of a directory.
std::vector<Scene> load_scene_dir(const std::string& dir, bool require_futures = true);

}  // namespace destine
