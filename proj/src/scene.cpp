#include "destine/scene.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace destine {

using nlohmann::json;

void Scene::validate(bool require_futures) const {
  if (dt <= 0.0) throw ConfigError("scene: dt must be positive");
  if (t_obs_steps < 1) throw ConfigError("scene: t_obs_steps must be >= 1");
  if (t_pred_steps < 1) throw ConfigError("scene: t_pred_steps must be >= 1");
  if (agents.empty()) throw ConfigError("scene: must contain at least one agent");
  if (focal_agent < 0 || focal_agent >= num_agents()) {
    throw ConfigError("scene: focal_agent " + std::to_string(focal_agent) + " out of range");
  }
  const double max_step = kMaxAgentSpeed * dt;
  for (const AgentTrack& a : agents) {
    if (static_cast<int>(a.obs.size()) != t_obs_steps) {
      throw ConfigError("scene: agent " + std::to_string(a.agent_id) + " has " +
                        std::to_string(a.obs.size()) + " observed points, expected " +
                        std::to_string(t_obs_steps));
    }
    if (require_futures && static_cast<int>(a.fut.size()) != t_pred_steps) {
      throw ConfigError("scene: agent " + std::to_string(a.agent_id) + " has " +
                        std::to_string(a.fut.size()) + " future points, expected " +
                        std::to_string(t_pred_steps));
    }
    if (!require_futures && !a.fut.empty() && static_cast<int>(a.fut.size()) != t_pred_steps) {
      throw ConfigError("scene: agent futures must be empty or full length");
    }
    std::vector<Vec2> all = a.obs;
    all.insert(all.end(), a.fut.begin(), a.fut.end());
    for (size_t i = 1; i < all.size(); ++i) {
      if (dist(all[i - 1], all[i]) > max_step + 1e-9) {
        throw ConfigError("scene: agent " + std::to_string(a.agent_id) +
                          " exceeds the speed bound between steps " + std::to_string(i - 1) +
                          " and " + std::to_string(i));
      }
    }
  }
  for (size_t li = 0; li < lanes.size(); ++li) {
    const LanePolyline& lane = lanes[li];
    if (lane.centerline.size() < 2) {
      throw ConfigError("scene: lane " + std::to_string(li) + " needs >= 2 centerline points");
    }
    if (lane.width <= 0.0) throw ConfigError("scene: lane " + std::to_string(li) + " width must be positive");
    for (size_t i = 1; i < lane.centerline.size(); ++i) {
      if (dist(lane.centerline[i - 1], lane.centerline[i]) < 1e-9) {
        throw ConfigError("scene: lane " + std::to_string(li) + " has duplicate consecutive points");
      }
    }
  }
  for (size_t pi = 0; pi < drivable.size(); ++pi) {
    const auto& poly = drivable[pi];
    if (!polygon_is_simple(poly)) {
      throw ConfigError("scene: drivable polygon " + std::to_string(pi) + " is not simple");
    }
    if (polygon_signed_area(poly) <= 0.0) {
      throw ConfigError("scene: drivable polygon " + std::to_string(pi) +
                        " must be counterclockwise");
    }
  }
}

Scene to_agent_frame(const Scene& scene, int agent, AgentFrame* frame_out) {
  if (agent < 0 || agent >= scene.num_agents()) {
    throw ConfigError("to_agent_frame: agent index out of range");
  }
  const AgentTrack& ref = scene.agents[static_cast<size_t>(agent)];
  AgentFrame frame{ref.obs.back(), ref.heading_t0};
  if (frame_out != nullptr) *frame_out = frame;

  Scene out = scene;
  for (AgentTrack& a : out.agents) {
    for (Vec2& p : a.obs) p = frame.to_frame(p);
    for (Vec2& p : a.fut) p = frame.to_frame(p);
    a.heading_t0 = frame.heading_to_frame(a.heading_t0);
  }
  for (LanePolyline& lane : out.lanes) {
    for (Vec2& p : lane.centerline) p = frame.to_frame(p);
  }
  for (auto& poly : out.drivable) {
    for (Vec2& p : poly) p = frame.to_frame(p);
  }
  return out;
}

std::vector<Vec2> from_agent_frame(const std::vector<Vec2>& local_points, const AgentFrame& frame) {
  std::vector<Vec2> out;
  out.reserve(local_points.size());
  for (const Vec2& p : local_points) out.push_back(frame.to_global(p));
  return out;
}

bool point_in_drivable(const Vec2& p, const Scene& scene) {
  for (const auto& poly : scene.drivable) {
    if (point_in_polygon(p, poly)) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// JSON serialization

namespace {

json points_to_json(const std::vector<Vec2>& pts) {
  json arr = json::array();
  for (const Vec2& p : pts) arr.push_back(json::array({p.x, p.y}));
  return arr;
}

std::vector<Vec2> points_from_json(const json& arr, const std::string& field) {
  if (!arr.is_array()) throw ParseError("scene json: '" + field + "' must be an array of [x,y] pairs");
  std::vector<Vec2> pts;
  pts.reserve(arr.size());
  for (const json& item : arr) {
    if (!item.is_array() || item.size() != 2 || !item[0].is_number() || !item[1].is_number()) {
      throw ParseError("scene json: '" + field + "' entries must be [x,y] number pairs");
    }
    pts.push_back(Vec2{item[0].get<double>(), item[1].get<double>()});
  }
  return pts;
}

const json& require_field(const json& obj, const char* key, const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ParseError("scene json: missing field '" + std::string(key) + "' in " + context);
  }
  return *it;
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
  json j;
  j["dt"] = scene.dt;
  j["t_obs_steps"] = scene.t_obs_steps;
  j["t_pred_steps"] = scene.t_pred_steps;
  j["focal_agent"] = scene.focal_agent;
  j["agents"] = json::array();
  for (const AgentTrack& a : scene.agents) {
    json ja;
    ja["id"] = a.agent_id;
    ja["heading_t0"] = a.heading_t0;
    ja["obs"] = points_to_json(a.obs);
    ja["fut"] = points_to_json(a.fut);
    j["agents"].push_back(std::move(ja));
  }
  j["lanes"] = json::array();
  for (const LanePolyline& lane : scene.lanes) {
    json jl;
    jl["width"] = lane.width;
    jl["centerline"] = points_to_json(lane.centerline);
    j["lanes"].push_back(std::move(jl));
  }
  j["drivable"] = json::array();
  for (const auto& poly : scene.drivable) {
    j["drivable"].push_back(points_to_json(poly));
  }
  return j.dump();
}

Scene scene_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scene json: ") + e.what());
  }
  Scene scene;
  scene.dt = require_field(j, "dt", "scene").get<double>();
  scene.t_obs_steps = require_field(j, "t_obs_steps", "scene").get<int>();
  scene.t_pred_steps = require_field(j, "t_pred_steps", "scene").get<int>();
  scene.focal_agent = require_field(j, "focal_agent", "scene").get<int>();
  for (const json& ja : require_field(j, "agents", "scene")) {
    AgentTrack a;
    a.agent_id = require_field(ja, "id", "agent").get<int>();
    a.heading_t0 = require_field(ja, "heading_t0", "agent").get<double>();
    a.obs = points_from_json(require_field(ja, "obs", "agent"), "obs");
    a.fut = points_from_json(require_field(ja, "fut", "agent"), "fut");
    scene.agents.push_back(std::move(a));
  }
  for (const json& jl : require_field(j, "lanes", "scene")) {
    LanePolyline lane;
    lane.width = require_field(jl, "width", "lane").get<double>();
    lane.centerline = points_from_json(require_field(jl, "centerline", "lane"), "centerline");
    scene.lanes.push_back(std::move(lane));
  }
  for (const json& jp : require_field(j, "drivable", "scene")) {
    scene.drivable.push_back(points_from_json(jp, "drivable"));
  }
  return scene;
}

void save_scene(const Scene& scene, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << scene_to_json(scene) << "\n";
  if (!out) throw IoError("failed writing scene to '" + path + "'");
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Scene scene = scene_from_json(text);
  scene.validate(/*require_futures=*/false);
  return scene;
}

std::vector<Scene> load_scene_dir(const std::string& dir, bool require_futures) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("scene directory '" + dir + "' does not exist");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("scene directory '" + dir + "' contains no .json scenes");
  std::vector<Scene> scenes;
  scenes.reserve(files.size());
  for (const std::string& f : files) {
    Scene s = load_scene(f);
    s.validate(require_futures);
    scenes.push_back(std::move(s));
  }
  return scenes;
}

}  // namespace destine
