#include "destine/svg_plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace destine {

namespace {

struct Bounds {
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  void grow(const Vec2& p) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

// SVG y grows downward; flip into map orientation.
std::string path_points(const std::vector<Vec2>& pts, const Bounds& b) {
  std::string out;
  for (size_t i = 0; i < pts.size(); ++i) {
    out += (i == 0 ? "" : " ");
    out += fmt(pts[i].x) + "," + fmt(b.max_y - pts[i].y + b.min_y);
  }
  return out;
}

}  // namespace

std::string render_scene_svg(const Scene& scene, const ScenePrediction& pred) {
  Bounds b;
  for (const auto& poly : scene.drivable) {
    for (const Vec2& p : poly) b.grow(p);
  }
  for (const LanePolyline& lane : scene.lanes) {
    for (const Vec2& p : lane.centerline) b.grow(p);
  }
  for (const AgentTrack& a : scene.agents) {
    for (const Vec2& p : a.obs) b.grow(p);
    for (const Vec2& p : a.fut) b.grow(p);
  }
  for (const auto& mode : pred.modes) {
    for (const Vec2& p : mode) b.grow(p);
  }
  const double margin = 5.0;
  b.min_x -= margin;
  b.min_y -= margin;
  b.max_x += margin;
  b.max_y += margin;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << fmt(b.min_x) << " "
      << fmt(b.min_y) << " " << fmt(b.max_x - b.min_x) << " " << fmt(b.max_y - b.min_y) << "\">\n";
  svg << "<rect x=\"" << fmt(b.min_x) << "\" y=\"" << fmt(b.min_y) << "\" width=\""
      << fmt(b.max_x - b.min_x) << "\" height=\"" << fmt(b.max_y - b.min_y)
      << "\" fill=\"#ffffff\"/>\n";
  for (const auto& poly : scene.drivable) {
    svg << "<polygon points=\"" << path_points(poly, b) << "\" fill=\"#e6e6e6\" stroke=\"none\"/>\n";
  }
  for (const LanePolyline& lane : scene.lanes) {
    svg << "<polyline points=\"" << path_points(lane.centerline, b)
        << "\" fill=\"none\" stroke=\"#bfbfbf\" stroke-width=\"0.3\" stroke-dasharray=\"2,2\"/>\n";
  }
  for (const AgentTrack& agent : scene.agents) {
    const bool focal = agent.agent_id == scene.agents[static_cast<size_t>(scene.focal_agent)].agent_id;
    svg << "<polyline points=\"" << path_points(agent.obs, b)
        << "\" fill=\"none\" stroke=\"#ff8c00\" stroke-width=\"" << (focal ? "0.8" : "0.4")
        << "\"/>\n";
  }
  for (size_t m = 0; m < pred.modes.size(); ++m) {
    svg << "<polyline points=\"" << path_points(pred.modes[m], b)
        << "\" fill=\"none\" stroke=\"#008080\" stroke-width=\"0.6\" stroke-opacity=\""
        << fmt(pred.probs[m]) << "\"/>\n";
  }
  const AgentTrack& focal = scene.agents[static_cast<size_t>(scene.focal_agent)];
  if (!focal.fut.empty()) {
    svg << "<polyline points=\"" << path_points(focal.fut, b)
        << "\" fill=\"none\" stroke=\"#d42020\" stroke-width=\"0.6\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void plot_scene(const Scene& scene, const ScenePrediction& pred, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write svg '" + path + "'");
  out << render_scene_svg(scene, pred);
  if (!out) throw IoError("failed writing svg '" + path + "'");
}

}  // namespace destine
