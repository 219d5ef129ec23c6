#pragma once

#include <cmath>
#include <vector>

#include "destine/common.hpp"

namespace destine {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  Vec2 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec2{x / n, y / n} : Vec2{0.0, 0.0};
  }
  Vec2 rotated(double angle) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
  }
  // 90-degree counterclockwise rotation.
  Vec2 left_normal() const { return {-y, x}; }
};

inline double dist(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

// Rigid frame anchored at an agent's position and heading at t = 0.
struct AgentFrame {
  Vec2 origin;
  double rotation = 0.0;  // radians; frame +x axis in global coordinates

  Vec2 to_frame(const Vec2& global) const { return (global - origin).rotated(-rotation); }
  Vec2 to_global(const Vec2& local) const { return origin + local.rotated(rotation); }
  double heading_to_frame(double global_heading) const { return global_heading - rotation; }
};

// Even-odd ray casting; points on the boundary count as inside.
bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly);

bool point_on_segment(const Vec2& p, const Vec2& a, const Vec2& b, double tol = 1e-12);

double polygon_signed_area(const std::vector<Vec2>& poly);

// No two non-adjacent edges intersect and no zero-length edges.
bool polygon_is_simple(const std::vector<Vec2>& poly);

}  // namespace destine
