#include "destine/generator.hpp"

#include <algorithm>
#include <cmath>

#include "destine/rng.hpp"

namespace destine {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kArmLength = 90.0;     // straight approach/exit length from the junction corner
constexpr double kLeftTurnRadius = 8.0;
constexpr double kRightTurnRadius = 4.0;
constexpr double kMaxLongAccel = 2.5;   // m/s^2 used by the velocity planner
constexpr double kMaxLatAccel = 2.5;    // bounds curve speed via v^2/r
constexpr double kEntrySpacing = 15.0;  // minimum gap between agents sharing an entry

// Arclength-parameterized path.
struct Route {
  std::vector<Vec2> pts;
  std::vector<double> cum_s;
  std::vector<double> curvature;  // per point, absolute

  double length() const { return cum_s.empty() ? 0.0 : cum_s.back(); }

  void finalize() {
    cum_s.assign(pts.size(), 0.0);
    for (size_t i = 1; i < pts.size(); ++i) cum_s[i] = cum_s[i - 1] + dist(pts[i - 1], pts[i]);
    if (curvature.size() != pts.size()) curvature.assign(pts.size(), 0.0);
  }

  size_t segment_at(double s) const {
    size_t lo = 0, hi = cum_s.size() - 1;
    while (lo + 1 < hi) {
      const size_t mid = (lo + hi) / 2;
      if (cum_s[mid] <= s) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return lo;
  }

  Vec2 at(double s) const {
    s = std::clamp(s, 0.0, length());
    const size_t i = segment_at(s);
    const double seg = cum_s[i + 1] - cum_s[i];
    const double t = seg > 0.0 ? (s - cum_s[i]) / seg : 0.0;
    return pts[i] + (pts[i + 1] - pts[i]) * t;
  }

  Vec2 tangent(double s) const {
    s = std::clamp(s, 0.0, length());
    const size_t i = segment_at(s);
    return (pts[i + 1] - pts[i]).normalized();
  }

  double curvature_at(double s) const {
    s = std::clamp(s, 0.0, length());
    const size_t i = segment_at(s);
    return std::max(curvature[i], curvature[i + 1]);
  }
};

void append_line(Route& r, const Vec2& a, const Vec2& b, double step = 2.0) {
  const double len = dist(a, b);
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  const int start = r.pts.empty() ? 0 : 1;
  for (int i = start; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    r.pts.push_back(a + (b - a) * t);
    r.curvature.push_back(0.0);
  }
}

// Quarter-circle fillet connecting two perpendicular centerlines meeting at
// `corner`. `in_dir` points along the approach, `out_dir` along the exit.
void append_arc(Route& r, const Vec2& corner, const Vec2& in_dir, const Vec2& out_dir, double radius) {
  const Vec2 p1 = corner - in_dir * radius;
  const Vec2 p2 = corner + out_dir * radius;
  const bool left_turn = in_dir.cross(out_dir) > 0.0;
  const Vec2 n = left_turn ? in_dir.left_normal() : in_dir.left_normal() * -1.0;
  const Vec2 center = p1 + n * radius;
  const double a1 = std::atan2(p1.y - center.y, p1.x - center.x);
  double a2 = std::atan2(p2.y - center.y, p2.x - center.x);
  if (left_turn && a2 < a1) a2 += 2.0 * kPi;
  if (!left_turn && a2 > a1) a2 -= 2.0 * kPi;
  const int steps = 18;
  for (int i = 1; i <= steps; ++i) {
    const double a = a1 + (a2 - a1) * static_cast<double>(i) / steps;
    r.pts.push_back(center + Vec2{std::cos(a), std::sin(a)} * radius);
    r.curvature.push_back(1.0 / radius);
  }
}

struct Entry {
  Vec2 start;      // start of the approach centerline
  Vec2 dir;        // unit direction of travel on the approach
  Vec2 corner;     // junction corner on this centerline (approach end for turns)
  bool has_junction = false;
  std::optional<Vec2> left_exit_dir;
  std::optional<Vec2> right_exit_dir;
  double usable_window = 0.0;  // length of the s-range eligible for placement at t_min
  double keep_length = 2.0 * kArmLength;  // straight-through route length from `start`
};

struct RoadNet {
  std::vector<LanePolyline> lanes;
  std::vector<std::vector<Vec2>> drivable;
  std::vector<Entry> entries;
};

std::vector<Vec2> corridor_polygon(const std::vector<Vec2>& centerline, double width) {
  const double half = width / 2.0;
  std::vector<Vec2> left, right;
  const size_t n = centerline.size();
  for (size_t i = 0; i < n; ++i) {
    Vec2 d;
    if (i == 0) {
      d = (centerline[1] - centerline[0]).normalized();
    } else if (i + 1 == n) {
      d = (centerline[n - 1] - centerline[n - 2]).normalized();
    } else {
      d = ((centerline[i + 1] - centerline[i]).normalized() +
           (centerline[i] - centerline[i - 1]).normalized())
              .normalized();
    }
    const Vec2 nrm = d.left_normal();
    left.push_back(centerline[i] + nrm * half);
    right.push_back(centerline[i] - nrm * half);
  }
  std::vector<Vec2> poly = left;
  poly.insert(poly.end(), right.rbegin(), right.rend());
  if (polygon_signed_area(poly) < 0.0) std::reverse(poly.begin(), poly.end());
  return poly;
}

std::vector<Vec2> sample_line(const Vec2& a, const Vec2& b, double step = 2.0) {
  std::vector<Vec2> pts;
  const double len = dist(a, b);
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n; ++i) pts.push_back(a + (b - a) * (static_cast<double>(i) / n));
  return pts;
}

std::vector<Vec2> box_polygon(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

RoadNet build_road_net(Layout layout, double width) {
  RoadNet net;
  const double half = width / 2.0;
  switch (layout) {
    case Layout::kStraight: {
      for (int li = 0; li < 2; ++li) {
        const double y = half + li * width;  // lanes at +w/2 and +3w/2, direction +x
        LanePolyline lane;
        lane.width = width;
        lane.centerline = sample_line({-kArmLength, y}, {kArmLength, y});
        net.drivable.push_back(corridor_polygon(lane.centerline, width));
        net.lanes.push_back(std::move(lane));
        Entry e;
        e.start = {-kArmLength, y};
        e.dir = {1.0, 0.0};
        e.usable_window = 2.0 * kArmLength;
        net.entries.push_back(e);
      }
      break;
    }
    case Layout::kCurve: {
      const double radius0 = 60.0;
      for (int li = 0; li < 2; ++li) {
        const double radius = radius0 + half + li * width;
        LanePolyline lane;
        lane.width = width;
        const Vec2 center{0.0, radius0 + 2.0 * width};
        // 120-degree arc through the bottom of the circle, driven left to right.
        const int steps = 60;
        for (int i = 0; i <= steps; ++i) {
          const double a = -kPi / 2.0 - kPi / 3.0 + (2.0 * kPi / 3.0) * i / steps;
          lane.centerline.push_back(center + Vec2{std::cos(a), std::sin(a)} * radius);
        }
        net.drivable.push_back(corridor_polygon(lane.centerline, width));
        net.lanes.push_back(std::move(lane));
        Entry e;
        e.start = net.lanes.back().centerline.front();
        e.dir = (net.lanes.back().centerline[1] - net.lanes.back().centerline[0]).normalized();
        e.usable_window = 2.0 * kPi / 3.0 * radius;
        net.entries.push_back(e);
      }
      break;
    }
    case Layout::kTee:
    case Layout::kCross: {
      const bool cross = layout == Layout::kCross;
      // Main road: eastbound at y = -w/2, westbound at y = +w/2.
      LanePolyline east;
      east.width = width;
      east.centerline = sample_line({-kArmLength, -half}, {kArmLength, -half});
      LanePolyline west;
      west.width = width;
      west.centerline = sample_line({kArmLength, half}, {-kArmLength, half});
      // North stem: northbound at x = +w/2, southbound at x = -w/2.
      LanePolyline north;
      north.width = width;
      north.centerline = sample_line({half, width}, {half, kArmLength + width});
      LanePolyline south;
      south.width = width;
      south.centerline = sample_line({-half, kArmLength + width}, {-half, width});
      net.drivable.push_back(corridor_polygon(east.centerline, width));
      net.drivable.push_back(corridor_polygon(west.centerline, width));
      net.drivable.push_back(corridor_polygon(north.centerline, width));
      net.drivable.push_back(corridor_polygon(south.centerline, width));
      net.lanes.push_back(east);
      net.lanes.push_back(west);
      net.lanes.push_back(north);
      net.lanes.push_back(south);
      if (cross) {
        LanePolyline south_exit;  // south arm, for right turns off the eastbound lane
        south_exit.width = width;
        south_exit.centerline = sample_line({-half, -width}, {-half, -kArmLength - width});
        LanePolyline south_entry;
        south_entry.width = width;
        south_entry.centerline = sample_line({half, -kArmLength - width}, {half, -width});
        net.drivable.push_back(corridor_polygon(south_exit.centerline, width));
        net.drivable.push_back(corridor_polygon(south_entry.centerline, width));
        net.lanes.push_back(south_exit);
        net.lanes.push_back(south_entry);
      }
      // Junction box covering the fillet arcs.
      const double box = kLeftTurnRadius + width + 1.0;
      net.drivable.push_back(cross ? box_polygon(-box, -box, box, box)
                                   : box_polygon(-box, -width - half - 1.0, box, box));

      // Eastbound entry: corner at x = +w/2 for the left turn to north.
      {
        Entry e;
        e.start = {-kArmLength, -half};
        e.dir = {1.0, 0.0};
        e.corner = {half, -half};
        e.has_junction = true;
        e.left_exit_dir = Vec2{0.0, 1.0};
        if (cross) e.right_exit_dir = Vec2{0.0, -1.0};
        e.usable_window = kArmLength - kLeftTurnRadius - 4.0;
        net.entries.push_back(e);
      }
      // Westbound entry: right turn to north, left to south on a cross.
      {
        Entry e;
        e.start = {kArmLength, half};
        e.dir = {-1.0, 0.0};
        e.corner = {-half, half};
        e.has_junction = true;
        e.right_exit_dir = Vec2{0.0, 1.0};
        if (cross) e.left_exit_dir = Vec2{0.0, -1.0};
        e.usable_window = kArmLength - kLeftTurnRadius - 4.0;
        net.entries.push_back(e);
      }
      // Southbound entry (coming down the stem): no straight-through on a tee.
      {
        Entry e;
        e.start = {-half, kArmLength + width};
        e.dir = {0.0, -1.0};
        e.corner = {-half, half};
        e.has_junction = true;
        e.left_exit_dir = Vec2{1.0, 0.0};   // toward east
        e.right_exit_dir = Vec2{-1.0, 0.0};  // toward west
        e.usable_window = kArmLength - kLeftTurnRadius - 4.0;
        e.keep_length = 2.0 * (kArmLength + width);
        net.entries.push_back(e);
      }
      if (cross) {
        Entry e;
        e.start = {half, -kArmLength - width};
        e.dir = {0.0, 1.0};
        e.corner = {half, -half};
        e.has_junction = true;
        e.left_exit_dir = Vec2{-1.0, 0.0};
        e.right_exit_dir = Vec2{1.0, 0.0};
        e.usable_window = kArmLength - kLeftTurnRadius - 4.0;
        e.keep_length = 2.0 * (kArmLength + width);
        net.entries.push_back(e);
      }
      break;
    }
  }
  return net;
}

// Straight-through route along an entry's own arm.
Route make_keep_route(const Entry& e, Layout layout, const RoadNet& net, size_t entry_idx) {
  Route r;
  if (layout == Layout::kCurve) {
    r.pts = net.lanes[entry_idx].centerline;
    r.curvature.assign(r.pts.size(), 1.0 / 60.0);
    r.finalize();
    return r;
  }
  append_line(r, e.start, e.start + e.dir * e.keep_length);
  r.finalize();
  return r;
}

Route make_turn_route(const Entry& e, bool left) {
  const Vec2 out_dir = left ? *e.left_exit_dir : *e.right_exit_dir;
  const double radius = left ? kLeftTurnRadius : kRightTurnRadius;
  Route r;
  append_line(r, e.start, e.corner - e.dir * radius);
  append_arc(r, e.corner, e.dir, out_dir, radius);
  const Vec2 exit_start = e.corner + out_dir * radius;
  append_line(r, exit_start, exit_start + out_dir * kArmLength);
  r.finalize();
  return r;
}

// Velocity planning: braking-aware speed envelope over the route, then a
// forward simulation at dt resolution.
struct SpeedEnvelope {
  double ds = 1.0;
  std::vector<double> v;  // limit at grid point i

  double limit_at(double s) const {
    const double idx = s / ds;
    const size_t i = std::min(v.size() - 1, static_cast<size_t>(std::max(0.0, idx)));
    return v[i];
  }
};

SpeedEnvelope build_envelope(const Route& route, double stop_s) {
  SpeedEnvelope env;
  const int n = static_cast<int>(std::ceil(route.length() / env.ds)) + 1;
  env.v.assign(static_cast<size_t>(n), kMaxAgentSpeed * 0.5);
  for (int i = 0; i < n; ++i) {
    const double s = i * env.ds;
    const double curv = route.curvature_at(s);
    double vmax = curv > 1e-9 ? std::sqrt(kMaxLatAccel / curv) : kMaxAgentSpeed * 0.5;
    if (stop_s >= 0.0 && s >= stop_s) vmax = 0.0;
    env.v[static_cast<size_t>(i)] = vmax;
  }
  // Backward pass: never approach a slow section faster than braking allows.
  for (int i = n - 2; i >= 0; --i) {
    const double allowed =
        std::sqrt(env.v[static_cast<size_t>(i + 1)] * env.v[static_cast<size_t>(i + 1)] +
                  2.0 * kMaxLongAccel * env.ds);
    env.v[static_cast<size_t>(i)] = std::min(env.v[static_cast<size_t>(i)], allowed);
  }
  return env;
}

struct AgentPlan {
  Route route;
  SpeedEnvelope envelope;
  double s_start = 0.0;    // position at the first observed step
  double v0 = 8.0;         // desired speed at t = 0 (the last observed step)
  double anchor_t = 1.9;   // sim time of t = 0
  double free_accel = 0.0;
  double wiggle_amp = 0.0;
  double wiggle_wavelength = 40.0;  // meters; arclength-based so parked agents stay put
  double wiggle_phase = 0.0;
};

std::vector<Vec2> simulate_track(const AgentPlan& plan, int total_steps, double dt) {
  std::vector<Vec2> out;
  out.reserve(static_cast<size_t>(total_steps));
  double s = plan.s_start;
  double v = std::min(std::max(0.0, plan.v0 - plan.free_accel * plan.anchor_t),
                      plan.envelope.limit_at(s));
  for (int i = 0; i < total_steps; ++i) {
    const double t = i * dt;
    const Vec2 base = plan.route.at(s);
    const Vec2 nrm = plan.route.tangent(s).left_normal();
    const double off =
        plan.wiggle_amp * std::sin(2.0 * kPi * s / plan.wiggle_wavelength + plan.wiggle_phase);
    out.push_back(base + nrm * off);
    // Advance one step.
    const double v_des = std::max(0.0, plan.v0 + plan.free_accel * (t + dt - plan.anchor_t));
    double v_new = std::min(v_des, plan.envelope.limit_at(s + v * dt));
    v_new = std::clamp(v_new, v - kMaxLongAccel * dt, v + kMaxLongAccel * dt);
    v_new = std::max(0.0, v_new);
    s += 0.5 * (v + v_new) * dt;
    v = v_new;
  }
  return out;
}

double track_heading(const std::vector<Vec2>& pts) {
  for (size_t i = 1; i < pts.size(); ++i) {
    const Vec2 d = pts[i] - pts[i - 1];
    if (d.norm() > 1e-9) return std::atan2(d.y, d.x);
  }
  return 0.0;
}

}  // namespace

Layout layout_from_string(const std::string& s) {
  if (s == "straight") return Layout::kStraight;
  if (s == "curve") return Layout::kCurve;
  if (s == "t" || s == "tee") return Layout::kTee;
  if (s == "cross" || s == "4way") return Layout::kCross;
  throw ConfigError("unknown layout '" + s + "' (expected straight|curve|t|cross)");
}

std::string layout_to_string(Layout layout) {
  switch (layout) {
    case Layout::kStraight: return "straight";
    case Layout::kCurve: return "curve";
    case Layout::kTee: return "t";
    case Layout::kCross: return "cross";
  }
  return "straight";
}

Intent intent_from_string(const std::string& s) {
  if (s == "keep" || s == "keep-lane") return Intent::kKeepLane;
  if (s == "left" || s == "turn-left") return Intent::kTurnLeft;
  if (s == "right" || s == "turn-right") return Intent::kTurnRight;
  if (s == "stop") return Intent::kStop;
  throw ConfigError("unknown intent '" + s + "'");
}

Scene generate_scene(uint64_t seed, const GeneratorSpec& spec) {
  if (spec.num_agents < 1 || spec.num_agents > 16) {
    throw GenerationError("num_agents must be in [1, 16], got " + std::to_string(spec.num_agents));
  }
  if (!spec.intents.empty() && static_cast<int>(spec.intents.size()) != spec.num_agents) {
    throw GenerationError("intents must be empty or match num_agents");
  }
  Rng rng(seed);
  RoadNet net = build_road_net(spec.layout, spec.lane_width);

  Scene scene;
  scene.lanes = net.lanes;
  scene.drivable = net.drivable;

  const int total_steps = scene.t_obs_steps + scene.t_pred_steps;
  const bool has_junction = spec.layout == Layout::kTee || spec.layout == Layout::kCross;

  // Entry capacity bookkeeping: agents sharing an entry are spaced along it.
  std::vector<int> entry_count(net.entries.size(), 0);
  const int per_entry_capacity = 4;
  if (spec.num_agents > per_entry_capacity * static_cast<int>(net.entries.size())) {
    throw GenerationError("agents exceed lane capacity for this layout");
  }

  for (int ai = 0; ai < spec.num_agents; ++ai) {
    Intent intent;
    if (!spec.intents.empty()) {
      intent = spec.intents[static_cast<size_t>(ai)];
    } else if (has_junction) {
      const double u = rng.uniform();
      intent = u < 0.45   ? Intent::kKeepLane
               : u < 0.65 ? Intent::kTurnLeft
               : u < 0.85 ? Intent::kTurnRight
                          : Intent::kStop;
    } else {
      intent = rng.uniform() < 0.85 ? Intent::kKeepLane : Intent::kStop;
    }

    // Entries able to serve this intent, with remaining capacity.
    std::vector<size_t> candidates;
    for (size_t ei = 0; ei < net.entries.size(); ++ei) {
      if (entry_count[ei] >= per_entry_capacity) continue;
      const Entry& e = net.entries[ei];
      const bool southbound_stem = e.has_junction && std::fabs(e.dir.y + 1.0) < 1e-9;
      switch (intent) {
        case Intent::kKeepLane:
        case Intent::kStop:
          // The tee's southbound stem has no straight-through continuation.
          if (spec.layout == Layout::kTee && southbound_stem && intent == Intent::kKeepLane) continue;
          candidates.push_back(ei);
          break;
        case Intent::kTurnLeft:
          if (e.left_exit_dir.has_value()) candidates.push_back(ei);
          break;
        case Intent::kTurnRight:
          if (e.right_exit_dir.has_value()) candidates.push_back(ei);
          break;
      }
    }
    if (candidates.empty()) {
      throw GenerationError("intent infeasible for layout '" + layout_to_string(spec.layout) + "'");
    }
    const size_t ei = candidates[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
    const Entry& entry = net.entries[ei];

    AgentPlan plan;
    switch (intent) {
      case Intent::kTurnLeft:
        plan.route = make_turn_route(entry, true);
        break;
      case Intent::kTurnRight:
        plan.route = make_turn_route(entry, false);
        break;
      default:
        plan.route = make_keep_route(entry, spec.layout, net, ei);
        break;
    }

    plan.v0 = spec.speed_mps.has_value() ? *spec.speed_mps : rng.uniform(4.0, 12.0);
    plan.anchor_t = (scene.t_obs_steps - 1) * scene.dt;
    plan.free_accel = intent == Intent::kKeepLane ? rng.uniform(-0.4, 0.4) : 0.0;
    plan.wiggle_amp = rng.uniform(0.0, 0.3);
    plan.wiggle_wavelength = rng.uniform(30.0, 80.0);
    plan.wiggle_phase = rng.uniform(0.0, 2.0 * kPi);

    // Placement at the first observed step. The focal agent of a junction
    // layout sits shortly before the junction at t = 0 so its future stays
    // genuinely multimodal.
    const double obs_span = scene.t_obs_steps * scene.dt * plan.v0;
    double s0;
    if (entry.has_junction) {
      const double corner_s = dist(entry.start, entry.corner);
      const double target_at_t0 =
          ai == 0 ? corner_s - rng.uniform(8.0, 25.0) : corner_s - rng.uniform(8.0, entry.usable_window);
      s0 = std::max(2.0, target_at_t0 - obs_span);
    } else {
      const double travel = plan.v0 * (total_steps * scene.dt) + 10.0;
      const double hi = std::max(4.0, plan.route.length() - travel - 4.0);
      s0 = rng.uniform(2.0, hi);
    }
    // Keep agents on the same entry apart.
    s0 = std::max(2.0, s0 - entry_count[ei] * kEntrySpacing);
    entry_count[ei] += 1;

    double stop_s = -1.0;
    if (intent == Intent::kStop) {
      if (plan.v0 < 0.5) {
        plan.v0 = 0.0;
        stop_s = s0;  // parked agent
      } else {
        const double braking = plan.v0 * plan.v0 / (2.0 * 2.0);
        stop_s = s0 + obs_span + braking + 2.0;
      }
    }
    plan.envelope = build_envelope(plan.route, stop_s);
    plan.s_start = s0;

    std::vector<Vec2> track = simulate_track(plan, total_steps, scene.dt);

    AgentTrack agent;
    agent.agent_id = ai;
    agent.obs.assign(track.begin(), track.begin() + scene.t_obs_steps);
    agent.fut.assign(track.begin() + scene.t_obs_steps, track.end());
    agent.heading_t0 = track_heading(track);
    scene.agents.push_back(std::move(agent));
  }

  scene.focal_agent = 0;
  scene.validate(/*require_futures=*/true);
  for (const AgentTrack& a : scene.agents) {
    for (const Vec2& p : a.fut) {
      if (!point_in_drivable(p, scene)) {
        throw GenerationError("generated future point left the drivable area");
      }
    }
  }
  return scene;
}

}  // namespace destine
