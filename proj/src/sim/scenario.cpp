#include "rmbl/sim/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rmbl/rng.hpp"

namespace rmbl::sim {

using nlohmann::json;

void ScenarioSpec::validate() const {
  if (route_points.size() < 2) {
    throw std::invalid_argument("scenario: route needs at least 2 points");
  }
  Polyline route(route_points);  // throws on degenerate arclength
  if (step_budget <= 0) {
    throw std::invalid_argument("scenario: step budget must be positive");
  }
  if (lane_half_width <= 0.0 || road_half_width < lane_half_width) {
    throw std::invalid_argument("scenario: invalid lane widths");
  }
  for (const auto& poly : obstacles) {
    if (poly.pts.size() < 3) {
      throw std::invalid_argument("scenario: obstacle polygons need at least 3 vertices");
    }
  }
  const Vec2 spawn = route_points.front();
  const double heading = route.tangent_at(0.0);
  const Polygon ego = rect_polygon(spawn, heading, 4.5, 2.0);
  for (const auto& poly : obstacles) {
    if (polygons_intersect(ego, poly)) {
      throw std::invalid_argument("scenario: obstacle overlaps the ego spawn");
    }
  }
  for (const auto& a : agents) {
    if (a.path.size() < 2) {
      throw std::invalid_argument("scenario: agent paths need at least 2 points");
    }
    if (a.speed < 0.0) {
      throw std::invalid_argument("scenario: agent speed must be non-negative");
    }
  }
}

namespace {
json vec2_json(const Vec2& v) { return json::array({v.x, v.y}); }
Vec2 vec2_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json points_json(const std::vector<Vec2>& pts) {
  json arr = json::array();
  for (const auto& p : pts) arr.push_back(vec2_json(p));
  return arr;
}

std::vector<Vec2> points_from(const json& j) {
  std::vector<Vec2> pts;
  for (const auto& e : j) pts.push_back(vec2_from(e));
  return pts;
}
}  // namespace

std::string ScenarioSpec::to_json() const {
  json j;
  j["id"] = id;
  j["route"] = points_json(route_points);
  j["lane_half_width"] = lane_half_width;
  j["road_half_width"] = road_half_width;
  j["obstacles"] = json::array();
  for (const auto& poly : obstacles) j["obstacles"].push_back(points_json(poly.pts));
  j["agents"] = json::array();
  for (const auto& a : agents) {
    json ja;
    ja["kind"] = a.kind;
    ja["path"] = points_json(a.path);
    ja["speed"] = a.speed;
    ja["start_s"] = a.start_s;
    ja["start_time"] = a.start_time;
    ja["trigger_range"] = a.trigger_range;
    ja["loop"] = a.loop;
    ja["length"] = a.length;
    ja["width"] = a.width;
    j["agents"].push_back(ja);
  }
  j["stop_lines"] = json::array();
  for (const auto& s : stop_lines) {
    json js;
    js["a"] = vec2_json(s.a);
    js["b"] = vec2_json(s.b);
    js["kind"] = s.kind;
    js["go_s"] = s.go_s;
    js["stop_s"] = s.stop_s;
    js["offset_s"] = s.offset_s;
    j["stop_lines"].push_back(js);
  }
  j["step_budget"] = step_budget;
  j["seed"] = seed;
  return j.dump(2);
}

ScenarioSpec ScenarioSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario: bad json: ") + e.what());
  }
  ScenarioSpec spec;
  try {
    spec.id = j.at("id").get<std::string>();
    spec.route_points = points_from(j.at("route"));
    spec.lane_half_width = j.value("lane_half_width", 3.5);
    spec.road_half_width = j.value("road_half_width", 7.0);
    for (const auto& jp : j.value("obstacles", json::array())) {
      spec.obstacles.push_back(Polygon{points_from(jp)});
    }
    for (const auto& ja : j.value("agents", json::array())) {
      AgentScript a;
      a.kind = ja.value("kind", "vehicle");
      a.path = points_from(ja.at("path"));
      a.speed = ja.value("speed", 5.0);
      a.start_s = ja.value("start_s", 0.0);
      a.start_time = ja.value("start_time", 0.0);
      a.trigger_range = ja.value("trigger_range", -1.0);
      a.loop = ja.value("loop", false);
      a.length = ja.value("length", a.kind == "pedestrian" ? 0.8 : 4.5);
      a.width = ja.value("width", a.kind == "pedestrian" ? 0.8 : 2.0);
      spec.agents.push_back(std::move(a));
    }
    for (const auto& js : j.value("stop_lines", json::array())) {
      StopLine s;
      s.a = vec2_from(js.at("a"));
      s.b = vec2_from(js.at("b"));
      s.kind = js.value("kind", "signal");
      s.go_s = js.value("go_s", 5.0);
      s.stop_s = js.value("stop_s", 5.0);
      s.offset_s = js.value("offset_s", 0.0);
      spec.stop_lines.push_back(s);
    }
    spec.step_budget = j.value("step_budget", 600);
    spec.seed = j.value("seed", static_cast<std::uint64_t>(0));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scenario: missing or invalid field: ") + e.what());
  }
  spec.validate();
  return spec;
}

ScenarioSpec ScenarioSpec::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("scenario: cannot open '" + path + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void ScenarioSpec::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::invalid_argument("scenario: cannot write '" + path + "'");
  }
  out << to_json() << "\n";
}

namespace {

void append_straight(std::vector<Vec2>& pts, Vec2& pos, double& heading, double length,
                     double step = 4.0) {
  const int n = std::max(1, static_cast<int>(std::ceil(length / step)));
  const Vec2 dir = Vec2{1.0, 0.0}.rotated(heading);
  for (int i = 1; i <= n; ++i) {
    pts.push_back(pos + dir * (length * i / n));
  }
  pos = pts.back();
}

void append_arc(std::vector<Vec2>& pts, Vec2& pos, double& heading, double radius, double angle,
                double step = 2.0) {
  const double arc_len = std::abs(angle) * radius;
  const int n = std::max(2, static_cast<int>(std::ceil(arc_len / step)));
  const double side = angle >= 0.0 ? 1.0 : -1.0;
  const Vec2 center = pos + Vec2{0.0, side * radius}.rotated(heading);
  const double start = std::atan2(pos.y - center.y, pos.x - center.x);
  for (int i = 1; i <= n; ++i) {
    const double a = start + angle * i / n;
    pts.push_back(center + Vec2{std::cos(a), std::sin(a)} * radius);
  }
  pos = pts.back();
  heading = wrap_angle(heading + angle);
}

// Offsets a route laterally (left positive) and optionally reverses it; used
// to lay oncoming-lane agent paths.
std::vector<Vec2> offset_path(const std::vector<Vec2>& route, double lateral, bool reverse) {
  Polyline line(route);
  std::vector<Vec2> out;
  const double step = 4.0;
  for (double s = 0.0; s <= line.total() + 1e-9; s += step) {
    const double heading = line.tangent_at(std::min(s, line.total()));
    out.push_back(line.point_at(std::min(s, line.total())) +
                  Vec2{0.0, lateral}.rotated(heading));
  }
  if (reverse) std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace

ScenarioSpec make_scenario(const std::string& name, std::uint64_t seed) {
  RngStream rng = RngStream::from_name("scenario." + name, seed);
  ScenarioSpec spec;
  spec.id = name + "-" + std::to_string(seed);
  spec.seed = seed;
  Vec2 pos{0.0, 0.0};
  double heading = 0.0;
  std::vector<Vec2>& pts = spec.route_points;
  pts.push_back(pos);

  if (name == "straight") {
    append_straight(pts, pos, heading, 100.0 + rng.uniform() * 40.0);
    spec.step_budget = 500;
  } else if (name == "curve") {
    append_straight(pts, pos, heading, 25.0 + rng.uniform() * 15.0);
    const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
    append_arc(pts, pos, heading, 35.0 + rng.uniform() * 25.0,
               side * (0.7 + rng.uniform() * 0.7));
    append_straight(pts, pos, heading, 25.0 + rng.uniform() * 15.0);
    spec.step_budget = 500;
  } else if (name == "junction_turn") {
    const double approach = 40.0 + rng.uniform() * 15.0;
    append_straight(pts, pos, heading, approach);
    // stop line across the lane, 2 m before the junction arc
    Polyline so_far(pts);
    const double s_line = so_far.total() - 2.0;
    const Vec2 lp = so_far.point_at(s_line);
    const double lh = so_far.tangent_at(s_line);
    const Vec2 left = Vec2{0.0, 1.0}.rotated(lh);
    StopLine line;
    line.a = lp + left * 4.0;
    line.b = lp - left * 4.0;
    line.go_s = 6.0;
    line.stop_s = 4.0;
    line.offset_s = rng.uniform() * 10.0;
    spec.stop_lines.push_back(line);
    const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
    append_arc(pts, pos, heading, 9.0 + rng.uniform() * 3.0, side * std::numbers::pi / 2.0);
    append_straight(pts, pos, heading, 35.0 + rng.uniform() * 10.0);
    spec.step_budget = 700;
  } else if (name == "obstacle_two_ways") {
    const double length = 150.0 + rng.uniform() * 50.0;
    append_straight(pts, pos, heading, length);
    const double s_obs = 28.0 + rng.uniform() * 10.0;
    Polyline route(pts);
    // Parked across the right half of the lane; the left band stays wide
    // enough to borrow.
    const double obs_heading = route.tangent_at(s_obs);
    const Vec2 oc =
        route.point_at(s_obs) + Vec2{0.0, -0.9 - rng.uniform() * 0.3}.rotated(obs_heading);
    spec.obstacles.push_back(rect_polygon(oc, obs_heading, 5.0, 2.4));
    // Oncoming car on the left half of the road, passing the blockage before
    // the ego arrives.
    AgentScript car;
    car.kind = "vehicle";
    car.path = offset_path(pts, 2.3, true);
    car.speed = 5.5 + rng.uniform() * 1.5;
    car.start_s = std::max(0.0, length - s_obs - 55.0 - rng.uniform() * 20.0);
    spec.agents.push_back(std::move(car));
    spec.step_budget = 700;
  } else if (name == "merge") {
    // Entry leg angles onto the main straight.
    pts.clear();
    pos = {0.0, -10.0};
    heading = std::atan2(10.0, 35.0);
    pts.push_back(pos);
    append_straight(pts, pos, heading, std::hypot(35.0, 10.0));
    heading = 0.0;
    append_straight(pts, pos, heading, 90.0 + rng.uniform() * 20.0);
    // Main-lane flow arriving from behind the merge point.
    const double gap = 18.0 + rng.uniform() * 10.0;
    for (int i = 0; i < 3; ++i) {
      AgentScript car;
      car.kind = "vehicle";
      car.path = {{-150.0, 0.0}, {260.0, 0.0}};
      car.speed = 4.5 + rng.uniform() * 1.0;
      car.start_s = 60.0 - gap * i;
      spec.agents.push_back(std::move(car));
    }
    spec.step_budget = 700;
  } else if (name == "crossing") {
    const double length = 110.0 + rng.uniform() * 30.0;
    append_straight(pts, pos, heading, length);
    const double s_c = 45.0 + rng.uniform() * 20.0;
    Polyline route(pts);
    const Vec2 cp = route.point_at(s_c);
    AgentScript ped;
    ped.kind = "pedestrian";
    ped.path = {cp + Vec2{0.0, -8.0}, cp + Vec2{0.0, 8.0}};
    ped.speed = 1.8 + rng.uniform() * 0.6;
    ped.trigger_range = 24.0 + rng.uniform() * 6.0;
    ped.length = 0.8;
    ped.width = 0.8;
    spec.agents.push_back(std::move(ped));
    spec.step_budget = 600;
  } else {
    throw std::invalid_argument("unknown scenario template '" + name + "'");
  }

  spec.validate();
  return spec;
}

const std::vector<std::string>& scenario_template_names() {
  static const std::vector<std::string> names = {
      "straight", "curve", "junction_turn", "obstacle_two_ways", "merge", "crossing"};
  return names;
}

}  // namespace rmbl::sim
