#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmbl/sim/geometry.hpp"

namespace rmbl::sim {

// Timed stop line across the lane. kind "signal" alternates go/stop phases;
// kind "stop" demands one full stop before crossing, with no timing.
struct StopLine {
  Vec2 a, b;
  std::string kind = "signal";
  double go_s = 5.0;
  double stop_s = 5.0;
  double offset_s = 0.0;

  bool stop_phase_at(double t) const {
    if (kind == "stop") return true;
    const double cycle = go_s + stop_s;
    double u = std::fmod(t + offset_s, cycle);
    if (u < 0.0) u += cycle;
    return u >= go_s;
  }
};

struct AgentScript {
  std::string kind = "vehicle";  // "vehicle" | "pedestrian"
  std::vector<Vec2> path;
  double speed = 5.0;
  double start_s = 0.0;       // initial arclength along the path
  double start_time = 0.0;    // seconds before the agent starts to move
  double trigger_range = -1.0;  // if >= 0, activates when ego is this close to the path start
  bool loop = false;
  double length = 4.5;
  double width = 2.0;
};

struct ScenarioSpec {
  std::string id = "scenario";
  std::vector<Vec2> route_points;
  double lane_half_width = 3.5;
  double road_half_width = 7.0;
  std::vector<Polygon> obstacles;
  std::vector<AgentScript> agents;
  std::vector<StopLine> stop_lines;
  int step_budget = 600;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on malformed content (short route, empty
  // polygons, non-positive budget, obstacle overlapping the ego spawn).
  void validate() const;

  std::string to_json() const;
  static ScenarioSpec from_json(const std::string& text);
  static ScenarioSpec load_file(const std::string& path);
  void save_file(const std::string& path) const;
};

// Built-in scenario templates, deterministic in (name, seed):
//   straight        lane keeping on a straight road
//   curve           gentle single curve
//   junction_turn   signalized junction with a 90 degree turn
//   obstacle_two_ways  blocked ego lane, passable via the oncoming lane
//   merge           merge into a lane with flowing traffic
//   crossing        pedestrian stepping onto the road ahead
ScenarioSpec make_scenario(const std::string& template_name, std::uint64_t seed);
const std::vector<std::string>& scenario_template_names();

}  // namespace rmbl::sim
