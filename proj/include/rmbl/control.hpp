#pragma once

#include <numbers>
#include <vector>

#include "rmbl/sim/geometry.hpp"
#include "rmbl/sim/world.hpp"

namespace rmbl {

// Action: a waypoint relative to the ego vehicle, radius in meters and
// bearing in radians, left positive.
struct PolarWaypoint {
  double radius = 0.0;
  double bearing = 0.0;
};

struct ActionBounds {
  double r_max = 10.0;
  double phi_max = std::numbers::pi / 3.0;
};

struct PidConfig {
  double kp_steer = 1.2;
  double ki_steer = 0.02;
  double kd_steer = 0.12;
  double kp_speed = 0.7;
  double ki_speed = 0.05;
  double brake_gain = 0.8;
  double lookahead_time = 1.25;  // waypoint radius / this = target speed
  double v_max = 8.0;
  double stop_radius = 0.05;  // radius below this demands a full stop
};

struct PidState {
  double i_bearing = 0.0;
  double prev_bearing = 0.0;
  double i_speed = 0.0;
  bool first = true;
};

// Converts a waypoint into steer/throttle/brake. Steering is PID on the
// bearing error; speed control tracks radius / lookahead_time. A zero-radius
// waypoint means full brake.
sim::Controls pid_control(const PolarWaypoint& wp, double ego_speed, PidState& state,
                          const PidConfig& cfg, double dt);

struct ActionMaskConfig {
  double margin = 0.5;               // meters kept clear of the nearest point
  double corridor_half_width = 1.0;  // half the ego width
  double max_free = 30.0;            // free-distance cap with no obstacle hit
};

// Clips the waypoint radius to the free distance along its bearing through a
// corridor of ego width over static obstacle points (ego frame). Bearing is
// never altered and radius never grows; as a function of the input radius it
// is a clamp, so it stays piecewise differentiable.
PolarWaypoint action_mask(const PolarWaypoint& wp, const std::vector<sim::Vec2>& static_points,
                          const ActionMaskConfig& cfg);

}  // namespace rmbl
