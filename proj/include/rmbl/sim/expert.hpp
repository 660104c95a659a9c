#pragma once

#include "rmbl/control.hpp"
#include "rmbl/sim/world.hpp"

namespace rmbl::sim {

struct ExpertConfig {
  double lookahead_time = 1.25;
  double min_lookahead = 4.0;
  double max_lookahead = 10.0;
  double r_max = 10.0;
  double phi_max = 1.0471975511965976;  // pi/3
  double v_max = 8.0;
  double curve_gain = 2.0;        // slows down with upcoming heading change
  double approach_margin = 5.0;   // stop this far before a blocking entity
  double comfort_brake = 2.5;     // m/s^2 used for the approach speed profile
  double block_horizon = 25.0;
};

// Pure-pursuit demonstrator: tracks a lookahead point on the route, slows
// into curves and toward blocking entities, and emits a zero-radius waypoint
// while the world says the ego should stop.
PolarWaypoint scripted_expert(const World& world, const ExpertConfig& cfg = {});

}  // namespace rmbl::sim
