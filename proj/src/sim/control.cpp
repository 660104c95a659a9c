#include "rmbl/control.hpp"

#include <algorithm>
#include <cmath>

namespace rmbl {

sim::Controls pid_control(const PolarWaypoint& wp, double ego_speed, PidState& state,
                          const PidConfig& cfg, double dt) {
  sim::Controls out;

  const double bearing = wp.bearing;
  if (state.first) {
    state.prev_bearing = bearing;
    state.first = false;
  }
  state.i_bearing = std::clamp(state.i_bearing + bearing * dt, -1.0, 1.0);
  const double d_bearing = (bearing - state.prev_bearing) / dt;
  state.prev_bearing = bearing;
  out.steer = std::clamp(
      cfg.kp_steer * bearing + cfg.ki_steer * state.i_bearing + cfg.kd_steer * d_bearing, -1.0,
      1.0);

  if (wp.radius <= cfg.stop_radius) {
    out.throttle = 0.0;
    out.brake = 1.0;
    state.i_speed = 0.0;
    return out;
  }

  const double v_target = std::clamp(wp.radius / cfg.lookahead_time, 0.0, cfg.v_max);
  const double err = v_target - ego_speed;
  state.i_speed = std::clamp(state.i_speed + err * dt, -2.0, 2.0);
  if (err >= 0.0) {
    out.throttle = std::clamp(cfg.kp_speed * err + cfg.ki_speed * state.i_speed, 0.0, 1.0);
    out.brake = 0.0;
  } else {
    out.throttle = 0.0;
    // small deadband so coasting handles mild overspeed
    out.brake = err < -0.3 ? std::clamp(-cfg.brake_gain * err, 0.0, 1.0) : 0.0;
  }
  return out;
}

PolarWaypoint action_mask(const PolarWaypoint& wp, const std::vector<sim::Vec2>& static_points,
                          const ActionMaskConfig& cfg) {
  const sim::Vec2 dir{std::cos(wp.bearing), std::sin(wp.bearing)};
  double free = cfg.max_free;
  for (const auto& p : static_points) {
    const double along = p.dot(dir);
    if (along <= 0.0) continue;
    const double across = std::abs(dir.cross(p));
    if (across <= cfg.corridor_half_width) {
      free = std::min(free, along);
    }
  }
  PolarWaypoint out = wp;
  const double r_in = std::max(wp.radius, 0.0);
  out.radius = std::clamp(std::min(r_in, free - cfg.margin), 0.0, r_in);
  return out;
}

}  // namespace rmbl
