#include "rmbl/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rmbl::rewards {

double speed_reward(double v_lon, double v, bool should_stop, double v_max) {
  if (!should_stop) {
    return std::min(v_lon, v_max);
  }
  return v == 0.0 ? v_max : 0.0;
}

double distance_reward(double prev_d, double new_d, double constant) {
  const double crossed = std::floor(new_d) - std::floor(prev_d);
  return crossed > 0.0 ? constant * crossed : 0.0;
}

double stuck_decay(int stuck_steps, const RewardConfig& cfg) {
  if (cfg.stuck_horizon <= 0) return 1.0;
  const double frac = std::min(1.0, static_cast<double>(stuck_steps) / cfg.stuck_horizon);
  return 1.0 - (1.0 - cfg.decay_min) * frac;
}

double deviation_angle_penalty(double theta_diff, int stuck_steps, const RewardConfig& cfg) {
  const double a = std::abs(theta_diff);
  if (a < std::numbers::pi / 6.0) return 0.0;
  return -a * stuck_decay(stuck_steps, cfg);
}

double deviation_distance_penalty(double d_lat, int stuck_steps, const RewardConfig& cfg) {
  return -d_lat * d_lat * stuck_decay(stuck_steps, cfg);
}

double step_reward(double r_speed, double r_distance, double r_dev_angle, double r_dev_distance,
                   const RewardConfig& cfg) {
  const double moving = r_speed + r_distance;
  const double base = cfg.eq3_literal ? std::max(moving, cfg.v_max) : std::min(moving, cfg.v_max);
  return base + cfg.k1 * r_dev_angle + cfg.k2 * r_dev_distance;
}

RewardBreakdown terminal_reward(const TerminalFlags& flags, double v, double d_lat, double d,
                                double rc_percent) {
  RewardBreakdown out;
  if (flags.collision) {
    out.r_collide = -1.0 - v;
  }
  if (flags.off_lane) {
    out.r_off_lane = -std::clamp(std::abs(d_lat) * 5.0, 20.0, 25.0);
  }
  if (flags.timeout) {
    out.r_timeout = -10.0;
  }
  out.r_complete = d / 100.0 + rc_percent / 4.0;
  out.r_term = out.r_collide + out.r_off_lane + out.r_timeout + out.r_complete;
  return out;
}

}  // namespace rmbl::rewards
