#pragma once

namespace rmbl::rewards {

struct RewardConfig {
  double v_max = 8.0;
  double k1 = 0.5;  // deviation-angle weight
  double k2 = 0.2;  // deviation-distance weight
  double distance_constant = 1.0;
  int stuck_horizon = 100;    // steps over which the deviation decay ramps down
  double decay_min = 0.2;
  // Step reward as printed: max(r_speed + r_distance, v_max) + ... . When
  // false the max becomes min, which caps instead of flooring the moving term.
  bool eq3_literal = true;
};

struct RewardBreakdown {
  double r_speed = 0.0;
  double r_distance = 0.0;
  double r_dev_angle = 0.0;
  double r_dev_distance = 0.0;
  double r_step = 0.0;

  double r_collide = 0.0;
  double r_off_lane = 0.0;
  double r_timeout = 0.0;
  double r_complete = 0.0;
  double r_term = 0.0;

  double total() const { return r_step + r_term; }
};

// min(v_lon, v_max) while driving; stopping where a stop is required earns
// the max-speed reward, and creeping there earns nothing.
double speed_reward(double v_lon, double v, bool should_stop, double v_max);

// constant * number of whole-meter odometer milestones crossed this step.
double distance_reward(double prev_d, double new_d, double constant);

// Linear decay from 1 to decay_min over stuck_horizon stuck steps.
double stuck_decay(int stuck_steps, const RewardConfig& cfg);

// 0 inside |theta| < pi/6, else -|theta|, scaled by the stuck decay.
double deviation_angle_penalty(double theta_diff, int stuck_steps, const RewardConfig& cfg);

// -d_lat^2 scaled by the stuck decay.
double deviation_distance_penalty(double d_lat, int stuck_steps, const RewardConfig& cfg);

double step_reward(double r_speed, double r_distance, double r_dev_angle, double r_dev_distance,
                   const RewardConfig& cfg);

struct TerminalFlags {
  bool collision = false;
  bool off_lane = false;
  bool timeout = false;
};

// Terminal components: collisions cost 1 + v, leaving the lane costs the
// printed clip (applied as a penalty), timeouts cost 10, and the completion
// reward d/100 + RC/4 (RC in percent) is always granted at episode end.
RewardBreakdown terminal_reward(const TerminalFlags& flags, double v, double d_lat, double d,
                                double rc_percent);

}  // namespace rmbl::rewards
