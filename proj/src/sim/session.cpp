#include "rmbl/sim/session.hpp"

namespace rmbl::sim {

EnvSession::EnvSession(ScenarioSpec spec, WorldParams world_params,
                       rewards::RewardConfig reward_cfg, std::uint64_t episode_seed)
    : world_(std::move(spec), world_params, episode_seed), reward_cfg_(reward_cfg) {}

Observation EnvSession::reset() {
  prev_d_ = 0.0;
  return world_.reset();
}

EnvSession::StepResult EnvSession::step(const Controls& controls) {
  StepResult out;
  auto [obs, events] = world_.step(controls);
  out.obs = std::move(obs);
  out.events = events;
  out.done = world_.done();
  out.should_stop = world_.should_stop();

  const auto& ego = world_.ego();
  auto& rb = out.reward;
  rb.r_speed = rewards::speed_reward(events.v_lon, ego.v, out.should_stop, reward_cfg_.v_max);
  rb.r_distance = rewards::distance_reward(prev_d_, ego.d, reward_cfg_.distance_constant);
  rb.r_dev_angle =
      rewards::deviation_angle_penalty(events.theta_diff, ego.stuck_steps, reward_cfg_);
  rb.r_dev_distance =
      rewards::deviation_distance_penalty(events.d_lat, ego.stuck_steps, reward_cfg_);
  rb.r_step =
      rewards::step_reward(rb.r_speed, rb.r_distance, rb.r_dev_angle, rb.r_dev_distance,
                           reward_cfg_);
  prev_d_ = ego.d;

  if (out.done) {
    out.completed = !events.terminal() && world_.completed();
    out.truncated = !events.terminal() && !out.completed;
    const rewards::TerminalFlags flags{events.collision, events.off_lane, events.timeout};
    const auto term =
        rewards::terminal_reward(flags, ego.v, events.d_lat, ego.d, events.rc * 100.0);
    rb.r_collide = term.r_collide;
    rb.r_off_lane = term.r_off_lane;
    rb.r_timeout = term.r_timeout;
    rb.r_complete = term.r_complete;
    rb.r_term = term.r_term;
  }
  return out;
}

}  // namespace rmbl::sim
