#pragma once

#include "rmbl/rewards.hpp"
#include "rmbl/sim/world.hpp"

namespace rmbl::sim {

// World plus the reward bookkeeping an episode needs: tracks odometer
// milestones and stuck counters, evaluates the step reward on the post-step
// state and attaches the terminal components when the episode ends.
class EnvSession {
 public:
  EnvSession(ScenarioSpec spec, WorldParams world_params, rewards::RewardConfig reward_cfg,
             std::uint64_t episode_seed);

  struct StepResult {
    Observation obs;
    StepEvents events;
    rewards::RewardBreakdown reward;
    bool done = false;
    bool completed = false;   // reached the end of the route
    bool truncated = false;   // step budget ran out without a terminal
    bool should_stop = false;
  };

  Observation reset();
  StepResult step(const Controls& controls);

  World& world() { return world_; }
  const World& world() const { return world_; }
  const rewards::RewardConfig& reward_config() const { return reward_cfg_; }

 private:
  World world_;
  rewards::RewardConfig reward_cfg_;
  double prev_d_ = 0.0;
};

}  // namespace rmbl::sim
