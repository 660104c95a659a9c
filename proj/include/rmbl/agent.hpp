#pragma once

#include <deque>
#include <string>
#include <vector>

#include "rmbl/cmodel.hpp"
#include "rmbl/config.hpp"
#include "rmbl/mmodel.hpp"
#include "rmbl/vmodel.hpp"

namespace rmbl {

// The acting pipeline: encode the observation, sample the latent, look up the
// dynamics feature from the rolling (z, a) context, run the actor, mask the
// waypoint against static obstacles and convert it to controls. The dynamics
// feature fed to the policy at step t summarizes the pairs up to t-1 (zeros
// on the first step), so choosing a_t never needs a_t.
class AgentStack {
 public:
  AgentStack(const Config& cfg, std::uint64_t init_seed);

  VModel& vmodel() { return v_; }
  MModel& mmodel() { return m_; }
  Actor& actor() { return actor_; }
  const Config& config() const { return cfg_; }

  void load_checkpoint(const std::string& path);
  void save_checkpoint(const std::string& path) const;

  void reset_episode();

  struct ActResult {
    std::vector<double> state;      // z ++ h_prev as fed to the actor
    PolarWaypoint waypoint;         // actor output after squashing
    PolarWaypoint masked;           // after the static-obstacle mask
    double action_unit[2];          // executed action in unit coordinates
    sim::Controls controls;
    double log_prob = 0.0;
  };
  ActResult act(const sim::World& world, const sim::Observation& obs, bool deterministic,
                RngStream& rng);

  // State vector for a terminal observation (no action taken).
  std::vector<double> peek_state(const sim::Observation& obs, RngStream& rng,
                                 bool deterministic);

 private:
  std::vector<double> encode_z(const sim::Observation& obs, bool deterministic, RngStream& rng);
  void push_context(const std::vector<double>& z, double ur, double uphi);

  Config cfg_;
  VModel v_;
  MModel m_;
  Actor actor_;
  std::deque<std::pair<std::vector<double>, std::array<double, 2>>> context_;
  std::vector<double> h_prev_;
  PidState pid_;
};

}  // namespace rmbl
