#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rmbl/config.hpp"
#include "rmbl/sim/scenario.hpp"
#include "rmbl/sim/session.hpp"

namespace rmbl::eval {

struct InfractionCounts {
  int collision_pedestrian = 0;
  int collision_vehicle = 0;
  int collision_static = 0;
  int red_light = 0;
  int stop_sign = 0;
  int off_road = 0;
  int agent_blocked = 0;
  int route_timeout = 0;

  int total() const {
    return collision_pedestrian + collision_vehicle + collision_static + red_light + stop_sign +
           off_road + agent_blocked + route_timeout;
  }
};

struct EpisodeMetrics {
  double rc = 0.0;  // percent
  double ip = 1.0;  // multiplicative penalty in [0, 1]
  double ds = 0.0;  // rc * ip
  InfractionCounts infractions;
  double km = 0.0;  // odometer kilometers, for per-km rates
  int steps = 0;
  double mean_step_reward = 0.0;
  bool completed = false;

  double rate_per_km(int count) const { return km > 0.0 ? count / km : 0.0; }
};

// Multiplies the configured coefficient once per counted event.
double infraction_penalty(const InfractionCounts& counts, const Config::Eval& cfg);
double driving_score(double rc_percent, double ip);

// A policy produces controls from the world and the current observation;
// first=true marks the start of an episode so stateful policies can reset.
using Policy =
    std::function<sim::Controls(const sim::World& world, const sim::Observation& obs, bool first)>;
// Fresh policy instance per episode (episodes may run on different threads).
using PolicyFactory = std::function<Policy()>;

EpisodeMetrics run_episode(const Policy& policy, const sim::ScenarioSpec& spec, const Config& cfg,
                           std::uint64_t seed, const std::string& episode_log_path = "");

struct EpisodeRow {
  std::string scenario;
  std::uint64_t seed = 0;
  EpisodeMetrics metrics;
};

struct SuiteReport {
  std::vector<EpisodeRow> episodes;
  struct ScenarioRow {
    std::string scenario;
    double mean_rc = 0.0, mean_ip = 0.0, mean_ds = 0.0;
    int count = 0;
  };
  std::vector<ScenarioRow> per_scenario;
  double mean_rc = 0.0;
  double mean_ip = 0.0;
  double route_averaged_ds = 0.0;  // mean of per-episode DS
  double ds_of_means = 0.0;        // mean RC x mean IP
};

// Runs templates x seeds; episodes run in parallel up to
// cfg.eval.parallel_episodes, report assembly is single-threaded.
SuiteReport run_suite(const PolicyFactory& make_policy, const std::vector<std::string>& templates,
                      int seeds, const Config& cfg, const std::string& out_dir = "");

void write_report(const SuiteReport& report, const std::string& dir);

// Ready-made policies.
PolicyFactory expert_policy_factory(const Config& cfg);
PolicyFactory checkpoint_policy_factory(const Config& cfg, const std::string& checkpoint,
                                        bool deterministic, std::uint64_t act_seed);

// Autoregressive imagination against a demonstrator-driven episode: seeds the
// window with real latents, rolls the dynamics model forward `horizon` steps
// with the executed actions and compares decoded grids against the simulator.
// Writes imagination_strip.svg, truth_strip.svg and imagination_iou.csv when
// out_dir is non-empty.
struct ImaginationReport {
  std::vector<double> iou;       // per imagined step
  double mean_iou = 0.0;
  double one_step_iou = 0.0;     // first step only
  bool finite = true;            // no NaN anywhere in the rollout
};
ImaginationReport imagination_report(const Config& cfg, const std::string& checkpoint,
                                     const std::string& scenario, std::uint64_t scenario_seed,
                                     int horizon, const std::string& out_dir);

}  // namespace rmbl::eval
