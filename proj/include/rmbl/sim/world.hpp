#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmbl/rng.hpp"
#include "rmbl/sim/geometry.hpp"
#include "rmbl/sim/scenario.hpp"

namespace rmbl::sim {

// BEV channel order shared by render and the models.
enum BevChannel : int {
  kChDrivable = 0,
  kChRoute = 1,
  kChStatic = 2,
  kChDynamic = 3,
  kChEgo = 4,
  kChStopLine = 5,
  kBevChannels = 6,
};

struct GridDims {
  int sensor_channels = 5;  // target channels minus the route corridor
  int bev_channels = kBevChannels;
  int height = 32;
  int width = 32;
  double cell = 1.0;   // meters per cell
  int ego_row = 24;    // ego cell, heading up (row decreases forward)
  int ego_col = 16;
  int route_points = 10;
  double route_spacing = 3.0;

  int sensor_size() const { return sensor_channels * height * width; }
  int bev_size() const { return bev_channels * height * width; }
};

struct Observation {
  std::vector<double> sensor;  // degraded view, {0,1} per cell
  std::vector<double> target;  // clean BEV labels, {0,1} per cell
  std::vector<double> route;   // route_points x (forward, left) in ego frame
  double speed = 0.0;
};

struct Controls {
  double steer = 0.0;     // [-1, 1]
  double throttle = 0.0;  // [0, 1]
  double brake = 0.0;     // [0, 1]
};

struct EgoState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double v = 0.0;
  double d = 0.0;  // odometer, non-decreasing
  int no_progress_steps = 0;
  int stuck_steps = 0;  // consecutive steps with v below the stuck threshold
};

// Flags are independent; several can fire on the same step.
struct StepEvents {
  bool collision = false;
  double collision_rel_speed = 0.0;
  std::string collision_kind;  // "static" | "vehicle" | "pedestrian"
  bool off_lane = false;
  bool timeout = false;
  bool stop_violation = false;
  std::string stop_violation_kind;

  double d_lat = 0.0;
  double theta_diff = 0.0;
  double v_lon = 0.0;
  double rc = 0.0;  // route completion fraction in [0, 1]

  bool terminal() const { return collision || off_lane || timeout; }
};

struct RouteProjection {
  double d_lat = 0.0;
  double theta_diff = 0.0;
  double v_lon = 0.0;
  double d = 0.0;
  double rc = 0.0;  // fraction
};

struct WorldParams {
  GridDims grid;
  double dt = 0.1;
  double wheelbase = 2.8;
  double v_max = 8.0;
  double max_steer = 0.6;   // rad at |steer| = 1
  double max_accel = 3.0;   // m/s^2 at throttle 1
  double max_brake = 6.0;   // m/s^2 at brake 1
  double ego_length = 4.5;
  double ego_width = 2.0;
  int timeout_steps = 200;      // no-progress steps before the timeout terminal
  double progress_eps = 0.1;    // arclength gain that counts as progress
  double stuck_speed = 0.1;     // below this the ego counts as stuck
  double off_lane_limit = 3.5;  // |d_lat| beyond this is off-lane
  double dropout_prob = 0.05;   // per-cell sensor dropout
  bool occlusion = true;
  bool terminal_on_events = true;  // train-style terminals end the episode
  double should_stop_line_dist = 8.0;
  double should_stop_obstacle_dist = 6.0;
};

class World {
 public:
  World(ScenarioSpec spec, WorldParams params, std::uint64_t episode_seed);

  Observation reset();
  // Throws std::logic_error once done(); controls out of range are rejected.
  std::pair<Observation, StepEvents> step(const Controls& controls);

  bool done() const { return done_; }
  bool completed() const { return s_best_ >= route_.total() - 0.5; }
  int step_count() const { return step_count_; }
  double time() const { return step_count_ * params_.dt; }
  const EgoState& ego() const { return ego_; }
  const ScenarioSpec& spec() const { return spec_; }
  const WorldParams& params() const { return params_; }
  const Polyline& route() const { return route_; }

  RouteProjection project_route() const;
  double route_s() const { return s_proj_; }
  // Distance along the route to the nearest stop demand within the horizon
  // (+inf when clear): active stop lines, and entities inside the lane
  // corridor. include_static folds parked obstacles in (used for approach
  // slowdowns); the stop prior itself only honors lines and moving agents,
  // since blocked lanes must be driven around rather than waited out.
  double line_block_distance(double horizon) const;
  double corridor_block_distance(double horizon, bool include_static = true) const;
  bool should_stop() const;
  std::vector<double> render_bev() const;
  // Degrades a rendered target grid: drops the route channel, shadows cells
  // occluded by obstacles/agents and applies per-cell dropout.
  std::vector<double> sense(const std::vector<double>& target, std::uint64_t noise_step) const;

  // Static obstacle outline samples in the ego frame (forward, left); the
  // action mask consumes these.
  std::vector<Vec2> static_points_ego_frame(double max_range) const;

  struct AgentState {
    const AgentScript* script = nullptr;
    bool started = false;
    bool gone = false;
    double s = 0.0;
    Vec2 pos;
    double heading = 0.0;
    Polyline path;
  };
  const std::vector<AgentState>& agents() const { return agents_; }

 private:
  void advance_agents();
  void update_projection();
  Observation observe();
  Vec2 cell_center_world(int row, int col) const;
  Polygon ego_polygon() const;

  ScenarioSpec spec_;
  WorldParams params_;
  Polyline route_;
  EgoState ego_;
  std::vector<AgentState> agents_;
  std::vector<bool> stop_line_satisfied_;
  std::vector<Vec2> prev_front_;  // previous front-bumper point, for crossing checks
  RngStream noise_root_;
  double s_proj_ = 0.0;       // current arclength projection
  double s_best_ = 0.0;       // high-water mark, drives RC
  double s_anchor_ = 0.0;     // last progress milestone
  int step_count_ = 0;
  bool done_ = false;
  bool started_ = false;
};

}  // namespace rmbl::sim
