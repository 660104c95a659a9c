#include "rmbl/sim/world.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <stdexcept>

namespace rmbl::sim {

World::World(ScenarioSpec spec, WorldParams params, std::uint64_t episode_seed)
    : spec_(std::move(spec)),
      params_(params),
      route_(spec_.route_points),
      noise_root_(RngStream::from_name("sim.noise", episode_seed).split(spec_.seed)) {
  spec_.validate();
  for (const auto& script : spec_.agents) {
    AgentState st;
    st.script = &script;
    st.path = Polyline(script.path);
    agents_.push_back(std::move(st));
  }
}

Observation World::reset() {
  ego_ = EgoState{};
  ego_.x = route_.points().front().x;
  ego_.y = route_.points().front().y;
  ego_.heading = route_.tangent_at(0.0);
  s_proj_ = s_best_ = s_anchor_ = 0.0;
  step_count_ = 0;
  done_ = false;
  started_ = true;

  stop_line_satisfied_.assign(spec_.stop_lines.size(), false);
  for (auto& a : agents_) {
    a.started = a.script->trigger_range < 0.0 && a.script->start_time <= 0.0;
    a.gone = false;
    a.s = a.script->start_s;
    a.pos = a.path.point_at(a.s);
    a.heading = a.path.tangent_at(a.s);
  }
  const Vec2 dir{std::cos(ego_.heading), std::sin(ego_.heading)};
  prev_front_.assign(1, Vec2{ego_.x, ego_.y} + dir * (params_.ego_length * 0.5));
  return observe();
}

Polygon World::ego_polygon() const {
  return rect_polygon({ego_.x, ego_.y}, ego_.heading, params_.ego_length, params_.ego_width);
}

void World::advance_agents() {
  const double t = time();
  const Vec2 ego_pos{ego_.x, ego_.y};
  for (auto& a : agents_) {
    if (a.gone) continue;
    if (!a.started) {
      const bool time_ok = t >= a.script->start_time;
      const bool trigger_ok =
          a.script->trigger_range < 0.0 ||
          (ego_pos - a.path.point_at(a.script->start_s)).norm() <= a.script->trigger_range;
      if (time_ok && trigger_ok) a.started = true;
    }
    if (a.started) {
      a.s += a.script->speed * params_.dt;
      if (a.s >= a.path.total()) {
        if (a.script->loop) {
          a.s = std::fmod(a.s, a.path.total());
        } else {
          a.gone = true;
          continue;
        }
      }
    }
    a.pos = a.path.point_at(a.s);
    a.heading = a.path.tangent_at(a.s);
  }
}

void World::update_projection() {
  const auto proj = route_.project_near({ego_.x, ego_.y}, s_proj_, 15.0, 25.0);
  s_proj_ = proj.s;
  s_best_ = std::max(s_best_, s_proj_);
  if (s_best_ - s_anchor_ >= params_.progress_eps) {
    s_anchor_ = s_best_;
    ego_.no_progress_steps = 0;
  } else {
    ++ego_.no_progress_steps;
  }
  if (ego_.v < params_.stuck_speed) {
    ++ego_.stuck_steps;
  } else {
    ego_.stuck_steps = 0;
  }
}

RouteProjection World::project_route() const {
  const auto proj = route_.project_near({ego_.x, ego_.y}, s_proj_, 15.0, 25.0);
  RouteProjection out;
  out.d_lat = proj.d_lat;
  out.theta_diff = wrap_angle(ego_.heading - proj.tangent);
  out.v_lon = ego_.v * std::cos(out.theta_diff);
  out.d = ego_.d;
  out.rc = route_.total() > 0.0 ? s_best_ / route_.total() : 0.0;
  return out;
}

double World::line_block_distance(double horizon) const {
  const double t = time();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < spec_.stop_lines.size(); ++i) {
    const auto& line = spec_.stop_lines[i];
    const Vec2 mid = (line.a + line.b) * 0.5;
    const double ahead = route_.project(mid).s - s_proj_;
    if (ahead <= 0.0 || ahead > horizon) continue;
    const bool demanding =
        line.kind == "stop" ? !stop_line_satisfied_[i] : line.stop_phase_at(t);
    if (demanding) best = std::min(best, ahead);
  }
  return best;
}

double World::corridor_block_distance(double horizon, bool include_static) const {
  double best = std::numeric_limits<double>::infinity();
  const auto consider = [&](const Vec2& p) {
    const auto proj = route_.project(p);
    if (std::abs(proj.d_lat) > spec_.lane_half_width) return;
    const double ahead = proj.s - s_proj_;
    if (ahead > 0.0 && ahead <= horizon) best = std::min(best, ahead);
  };
  if (include_static) {
    for (const auto& poly : spec_.obstacles) {
      for (const auto& p : poly.pts) consider(p);
      consider(poly.centroid());
    }
  }
  for (const auto& a : agents_) {
    if (a.gone) continue;
    const Polygon box = rect_polygon(a.pos, a.heading, a.script->length, a.script->width);
    consider(a.pos);
    for (const auto& p : box.pts) consider(p);
  }
  return best;
}

bool World::should_stop() const {
  return line_block_distance(params_.should_stop_line_dist) <= params_.should_stop_line_dist ||
         corridor_block_distance(params_.should_stop_obstacle_dist, false) <=
             params_.should_stop_obstacle_dist;
}

std::pair<Observation, StepEvents> World::step(const Controls& controls) {
  if (!started_) {
    throw std::logic_error("World::step called before reset");
  }
  if (done_) {
    throw std::logic_error("World::step called after the episode ended");
  }
  if (controls.steer < -1.0 || controls.steer > 1.0 || controls.throttle < 0.0 ||
      controls.throttle > 1.0 || controls.brake < 0.0 || controls.brake > 1.0) {
    throw std::invalid_argument("World::step: controls out of range");
  }

  // Kinematic bicycle, explicit Euler on the pre-step speed. Coasting keeps
  // the speed bit-exact.
  const double v0 = ego_.v;
  const Vec2 dir{std::cos(ego_.heading), std::sin(ego_.heading)};
  ego_.x += dir.x * v0 * params_.dt;
  ego_.y += dir.y * v0 * params_.dt;
  ego_.heading = wrap_angle(ego_.heading + v0 / params_.wheelbase *
                                               std::tan(controls.steer * params_.max_steer) *
                                               params_.dt);
  const double accel = controls.throttle * params_.max_accel - controls.brake * params_.max_brake;
  ego_.v = std::clamp(v0 + accel * params_.dt, 0.0, params_.v_max);
  ego_.d += v0 * params_.dt;

  ++step_count_;
  advance_agents();
  update_projection();

  StepEvents ev;
  const auto proj = project_route();
  ev.d_lat = proj.d_lat;
  ev.theta_diff = proj.theta_diff;
  ev.v_lon = proj.v_lon;
  ev.rc = proj.rc;

  const Polygon ego_poly = ego_polygon();
  const Vec2 ego_vel = dir * ego_.v;
  for (const auto& poly : spec_.obstacles) {
    if (polygons_intersect(ego_poly, poly)) {
      ev.collision = true;
      ev.collision_kind = "static";
      ev.collision_rel_speed = ego_.v;
      break;
    }
  }
  if (!ev.collision) {
    for (const auto& a : agents_) {
      if (a.gone) continue;
      const Polygon box = rect_polygon(a.pos, a.heading, a.script->length, a.script->width);
      if (polygons_intersect(ego_poly, box)) {
        ev.collision = true;
        ev.collision_kind = a.script->kind;
        const Vec2 avel =
            a.started ? Vec2{std::cos(a.heading), std::sin(a.heading)} * a.script->speed : Vec2{};
        ev.collision_rel_speed = (ego_vel - avel).norm();
        break;
      }
    }
  }

  ev.off_lane = std::abs(ev.d_lat) > params_.off_lane_limit;
  ev.timeout = ego_.no_progress_steps > params_.timeout_steps;

  // Stop-line bookkeeping: a "stop" line is satisfied by a full stop shortly
  // before it; crossing any line during a stop phase is a violation.
  const Vec2 front = Vec2{ego_.x, ego_.y} + dir * (params_.ego_length * 0.5);
  for (std::size_t i = 0; i < spec_.stop_lines.size(); ++i) {
    const auto& line = spec_.stop_lines[i];
    if (line.kind == "stop" && !stop_line_satisfied_[i]) {
      const double ahead = route_.project((line.a + line.b) * 0.5).s - s_proj_;
      if (ego_.v < 0.05 && ahead > 0.0 && ahead <= params_.should_stop_line_dist) {
        stop_line_satisfied_[i] = true;
      }
    }
    if (segments_intersect(prev_front_[0], front, line.a, line.b)) {
      const bool violating = line.kind == "stop" ? (!stop_line_satisfied_[i] && ego_.v > 0.5)
                                                 : line.stop_phase_at(time());
      if (violating) {
        ev.stop_violation = true;
        ev.stop_violation_kind = line.kind;
      }
    }
  }
  prev_front_[0] = front;

  const bool complete = s_best_ >= route_.total() - 0.5;
  if ((params_.terminal_on_events && ev.terminal()) || complete ||
      step_count_ >= spec_.step_budget) {
    done_ = true;
  }

  return {observe(), ev};
}

Vec2 World::cell_center_world(int row, int col) const {
  const double forward = (params_.grid.ego_row - row) * params_.grid.cell;
  const double left = (params_.grid.ego_col - col) * params_.grid.cell;
  const Vec2 f{std::cos(ego_.heading), std::sin(ego_.heading)};
  const Vec2 l{-std::sin(ego_.heading), std::cos(ego_.heading)};
  return Vec2{ego_.x, ego_.y} + f * forward + l * left;
}

std::vector<double> World::render_bev() const {
  const auto& g = params_.grid;
  std::vector<double> out(static_cast<std::size_t>(g.bev_size()), 0.0);
  const int hw = g.height * g.width;
  const Polygon ego_poly = ego_polygon();
  const double t = time();

  std::vector<Polygon> agent_boxes;
  for (const auto& a : agents_) {
    if (!a.gone) {
      agent_boxes.push_back(rect_polygon(a.pos, a.heading, a.script->length, a.script->width));
    }
  }
  std::vector<const StopLine*> active_lines;
  for (std::size_t i = 0; i < spec_.stop_lines.size(); ++i) {
    const auto& line = spec_.stop_lines[i];
    const bool active =
        line.kind == "stop" ? !stop_line_satisfied_[i] : line.stop_phase_at(t);
    if (active) active_lines.push_back(&line);
  }

  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const Vec2 p = cell_center_world(r, c);
      const int idx = r * g.width + c;
      const auto proj = route_.project(p);
      if (proj.dist <= spec_.road_half_width) out[kChDrivable * hw + idx] = 1.0;
      if (proj.dist <= spec_.lane_half_width) out[kChRoute * hw + idx] = 1.0;
      for (const auto& poly : spec_.obstacles) {
        if (point_in_polygon(p, poly)) {
          out[kChStatic * hw + idx] = 1.0;
          break;
        }
      }
      for (const auto& box : agent_boxes) {
        if (point_in_polygon(p, box)) {
          out[kChDynamic * hw + idx] = 1.0;
          break;
        }
      }
      if (point_in_polygon(p, ego_poly)) out[kChEgo * hw + idx] = 1.0;
      for (const auto* line : active_lines) {
        if (point_segment_distance(p, line->a, line->b) <= 0.6 * g.cell) {
          out[kChStopLine * hw + idx] = 1.0;
          break;
        }
      }
    }
  }
  return out;
}

std::vector<double> World::sense(const std::vector<double>& target,
                                 std::uint64_t noise_step) const {
  const auto& g = params_.grid;
  const int hw = g.height * g.width;
  // Sensor channel order: drivable, static, dynamic, ego, stop line.
  static constexpr int kFrom[5] = {kChDrivable, kChStatic, kChDynamic, kChEgo, kChStopLine};
  std::vector<double> out(static_cast<std::size_t>(g.sensor_size()), 0.0);
  for (int ch = 0; ch < g.sensor_channels; ++ch) {
    std::copy(target.begin() + kFrom[ch] * hw, target.begin() + (kFrom[ch] + 1) * hw,
              out.begin() + ch * hw);
  }

  if (params_.occlusion) {
    // Cells behind an occupied cell along the ray from the ego are shadowed.
    std::vector<char> occupied(static_cast<std::size_t>(hw), 0);
    for (int i = 0; i < hw; ++i) {
      if (target[kChStatic * hw + i] != 0.0 || target[kChDynamic * hw + i] != 0.0) {
        occupied[static_cast<std::size_t>(i)] = 1;
      }
    }
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        if (r == g.ego_row && c == g.ego_col) continue;
        const int dr = r - g.ego_row, dc = c - g.ego_col;
        const int steps = std::max(std::abs(dr), std::abs(dc));
        bool shadowed = false;
        for (int i = 1; i < steps; ++i) {
          const int rr = g.ego_row + static_cast<int>(std::lround(dr * static_cast<double>(i) / steps));
          const int cc = g.ego_col + static_cast<int>(std::lround(dc * static_cast<double>(i) / steps));
          if (occupied[static_cast<std::size_t>(rr * g.width + cc)]) {
            shadowed = true;
            break;
          }
        }
        if (shadowed) {
          for (int ch = 0; ch < g.sensor_channels; ++ch) {
            out[static_cast<std::size_t>(ch * hw + r * g.width + c)] = 0.0;
          }
        }
      }
    }
  }

  if (params_.dropout_prob > 0.0) {
    RngStream noise = noise_root_.split(noise_step);
    for (int i = 0; i < hw; ++i) {
      if (noise.uniform() < params_.dropout_prob) {
        for (int ch = 0; ch < g.sensor_channels; ++ch) {
          out[static_cast<std::size_t>(ch * hw + i)] = 0.0;
        }
      }
    }
  }
  return out;
}

Observation World::observe() {
  const auto& g = params_.grid;
  Observation obs;
  obs.target = render_bev();
  obs.sensor = sense(obs.target, static_cast<std::uint64_t>(step_count_));
  obs.route.resize(static_cast<std::size_t>(g.route_points) * 2);
  const Vec2 f{std::cos(ego_.heading), std::sin(ego_.heading)};
  const Vec2 l{-std::sin(ego_.heading), std::cos(ego_.heading)};
  for (int i = 0; i < g.route_points; ++i) {
    const double s = std::min(s_proj_ + i * g.route_spacing, route_.total());
    const Vec2 rel = route_.point_at(s) - Vec2{ego_.x, ego_.y};
    obs.route[static_cast<std::size_t>(i) * 2] = rel.dot(f);
    obs.route[static_cast<std::size_t>(i) * 2 + 1] = rel.dot(l);
  }
  obs.speed = ego_.v;
  return obs;
}

std::vector<Vec2> World::static_points_ego_frame(double max_range) const {
  std::vector<Vec2> out;
  const Vec2 f{std::cos(ego_.heading), std::sin(ego_.heading)};
  const Vec2 l{-std::sin(ego_.heading), std::cos(ego_.heading)};
  const Vec2 ego_pos{ego_.x, ego_.y};
  const auto add_point = [&](const Vec2& p) {
    const Vec2 rel = p - ego_pos;
    if (rel.norm() <= max_range) {
      out.push_back({rel.dot(f), rel.dot(l)});
    }
  };
  for (const auto& poly : spec_.obstacles) {
    for (std::size_t i = 0; i < poly.pts.size(); ++i) {
      const Vec2 a = poly.pts[i];
      const Vec2 b = poly.pts[(i + 1) % poly.pts.size()];
      const double len = (b - a).norm();
      const int n = std::max(1, static_cast<int>(std::ceil(len / 0.5)));
      for (int k = 0; k <= n; ++k) {
        add_point(a + (b - a) * (static_cast<double>(k) / n));
      }
    }
  }
  return out;
}

}  // namespace rmbl::sim
