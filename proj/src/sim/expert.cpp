#include "rmbl/sim/expert.hpp"

#include <algorithm>
#include <cmath>

namespace rmbl::sim {

PolarWaypoint scripted_expert(const World& world, const ExpertConfig& cfg) {
  if (world.should_stop()) {
    return {0.0, 0.0};
  }

  const auto& ego = world.ego();
  const auto& route = world.route();
  const double s = world.route_s();

  const double lookahead = std::clamp(cfg.lookahead_time * std::max(ego.v, 3.0),
                                      cfg.min_lookahead, cfg.max_lookahead);
  const double s_target = std::min(s + lookahead, route.total());
  const Vec2 target = route.point_at(s_target);

  const Vec2 rel = target - Vec2{ego.x, ego.y};
  const Vec2 f{std::cos(ego.heading), std::sin(ego.heading)};
  const Vec2 l{-std::sin(ego.heading), std::cos(ego.heading)};
  const double bearing = std::clamp(std::atan2(rel.dot(l), rel.dot(f)), -cfg.phi_max, cfg.phi_max);

  // Slow down with the heading change over the lookahead window.
  const double turn = std::abs(wrap_angle(route.tangent_at(s_target) - route.tangent_at(s)));
  double v_des = cfg.v_max / (1.0 + cfg.curve_gain * turn);

  // And into anything that demands a stop further ahead.
  const double block = std::min(world.line_block_distance(cfg.block_horizon),
                                world.corridor_block_distance(cfg.block_horizon));
  if (std::isfinite(block)) {
    const double run = std::max(0.0, block - cfg.approach_margin);
    v_des = std::min(v_des, std::sqrt(2.0 * cfg.comfort_brake * run));
  }

  const double radius = std::clamp(v_des * cfg.lookahead_time, 0.0, cfg.r_max);
  return {radius, bearing};
}

}  // namespace rmbl::sim
