#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rmbl/rng.hpp"
#include "rmbl/sim/expert.hpp"
#include "rmbl/sim/scenario.hpp"
#include "rmbl/sim/session.hpp"
#include "rmbl/sim/world.hpp"

using namespace rmbl;
using namespace rmbl::sim;

namespace {

ScenarioSpec straight_spec(double length = 120.0) {
  ScenarioSpec spec;
  spec.id = "test-straight";
  for (double x = 0.0; x <= length; x += 4.0) spec.route_points.push_back({x, 0.0});
  spec.step_budget = 800;
  return spec;
}

WorldParams quiet_params() {
  WorldParams p;
  p.dropout_prob = 0.0;
  return p;
}

}  // namespace

TEST_CASE("polyline projection basics") {
  Polyline line({{0, 0}, {10, 0}, {20, 0}});
  const auto proj = line.project({5.0, 2.0});
  CHECK(proj.s == doctest::Approx(5.0));
  CHECK(proj.d_lat == doctest::Approx(2.0));  // left of travel is positive
  CHECK(proj.tangent == doctest::Approx(0.0));

  const auto right = line.project({12.0, -3.0});
  CHECK(right.d_lat == doctest::Approx(-3.0));
  CHECK(line.point_at(15.0).x == doctest::Approx(15.0));
  CHECK(line.total() == doctest::Approx(20.0));
}

TEST_CASE("polygon intersection agrees with a dense sampling oracle") {
  RngStream rng(12);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const Polygon a = rect_polygon({rng.uniform(-3, 3), rng.uniform(-3, 3)},
                                   rng.uniform(0, 3.1), rng.uniform(1, 5), rng.uniform(1, 3));
    const Polygon b = rect_polygon({rng.uniform(-3, 3), rng.uniform(-3, 3)},
                                   rng.uniform(0, 3.1), rng.uniform(1, 5), rng.uniform(1, 3));
    // Sample a fine grid over a's footprint; any sampled point inside both
    // proves intersection.
    Vec2 lo, hi;
    a.bounds(lo, hi);
    bool sampled_overlap = false;
    const int n = 40;
    for (int i = 0; i <= n && !sampled_overlap; ++i) {
      for (int j = 0; j <= n; ++j) {
        const Vec2 p{lo.x + (hi.x - lo.x) * i / n, lo.y + (hi.y - lo.y) * j / n};
        if (point_in_polygon(p, a) && point_in_polygon(p, b)) {
          sampled_overlap = true;
          break;
        }
      }
    }
    const bool sat = polygons_intersect(a, b);
    if (sampled_overlap) {
      CHECK(sat);
      ++checked;
    }
    // SAT true with no sampled overlap can only be a sliver; verify there is
    // no separating gap by shrinking: disjoint rects stay disjoint.
    if (!sat) {
      CHECK_FALSE(sampled_overlap);
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("scenario json round-trips and validates") {
  const auto spec = make_scenario("obstacle_two_ways", 5);
  const auto text = spec.to_json();
  const auto back = ScenarioSpec::from_json(text);
  CHECK(back.id == spec.id);
  CHECK(back.route_points.size() == spec.route_points.size());
  CHECK(back.obstacles.size() == spec.obstacles.size());
  CHECK(back.agents.size() == spec.agents.size());
  CHECK(back.step_budget == spec.step_budget);

  CHECK_THROWS_AS(ScenarioSpec::from_json("{not json"), std::invalid_argument);
  CHECK_THROWS_AS(ScenarioSpec::from_json("{\"id\":\"x\",\"route\":[[0,0]]}"),
                  std::invalid_argument);

  ScenarioSpec bad = straight_spec();
  bad.step_budget = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  ScenarioSpec overlap = straight_spec();
  overlap.obstacles.push_back(rect_polygon({0.0, 0.0}, 0.0, 4.0, 4.0));
  CHECK_THROWS_AS(overlap.validate(), std::invalid_argument);
}

TEST_CASE("every template builds and validates across seeds") {
  for (const auto& name : scenario_template_names()) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto spec = make_scenario(name, seed);
      CHECK(spec.route_points.size() >= 2);
      CHECK(Polyline(spec.route_points).total() > 50.0);
    }
  }
}

TEST_CASE("reset is deterministic and starts on the route") {
  const auto spec = make_scenario("straight", 7);
  WorldParams params;  // dropout on: determinism must still hold
  World w1(spec, params, 99);
  World w2(spec, params, 99);
  const auto o1 = w1.reset();
  const auto o2 = w2.reset();
  CHECK(o1.sensor == o2.sensor);
  CHECK(o1.target == o2.target);
  CHECK(o1.route == o2.route);
  CHECK(o1.speed == o2.speed);

  const auto proj = w1.project_route();
  CHECK(proj.d_lat == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(proj.theta_diff == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(proj.rc == 0.0);
}

TEST_CASE("kinematics: coasting and straight headings") {
  World w(straight_spec(), quiet_params(), 1);
  w.reset();
  // accelerate to exactly 5 m/s: a = 3 m/s^2 * (1/3 throttle) ... easier to
  // reach via repeated steps then test coasting displacement analytically.
  for (int i = 0; i < 40 && w.ego().v < 5.0; ++i) {
    w.step({0.0, 1.0, 0.0});
  }
  const double h0 = w.ego().heading;
  const double v = w.ego().v;
  const double x0 = w.ego().x;
  w.step({0.0, 0.0, 0.0});
  CHECK(w.ego().heading == doctest::Approx(h0).epsilon(1e-12));
  CHECK(w.ego().x - x0 == doctest::Approx(v * 0.1).epsilon(1e-12));
  CHECK(w.ego().v == doctest::Approx(v));  // no drag
}

TEST_CASE("controls out of range and stepping after done are rejected") {
  World w(straight_spec(), quiet_params(), 1);
  w.reset();
  CHECK_THROWS_AS(w.step({2.0, 0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(w.step({0.0, -0.1, 0.0}), std::invalid_argument);
}

TEST_CASE("off-lane fires just past the 3.5 m boundary") {
  auto params = quiet_params();
  World w(straight_spec(), params, 1);
  w.reset();
  double prev_dlat = 0.0;
  bool fired = false;
  for (int i = 0; i < 300 && !w.done(); ++i) {
    const auto [obs, ev] = w.step({i < 12 ? 0.0 : 0.6, 0.6, 0.0});
    if (ev.off_lane) {
      fired = true;
      CHECK(std::abs(ev.d_lat) > 3.5);
      CHECK(std::abs(prev_dlat) <= 3.5 + 1e-9);
      break;
    }
    prev_dlat = ev.d_lat;
  }
  CHECK(fired);
}

TEST_CASE("timeout fires after 200 no-progress steps") {
  World w(straight_spec(), quiet_params(), 1);
  w.reset();
  int steps = 0;
  bool timed_out = false;
  while (!w.done() && steps < 400) {
    const auto [obs, ev] = w.step({0.0, 0.0, 1.0});
    ++steps;
    if (ev.timeout) {
      timed_out = true;
      break;
    }
  }
  CHECK(timed_out);
  CHECK(steps == 201);
}

TEST_CASE("collision against a static obstacle reports kind and speed") {
  auto spec = straight_spec();
  spec.obstacles.push_back(rect_polygon({30.0, 0.0}, 0.0, 4.0, 2.4));
  World w(spec, quiet_params(), 1);
  w.reset();
  bool collided = false;
  for (int i = 0; i < 200 && !w.done(); ++i) {
    const auto [obs, ev] = w.step({0.0, 1.0, 0.0});
    if (ev.collision) {
      collided = true;
      CHECK(ev.collision_kind == "static");
      CHECK(ev.collision_rel_speed > 1.0);
      break;
    }
  }
  CHECK(collided);
  CHECK(w.done());
  CHECK_THROWS_AS(w.step({0.0, 0.0, 0.0}), std::logic_error);
}

TEST_CASE("all three terminal flags can fire on the same step") {
  // Event-terminal mode off so flags accumulate. Full left lock makes the
  // ego circle with radius ~4.1 m; an obstacle at the top of that circle is
  // beyond the 3.5 m lane bound, and after the first lap the projection high
  // water mark freezes so the no-progress counter climbs past the horizon.
  auto spec = straight_spec();
  spec.obstacles.push_back(rect_polygon({0.0, 8.0}, 0.0, 3.0, 3.0));
  auto params = quiet_params();
  params.terminal_on_events = false;
  World w(spec, params, 1);
  w.reset();
  bool all_three = false;
  for (int i = 0; i < 700 && !w.done(); ++i) {
    const auto [obs, ev] = w.step({1.0, 0.3, 0.0});
    if (ev.collision && ev.off_lane && ev.timeout) {
      all_three = true;
      break;
    }
  }
  CHECK(all_three);
}

TEST_CASE("bev rendering basics") {
  const auto spec = straight_spec();
  World w(spec, quiet_params(), 1);
  w.reset();
  const auto g = w.params().grid;
  const int hw = g.height * g.width;
  const auto bev = w.render_bev();

  double stat = 0, dyn = 0, stop = 0, drivable = 0, route = 0, ego = 0;
  for (int i = 0; i < hw; ++i) {
    drivable += bev[kChDrivable * hw + i];
    route += bev[kChRoute * hw + i];
    stat += bev[kChStatic * hw + i];
    dyn += bev[kChDynamic * hw + i];
    ego += bev[kChEgo * hw + i];
    stop += bev[kChStopLine * hw + i];
  }
  CHECK(drivable > 0);
  CHECK(route > 0);
  CHECK(ego > 0);
  CHECK(stat == 0);
  CHECK(dyn == 0);
  CHECK(stop == 0);

  // ego cell itself is covered by the ego footprint
  CHECK(bev[kChEgo * hw + g.ego_row * g.width + g.ego_col] == 1.0);
}

TEST_CASE("agents inside the window appear; far agents do not") {
  auto spec = straight_spec();
  AgentScript near_car;
  near_car.path = {{18.0, 0.5}, {100.0, 0.5}};
  near_car.speed = 0.0;
  spec.agents.push_back(near_car);
  AgentScript far_car;
  far_car.path = {{100.0, 0.0}, {160.0, 0.0}};
  far_car.speed = 0.0;
  spec.agents.push_back(far_car);

  World w(spec, quiet_params(), 1);
  w.reset();
  const auto g = w.params().grid;
  const int hw = g.height * g.width;
  const auto bev = w.render_bev();
  double dyn = 0;
  for (int i = 0; i < hw; ++i) dyn += bev[kChDynamic * hw + i];
  CHECK(dyn > 0);
  CHECK(dyn < 20);  // only the near car, ~9 cells
}

TEST_CASE("sense equals target minus route when nothing degrades it") {
  auto params = quiet_params();
  params.occlusion = true;  // no obstacles -> no shadows anyway
  World w(straight_spec(), params, 1);
  w.reset();
  const auto g = w.params().grid;
  const int hw = g.height * g.width;
  const auto target = w.render_bev();
  const auto sensor = w.sense(target, 0);
  static constexpr int kFrom[5] = {kChDrivable, kChStatic, kChDynamic, kChEgo, kChStopLine};
  for (int ch = 0; ch < 5; ++ch) {
    for (int i = 0; i < hw; ++i) {
      CHECK(sensor[ch * hw + i] == target[kFrom[ch] * hw + i]);
    }
  }
}

TEST_CASE("occlusion zeroes cells behind an obstacle along the ray") {
  auto spec = straight_spec();
  // Obstacle spanning x in [9.5, 11.5] straight ahead; its near face stays
  // visible, everything behind it along the ray goes dark.
  spec.obstacles.push_back(rect_polygon({10.5, 0.0}, 0.0, 2.0, 2.0));
  auto params = quiet_params();
  World w(spec, params, 1);
  w.reset();
  const auto g = w.params().grid;
  const int hw = g.height * g.width;
  const auto target = w.render_bev();
  const auto sensor = w.sense(target, 0);

  const int col = g.ego_col;
  const int row_before = g.ego_row - 6;   // ~6 m ahead, clear
  const int row_face = g.ego_row - 10;    // obstacle near face at x = 10
  const int row_behind = g.ego_row - 20;  // shadowed road at x = 20
  CHECK(sensor[0 * hw + row_before * g.width + col] == 1.0);  // drivable visible
  CHECK(sensor[1 * hw + row_face * g.width + col] == 1.0);    // obstacle face visible
  CHECK(sensor[0 * hw + row_behind * g.width + col] == 0.0);  // shadowed
  CHECK(target[kChDrivable * hw + row_behind * g.width + col] == 1.0);
}

TEST_CASE("sensor dropout is deterministic per seed") {
  auto params = quiet_params();
  params.dropout_prob = 0.1;
  const auto spec = straight_spec();
  World w1(spec, params, 42), w2(spec, params, 42), w3(spec, params, 43);
  const auto o1 = w1.reset(), o2 = w2.reset(), o3 = w3.reset();
  CHECK(o1.sensor == o2.sensor);
  CHECK(o1.sensor != o3.sensor);
}

TEST_CASE("route projection geometry") {
  World w(straight_spec(), quiet_params(), 1);
  w.reset();
  for (int i = 0; i < 30; ++i) w.step({0.0, 0.5, 0.0});
  const auto proj = w.project_route();
  CHECK(std::abs(proj.d_lat) < 0.05);
  CHECK(std::abs(proj.theta_diff) < 0.05);
  CHECK(proj.v_lon == doctest::Approx(w.ego().v).epsilon(1e-3));
  CHECK(proj.rc > 0.0);
}

TEST_CASE("expert drives straight routes to completion") {
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    EnvSession env(make_scenario("straight", seed), quiet_params(), {}, seed);
    env.reset();
    PidState pid;
    PidConfig pid_cfg;
    EnvSession::StepResult last;
    while (!env.world().done()) {
      const auto wp = scripted_expert(env.world());
      last = env.step(pid_control(wp, env.world().ego().v, pid, pid_cfg, 0.1));
    }
    CHECK(last.completed);
    CHECK(last.events.rc > 0.99);
    CHECK_FALSE(last.events.terminal());
  }
}

TEST_CASE("expert on a straight route keeps bearing near zero") {
  World w(straight_spec(), quiet_params(), 1);
  w.reset();
  const auto wp = scripted_expert(w);
  CHECK(std::abs(wp.bearing) < 1e-9);
  CHECK(wp.radius > 0.0);
}

TEST_CASE("expert bearing is positive into a left curve") {
  ScenarioSpec spec;
  spec.id = "left-curve";
  // quarter circle to the left, radius 30
  for (int i = 0; i <= 30; ++i) {
    const double a = -std::numbers::pi / 2.0 + (std::numbers::pi / 2.0) * i / 30.0;
    spec.route_points.push_back({30.0 * std::cos(a), 30.0 + 30.0 * std::sin(a)});
  }
  spec.step_budget = 600;
  World w(spec, quiet_params(), 1);
  w.reset();
  const auto wp = scripted_expert(w);
  CHECK(wp.bearing > 0.01);
}

TEST_CASE("expert emits a zero-radius waypoint at a red stop line") {
  auto spec = straight_spec();
  StopLine line;
  line.a = {26.0, 4.0};
  line.b = {26.0, -4.0};
  line.go_s = 0.0;  // always red (stop phase)
  line.stop_s = 1.0;
  spec.stop_lines.push_back(line);
  World w(spec, quiet_params(), 1);
  w.reset();
  PidState pid;
  bool stopped_wp = false;
  for (int i = 0; i < 120 && !w.done(); ++i) {
    const auto wp = scripted_expert(w);
    if (wp.radius == 0.0) {
      // must be demanded only near the line
      CHECK(w.route_s() > 26.0 - 8.5);
      stopped_wp = true;
      break;
    }
    w.step(pid_control(wp, w.ego().v, pid, {}, 0.1));
  }
  CHECK(stopped_wp);
}

TEST_CASE("expert halts behind the blockage on obstacle_two_ways") {
  EnvSession env(make_scenario("obstacle_two_ways", 3), quiet_params(), {}, 3);
  env.reset();
  PidState pid;
  EnvSession::StepResult last;
  while (!env.world().done()) {
    const auto wp = scripted_expert(env.world());
    last = env.step(pid_control(wp, env.world().ego().v, pid, {}, 0.1));
  }
  CHECK(last.events.timeout);
  CHECK(last.events.rc < 0.5);
  CHECK_FALSE(last.events.collision);
}

TEST_CASE("expert waits out the pedestrian on crossing") {
  EnvSession env(make_scenario("crossing", 2), quiet_params(), {}, 2);
  env.reset();
  PidState pid;
  EnvSession::StepResult last;
  while (!env.world().done()) {
    const auto wp = scripted_expert(env.world());
    last = env.step(pid_control(wp, env.world().ego().v, pid, {}, 0.1));
  }
  CHECK_FALSE(last.events.collision);
  CHECK(last.completed);
}

TEST_CASE("full-episode determinism: identical trajectories and rewards") {
  auto run = [](std::uint64_t seed) {
    EnvSession env(make_scenario("crossing", seed), WorldParams{}, {}, seed);
    env.reset();
    PidState pid;
    std::vector<double> trace;
    while (!env.world().done()) {
      const auto wp = scripted_expert(env.world());
      const auto r = env.step(pid_control(wp, env.world().ego().v, pid, {}, 0.1));
      trace.push_back(env.world().ego().x);
      trace.push_back(env.world().ego().y);
      trace.push_back(env.world().ego().heading);
      trace.push_back(r.reward.r_step);
      trace.push_back(r.reward.r_term);
      for (double v : r.obs.sensor) trace.push_back(v);
    }
    return trace;
  };
  CHECK(run(11) == run(11));
}

TEST_CASE("static points for the mask are reported in the ego frame") {
  auto spec = straight_spec();
  spec.obstacles.push_back(rect_polygon({12.0, 1.0}, 0.0, 2.0, 2.0));
  World w(spec, quiet_params(), 1);
  w.reset();
  const auto pts = w.static_points_ego_frame(30.0);
  CHECK_FALSE(pts.empty());
  for (const auto& p : pts) {
    CHECK(p.x > 9.0);   // ahead of the ego
    CHECK(p.x < 15.0);
    CHECK(std::abs(p.y - 1.0) < 2.0);  // near 1 m left
  }
}
