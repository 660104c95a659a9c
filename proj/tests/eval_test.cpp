#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rmbl/eval.hpp"
#include "test_config.hpp"

using namespace rmbl;
namespace fs = std::filesystem;

TEST_CASE("infraction penalty multiplies coefficients per event") {
  Config::Eval cfg;
  eval::InfractionCounts none;
  CHECK(eval::infraction_penalty(none, cfg) == 1.0);

  eval::InfractionCounts one_vehicle;
  one_vehicle.collision_vehicle = 1;
  CHECK(eval::infraction_penalty(one_vehicle, cfg) == doctest::Approx(0.60).epsilon(1e-12));

  eval::InfractionCounts two;
  two.collision_vehicle = 1;
  two.red_light = 1;
  CHECK(eval::infraction_penalty(two, cfg) == doctest::Approx(0.42).epsilon(1e-12));

  eval::InfractionCounts repeat;
  repeat.collision_pedestrian = 2;
  CHECK(eval::infraction_penalty(repeat, cfg) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("driving score is the product of completion and penalty") {
  CHECK(eval::driving_score(100.0, 1.0) == 100.0);
  CHECK(eval::driving_score(98.2, 0.40) == doctest::Approx(39.28).epsilon(1e-12));
  CHECK(eval::driving_score(0.0, 0.9) == 0.0);
}

TEST_CASE("expert episode on a straight route is clean") {
  Config cfg = Config::defaults();
  cfg.eval.parallel_episodes = 1;
  const auto spec = sim::make_scenario("straight", 3);
  const auto policy = eval::expert_policy_factory(cfg)();
  const auto m = eval::run_episode(policy, spec, cfg, 3);
  CHECK(m.rc > 99.0);
  CHECK(m.ip == 1.0);
  CHECK(m.ds == doctest::Approx(m.rc));
  CHECK(m.completed);
  CHECK(m.infractions.total() == 0);
}

TEST_CASE("run_episode is deterministic for a fixed policy, scenario and seed") {
  Config cfg = Config::defaults();
  const auto spec = sim::make_scenario("crossing", 5);
  const auto factory = eval::expert_policy_factory(cfg);
  const auto a = eval::run_episode(factory(), spec, cfg, 5);
  const auto b = eval::run_episode(factory(), spec, cfg, 5);
  CHECK(a.rc == b.rc);
  CHECK(a.ip == b.ip);
  CHECK(a.ds == b.ds);
  CHECK(a.steps == b.steps);
  CHECK(a.mean_step_reward == b.mean_step_reward);
}

TEST_CASE("a braking-forever policy times out with near-zero completion") {
  Config cfg = Config::defaults();
  const auto spec = sim::make_scenario("straight", 1);
  eval::Policy brake = [](const sim::World&, const sim::Observation&, bool) {
    return sim::Controls{0.0, 0.0, 1.0};
  };
  const auto m = eval::run_episode(brake, spec, cfg, 1);
  CHECK(m.rc < 5.0);
  CHECK(m.infractions.agent_blocked + m.infractions.route_timeout == 1);
  CHECK_FALSE(m.completed);
}

TEST_CASE("suite report keeps ds = rc * ip on every row and aggregates both ways") {
  Config cfg = Config::defaults();
  cfg.eval.parallel_episodes = 2;
  const auto report = eval::run_suite(eval::expert_policy_factory(cfg),
                                      {"straight", "obstacle_two_ways"}, 2, cfg);
  REQUIRE(report.episodes.size() == 4);
  for (const auto& row : report.episodes) {
    CHECK(row.metrics.ds ==
          doctest::Approx(row.metrics.rc * row.metrics.ip).epsilon(1e-12));
    CHECK(row.metrics.ip >= 0.0);
    CHECK(row.metrics.ip <= 1.0);
    CHECK(row.metrics.ds <= row.metrics.rc + 1e-12);
  }
  CHECK(report.per_scenario.size() == 2);
  CHECK(report.ds_of_means == doctest::Approx(report.mean_rc * report.mean_ip).epsilon(1e-12));
}

TEST_CASE("per-km rates recompute from the episode log") {
  Config cfg = Config::defaults();
  auto spec = sim::make_scenario("straight", 2);
  // a wall across the lane guarantees one static collision
  spec.obstacles.push_back(sim::rect_polygon({40.0, 0.0}, 0.0, 2.0, 5.0));
  const auto log_path = (fs::temp_directory_path() / "rmbl_episode_log.csv").string();
  const auto m =
      eval::run_episode(eval::expert_policy_factory(cfg)(), spec, cfg, 2, log_path);
  // the expert stops for in-corridor obstacles; force the count check only if
  // a collision actually happened, otherwise validate the log shape
  std::ifstream log(log_path);
  REQUIRE(log.good());
  std::string header;
  std::getline(log, header);
  CHECK(header.find("d_lat") != std::string::npos);
  int rows = 0, collisions = 0;
  double dist = 0.0;
  std::string line;
  while (std::getline(log, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    dist += std::stod(cells[4]) * cfg.world.dt;  // v * dt
    collisions += cells[15] == "1";
  }
  CHECK(rows == m.steps);
  const int counted = m.infractions.collision_static + m.infractions.collision_vehicle +
                      m.infractions.collision_pedestrian;
  CHECK(counted == collisions);
  const double km = dist / 1000.0;
  if (counted > 0) {
    CHECK(m.rate_per_km(counted) ==
          doctest::Approx(counted / km).epsilon(1e-6));
  }
  CHECK(m.km == doctest::Approx(km).epsilon(1e-9));
}
