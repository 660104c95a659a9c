#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rmbl/rewards.hpp"

using namespace rmbl::rewards;

TEST_CASE("speed reward cases") {
  CHECK(speed_reward(3.0, 3.0, false, 8.0) == 3.0);
  CHECK(speed_reward(12.0, 12.0, false, 8.0) == 8.0);
  CHECK(speed_reward(0.0, 0.0, true, 8.0) == 8.0);
  CHECK(speed_reward(0.5, 0.5, true, 8.0) == 0.0);
  CHECK(speed_reward(-1.0, 1.0, false, 8.0) == -1.0);  // driving against the route
}

TEST_CASE("distance reward counts whole-meter milestones") {
  CHECK(distance_reward(4.9, 5.1, 1.0) == 1.0);
  CHECK(distance_reward(4.1, 4.9, 1.0) == 0.0);
  CHECK(distance_reward(4.9, 7.2, 1.0) == 3.0);  // milestones 5, 6 and 7
  CHECK(distance_reward(0.0, 0.99, 1.0) == 0.0);
  CHECK(distance_reward(2.0, 2.0, 1.0) == 0.0);
}

TEST_CASE("deviation penalties with the pi/6 gate") {
  RewardConfig cfg;
  CHECK(deviation_angle_penalty(std::numbers::pi / 8.0, 0, cfg) == 0.0);
  CHECK(deviation_angle_penalty(std::numbers::pi / 3.0, 0, cfg) ==
        doctest::Approx(-std::numbers::pi / 3.0).epsilon(1e-12));
  CHECK(deviation_angle_penalty(-std::numbers::pi / 3.0, 0, cfg) ==
        doctest::Approx(-std::numbers::pi / 3.0).epsilon(1e-12));

  CHECK(deviation_distance_penalty(0.0, 0, cfg) == 0.0);
  CHECK(deviation_distance_penalty(1.5, 0, cfg) == doctest::Approx(-2.25).epsilon(1e-12));
  CHECK(deviation_distance_penalty(-1.5, 0, cfg) == doctest::Approx(-2.25).epsilon(1e-12));
}

TEST_CASE("stuck decay is monotone, bounded and hits its floor") {
  RewardConfig cfg;
  double prev = stuck_decay(0, cfg);
  CHECK(prev == 1.0);
  for (int s = 1; s <= 150; ++s) {
    const double d = stuck_decay(s, cfg);
    CHECK(d <= prev + 1e-15);
    CHECK(d >= cfg.decay_min - 1e-15);
    prev = d;
  }
  CHECK(stuck_decay(100, cfg) == doctest::Approx(cfg.decay_min));
  CHECK(stuck_decay(1000, cfg) == doctest::Approx(cfg.decay_min));
  CHECK(deviation_angle_penalty(std::numbers::pi / 3.0, 1000, cfg) ==
        doctest::Approx(-std::numbers::pi / 3.0 * cfg.decay_min).epsilon(1e-12));
}

TEST_CASE("step reward follows the printed max form") {
  RewardConfig cfg;  // v_max 8, k1 0.5, k2 0.2, literal
  CHECK(step_reward(3.0, 0.0, 0.0, 0.0, cfg) == 8.0);
  CHECK(step_reward(8.0, 1.0, 0.0, 0.0, cfg) == 9.0);

  RewardConfig k1_one = cfg;
  k1_one.k1 = 1.0;
  const double dev = -std::numbers::pi / 3.0;
  CHECK(step_reward(8.0, 1.0, dev, 0.0, k1_one) ==
        doctest::Approx(9.0 - std::numbers::pi / 3.0).epsilon(1e-12));

  RewardConfig capped = cfg;
  capped.eq3_literal = false;
  CHECK(step_reward(3.0, 0.0, 0.0, 0.0, capped) == 3.0);
  CHECK(step_reward(8.0, 1.0, 0.0, 0.0, capped) == 8.0);
}

TEST_CASE("terminal reward composition") {
  SUBCASE("collision at speed with partial completion") {
    const auto rb = terminal_reward({true, false, false}, 2.0, 0.0, 50.0, 25.0);
    CHECK(rb.r_collide == -3.0);
    CHECK(rb.r_complete == doctest::Approx(0.5 + 6.25));
    CHECK(rb.r_term == doctest::Approx(3.75).epsilon(1e-12));
  }
  SUBCASE("off-lane clip boundary") {
    const auto rb = terminal_reward({false, true, false}, 1.0, 3.6, 0.0, 0.0);
    CHECK(rb.r_off_lane == doctest::Approx(-20.0).epsilon(1e-12));
    const auto far = terminal_reward({false, true, false}, 1.0, 10.0, 0.0, 0.0);
    CHECK(far.r_off_lane == doctest::Approx(-25.0).epsilon(1e-12));
  }
  SUBCASE("clean finish") {
    const auto rb = terminal_reward({false, false, false}, 0.0, 0.0, 400.0, 100.0);
    CHECK(rb.r_term == doctest::Approx(29.0).epsilon(1e-12));
  }
  SUBCASE("simultaneous terminals add their penalties") {
    const auto rb = terminal_reward({true, true, true}, 4.0, 4.0, 120.0, 60.0);
    CHECK(rb.r_collide == -5.0);
    CHECK(rb.r_off_lane == -20.0);
    CHECK(rb.r_timeout == -10.0);
    CHECK(rb.r_complete == doctest::Approx(1.2 + 15.0));
    CHECK(rb.r_term == doctest::Approx(-5.0 - 20.0 - 10.0 + 16.2).epsilon(1e-12));
  }
}
