#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "rmbl/checkpoint.hpp"
#include "rmbl/config.hpp"
#include "rmbl/data.hpp"
#include "rmbl/plot.hpp"
#include "rmbl/replay.hpp"
#include "rmbl/rng.hpp"

using namespace rmbl;
namespace fs = std::filesystem;

namespace {

sim::GridDims tiny_dims() {
  sim::GridDims d;
  d.height = 4;
  d.width = 4;
  d.route_points = 2;
  return d;
}

Frame make_frame(const sim::GridDims& d, std::uint32_t ep, std::uint32_t step, RngStream& rng,
                 std::uint8_t flags = 0) {
  Frame f;
  f.episode = ep;
  f.step = step;
  f.flags = flags;
  f.speed = rng.uniform(0, 8);
  f.r_step = rng.uniform(-1, 9);
  f.expert_wp[0] = rng.uniform(0, 10);
  f.expert_wp[1] = rng.uniform(-1, 1);
  f.route.resize(static_cast<std::size_t>(d.route_points) * 2, 0.5);
  f.sensor.assign(static_cast<std::size_t>(d.sensor_size()), 0);
  f.target.assign(static_cast<std::size_t>(d.bev_size()), 0);
  for (auto& b : f.sensor) b = rng.uniform() < 0.5 ? 1 : 0;
  for (auto& b : f.target) b = rng.uniform() < 0.5 ? 1 : 0;
  return f;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("dataset shards round-trip and are byte-stable") {
  const auto dims = tiny_dims();
  const auto dir1 = fs::temp_directory_path() / "rmbl_ds_a";
  const auto dir2 = fs::temp_directory_path() / "rmbl_ds_b";
  fs::remove_all(dir1);
  fs::remove_all(dir2);

  const auto build = []() {
    RngStream rng(5);
    Dataset ds(tiny_dims());
    for (std::uint32_t ep = 0; ep < 3; ++ep) {
      for (std::uint32_t st = 0; st < 7; ++st) {
        ds.append(make_frame(tiny_dims(), ep, st, rng, st == 6 ? kFlagDone : 0));
      }
      ds.append(make_frame(tiny_dims(), ep, 7, rng, kFlagSentinel));
    }
    return ds;
  };
  build().save_shards(dir1.string(), 10);
  build().save_shards(dir2.string(), 10);
  CHECK(file_bytes(dir1 / "shard_0000.rmbd") == file_bytes(dir2 / "shard_0000.rmbd"));

  const auto loaded = Dataset::load_dir(dir1.string());
  const auto original = build();
  REQUIRE(loaded.size() == original.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded.frame(i).episode == original.frame(i).episode);
    CHECK(loaded.frame(i).flags == original.frame(i).flags);
    CHECK(loaded.frame(i).speed == original.frame(i).speed);
    CHECK(loaded.frame(i).sensor == original.frame(i).sensor);
    CHECK(loaded.frame(i).target == original.frame(i).target);
  }
}

TEST_CASE("empty dataset still writes a valid header") {
  const auto dir = fs::temp_directory_path() / "rmbl_ds_empty";
  fs::remove_all(dir);
  Dataset ds(tiny_dims());
  ds.save_shards(dir.string());
  const auto loaded = Dataset::load_dir(dir.string());
  CHECK(loaded.size() == 0);
}

TEST_CASE("sequence windows respect episode and sentinel boundaries") {
  RngStream rng(6);
  Dataset ds(tiny_dims());
  for (std::uint32_t st = 0; st < 5; ++st) ds.append(make_frame(tiny_dims(), 0, st, rng));
  ds.append(make_frame(tiny_dims(), 0, 5, rng, kFlagSentinel));
  for (std::uint32_t st = 0; st < 3; ++st) ds.append(make_frame(tiny_dims(), 1, st, rng));
  ds.append(make_frame(tiny_dims(), 1, 3, rng, kFlagSentinel));

  CHECK(ds.window_ok(0, 3));
  CHECK(ds.window_ok(2, 3));   // next is the sentinel, still valid as a target
  CHECK_FALSE(ds.window_ok(3, 3));  // would include the sentinel as input
  CHECK_FALSE(ds.window_ok(4, 3));  // crosses the episode boundary
  CHECK(ds.window_ok(6, 2));
  const auto starts = ds.window_starts(3);
  CHECK(starts == std::vector<std::size_t>{0, 1, 2, 6});
}

TEST_CASE("frame continuation labels") {
  RngStream rng(7);
  auto f = make_frame(tiny_dims(), 0, 0, rng);
  CHECK(f.continuation() == 1.0);
  f.flags |= kFlagDone | kFlagTruncated;  // budget ran out: would continue
  CHECK(f.continuation() == 1.0);
  f.flags = kFlagDone | kFlagCollision;
  CHECK(f.continuation() == 0.0);
  f.flags = kFlagDone | kFlagCompleted;
  CHECK(f.continuation() == 0.0);
}

TEST_CASE("replay buffer: FIFO eviction and in-range uniform sampling") {
  ReplayBuffer buffer(8);
  for (int i = 0; i < 12; ++i) {
    Transition t;
    t.reward = i;
    buffer.push(std::move(t));
  }
  CHECK(buffer.size() == 8);
  CHECK(buffer.at(0).reward == 4);  // oldest four evicted
  CHECK(buffer.at(7).reward == 11);
  CHECK_THROWS_AS(buffer.at(8), std::out_of_range);

  RngStream rng(8);
  const auto idx = buffer.sample_indices(64, rng);
  for (const auto i : idx) CHECK(i < 8);
}

TEST_CASE("transition queue hands transitions over whole") {
  TransitionQueue queue(4);
  constexpr int kCount = 500;
  std::thread producer([&]() {
    for (int i = 0; i < kCount; ++i) {
      Transition t;
      t.state.assign(16, static_cast<double>(i));
      t.next_state.assign(16, static_cast<double>(i));
      t.reward = i;
      queue.push(std::move(t));
    }
    queue.close();
  });
  int received = 0;
  while (auto t = queue.pop()) {
    // never a torn record: every element must match the reward stamp
    for (double v : t->state) CHECK(v == t->reward);
    for (double v : t->next_state) CHECK(v == t->reward);
    ++received;
  }
  producer.join();
  CHECK(received == kCount);
}

TEST_CASE("checkpoint round-trips bitwise") {
  RngStream rng(9);
  ParamStore store;
  store.create("w1", {3, 4}, 1.0, rng);
  store.create("w2", {5}, 1.0, rng);
  const auto path = (fs::temp_directory_path() / "rmbl_ckpt_test.rmbl").string();
  save_checkpoint(path, {{"net.", &store}});
  const auto entries = load_checkpoint(path);
  REQUIRE(entries.count("net.w1") == 1);
  REQUIRE(entries.count("net.w2") == 1);
  CHECK(entries.at("net.w1").values == store.find("w1").values());
  CHECK(entries.at("net.w1").shape == std::vector<int>{3, 4});

  ParamStore other;
  RngStream rng2(10);
  other.create("w1", {3, 4}, 1.0, rng2);
  other.create("w2", {5}, 1.0, rng2);
  load_into(entries, "net.", other);
  CHECK(other.find("w1").values() == store.find("w1").values());
  CHECK(other.find("w2").values() == store.find("w2").values());

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.rmbl"), std::runtime_error);
}

TEST_CASE("config round-trips through json and derives coupled fields") {
  Config cfg = Config::defaults();
  cfg.world.v_max = 6.5;
  cfg.v.groups = 8;
  cfg.m.width = 96;
  cfg.finalize();
  const auto text = cfg.to_json();
  const Config back = Config::from_json(text);
  CHECK(back.world.v_max == 6.5);
  CHECK(back.reward.v_max == 6.5);
  CHECK(back.pid.v_max == 6.5);
  CHECK(back.v.groups == 8);
  CHECK(back.c.z_dim == back.v.latent_dim());
  CHECK(back.c.h_dim == 96);
  CHECK_THROWS_AS(Config::load_file("/nonexistent/config.json"), std::invalid_argument);
  CHECK_THROWS_AS(Config::from_json("{bad"), std::invalid_argument);
}

TEST_CASE("ema tracks with the window coefficient") {
  Ema ema(50);
  CHECK_FALSE(ema.ready());
  ema.add(10.0);
  CHECK(ema.value() == 10.0);
  ema.add(0.0);
  CHECK(ema.value() == doctest::Approx(10.0 * (1.0 - 2.0 / 51.0)));
}

TEST_CASE("line charts embed both the raw and the ema series") {
  const auto svg = plot::line_chart("demo", {{"reward", {1.0, 2.0}}}, 50);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("raw-reward") != std::string::npos);
  CHECK(svg.find("ema-reward") != std::string::npos);
}

TEST_CASE("grid iou") {
  std::vector<double> a{1, 0, 1, 0}, b{1, 1, 0, 0};
  CHECK(plot::grid_iou(a, a) == 1.0);
  CHECK(plot::grid_iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(plot::grid_iou({0, 0}, {0, 0}) == 1.0);
  CHECK_THROWS_AS(plot::grid_iou({0.0}, {0.0, 1.0}), std::invalid_argument);
}
