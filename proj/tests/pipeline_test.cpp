#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rmbl/checkpoint.hpp"
#include "rmbl/trainer.hpp"
#include "test_config.hpp"

using namespace rmbl;
namespace fs = std::filesystem;

namespace {

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct PipelineDirs {
  fs::path root, data, v, m, il, rl;
};

PipelineDirs dirs(const std::string& tag) {
  PipelineDirs d;
  d.root = fs::temp_directory_path() / ("rmbl_pipeline_" + tag);
  d.data = d.root / "data";
  d.v = d.root / "v";
  d.m = d.root / "m";
  d.il = d.root / "il";
  d.rl = d.root / "rl";
  fs::remove_all(d.root);
  fs::create_directories(d.root);
  return d;
}

}  // namespace

TEST_CASE("tiny end-to-end pipeline trains, stays finite and reproduces bitwise") {
  const Config cfg = tiny_pipeline_config(7);
  auto d = dirs("main");

  // collect twice: identical shard bytes under the same seed
  const auto col = trainer::collect(cfg, d.data.string());
  CHECK(col.frames == cfg.train.offline_frames);
  CHECK(col.episodes > 0);
  {
    auto d2 = dirs("collect_repeat");
    trainer::collect(cfg, d2.data.string());
    CHECK(file_bytes(d.data / "shard_0000.rmbd") == file_bytes(d2.data / "shard_0000.rmbd"));
  }

  const auto vres = trainer::pretrain_v(cfg, d.data.string(), d.v.string());
  CHECK(vres.holdout_accuracy > 0.5);
  REQUIRE(vres.epoch_rec.size() == 2);
  CHECK(vres.epoch_rec[1] < vres.epoch_rec[0]);

  const auto mres = trainer::pretrain_m(cfg, d.data.string(),
                                        (d.v / "checkpoint.rmbl").string(), d.m.string());
  CHECK(std::isfinite(mres.phase_a_final));
  CHECK(std::isfinite(mres.phase_b_final));

  const auto ilres = trainer::pretrain_il(cfg, d.data.string(),
                                          (d.m / "checkpoint.rmbl").string(), d.il.string());
  CHECK(std::isfinite(ilres.holdout_loss));
  REQUIRE(ilres.epoch_loss.size() == 3);
  CHECK(ilres.epoch_loss.back() < ilres.epoch_loss.front());

  // the anchor leaves IL bitwise equal to the primary actor
  {
    const auto entries = load_checkpoint((d.il / "checkpoint.rmbl").string());
    for (const auto& [name, e] : entries) {
      if (name.rfind("anchor.", 0) == 0) {
        const auto& primary = entries.at(name.substr(7));
        CHECK(primary.values == e.values);
      }
    }
  }

  const auto rlres = trainer::train_rl(cfg, (d.il / "checkpoint.rmbl").string(), d.rl.string());
  CHECK(rlres.env_steps == cfg.train.rl_steps);
  CHECK(std::isfinite(rlres.il_baseline_step_reward));
  CHECK(fs::exists(d.rl / "checkpoint.rmbl"));
  CHECK(fs::exists(d.rl / "traces.csv"));
  CHECK(fs::exists(d.rl / "summary.json"));

  // single-worker RL is bitwise reproducible: traces and checkpoints match
  {
    auto d2 = dirs("rl_repeat");
    trainer::train_rl(cfg, (d.il / "checkpoint.rmbl").string(), d2.rl.string());
    CHECK(file_bytes(d.rl / "traces.csv") == file_bytes(d2.rl / "traces.csv"));
    CHECK(file_bytes(d.rl / "checkpoint.rmbl") == file_bytes(d2.rl / "checkpoint.rmbl"));
  }
}

TEST_CASE("multi-worker RL runs and fills the buffer") {
  Config cfg = tiny_pipeline_config(11);
  cfg.train.rl_steps = 150;
  cfg.train.rl_workers = 2;
  cfg.train.warmup_steps = 40;

  auto d = dirs("workers");
  trainer::collect(cfg, d.data.string());
  trainer::pretrain_v(cfg, d.data.string(), d.v.string());
  trainer::pretrain_m(cfg, d.data.string(), (d.v / "checkpoint.rmbl").string(), d.m.string());
  trainer::pretrain_il(cfg, d.data.string(), (d.m / "checkpoint.rmbl").string(), d.il.string());
  const auto rl = trainer::train_rl(cfg, (d.il / "checkpoint.rmbl").string(), d.rl.string());
  CHECK(rl.env_steps == cfg.train.rl_steps);
  CHECK(fs::exists(d.rl / "checkpoint.rmbl"));
}

TEST_CASE("share controller steers a factor into its band and never below zero") {
  trainer::ShareController ctl(1e-3, 0.05, 0.10);
  // component that the factor scales linearly; total dominated by a constant
  for (int i = 0; i < 200; ++i) {
    const double comp = 10.0;
    const double total = 1.0 + ctl.k() * comp;
    ctl.observe(comp, total);
    CHECK(ctl.k() > 0.0);
  }
  const double share = ctl.k() * 10.0 / (1.0 + ctl.k() * 10.0);
  CHECK(share >= 0.04);
  CHECK(share <= 0.11);

  // a component far too large gets pushed down, still never nonpositive
  trainer::ShareController high(1e3, 0.05, 0.10);
  for (int i = 0; i < 300; ++i) {
    const double total = 1.0 + high.k() * 10.0;
    high.observe(10.0, total);
  }
  CHECK(high.k() > 0.0);
  const double share2 = high.k() * 10.0 / (1.0 + high.k() * 10.0);
  CHECK(share2 <= 0.11);
}
