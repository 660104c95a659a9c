#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmbl/cmodel.hpp"
#include "rmbl/control.hpp"
#include "rmbl/losses.hpp"
#include "rmbl/mmodel.hpp"
#include "rmbl/rewards.hpp"
#include "rmbl/sim/expert.hpp"
#include "rmbl/sim/world.hpp"
#include "rmbl/vmodel.hpp"

namespace rmbl {

// Whole-run configuration. Loaded from a JSON file; absent keys keep their
// defaults. Shared quantities (tick length, top speed, action bounds, grid)
// are written once and propagated to the sections that consume them.
struct Config {
  std::uint64_t seed = 0;
  int threads = 0;          // 0 = OpenMP default
  bool parallel_kernels = true;

  sim::WorldParams world;
  rewards::RewardConfig reward;
  VModelConfig v;
  MModelConfig m;
  CModelConfig c;
  PidConfig pid;
  ActionMaskConfig mask;
  sim::ExpertConfig expert;
  losses::FocalParams focal;

  struct Train {
    int offline_frames = 20000;
    std::vector<std::string> collect_templates = {"straight", "curve", "junction_turn",
                                                  "obstacle_two_ways", "merge", "crossing"};
    double expert_noise = 0.2;
    int frames_per_shard = 4096;
    double holdout_fraction = 0.1;

    int v_epochs = 8;
    int v_batch = 32;
    double v_lr = 1e-3;
    double k_kl_init = 1e-4;
    double kl_share_lo = 0.05;
    double kl_share_hi = 0.10;

    int m_phase_a_steps = 1200;
    int m_phase_b_steps = 800;
    int m_batch = 6;
    double m_lr = 1e-3;
    double k_dyn_init = 0.3;
    double k_rep_init = 0.05;
    double k_rew_init = 0.3;
    double k_con_init = 0.3;
    double dyn_share_lo = 0.05, dyn_share_hi = 0.10;
    double rep_share_lo = 0.01, rep_share_hi = 0.05;
    double rew_share_lo = 0.05, rew_share_hi = 0.10;
    double con_share_lo = 0.05, con_share_hi = 0.10;
    int share_update_every = 100;
    int m_warmup_steps = 200;  // shares are steered (and judged) after this

    int il_epochs = 8;
    int il_batch = 64;
    double il_lr = 1e-3;

    int rl_steps = 50000;
    int rl_batch = 32;
    int rl_workers = 4;
    int warmup_steps = 300;
    int updates_per_step = 1;
    std::size_t replay_capacity = 100000;
    LrSchedule lr_schedule;
    std::vector<std::string> rl_templates = {"straight", "curve"};
    int baseline_episodes = 5;
    int snapshot_interval = 50;
    int ema_window = 50;
    bool anchor_enabled = true;
  } train;

  struct Eval {
    std::vector<std::string> templates = {"straight", "curve", "junction_turn",
                                          "obstacle_two_ways", "merge", "crossing"};
    int seeds = 3;
    double coeff_pedestrian = 0.50;
    double coeff_vehicle = 0.60;
    double coeff_static = 0.65;
    double coeff_red_light = 0.70;
    double coeff_stop_sign = 0.80;
    double coeff_off_road = 1.0;
    double coeff_blocked = 1.0;
    double coeff_timeout = 1.0;
    int agent_blocked_steps = 300;
    double blocked_speed = 0.5;  // timeout at lower speed counts as blocked
    bool deterministic_policy = true;
    int parallel_episodes = 2;
  } eval;

  static Config defaults();
  static Config load_file(const std::string& path);
  static Config from_json(const std::string& text);
  std::string to_json() const;

  // Re-derives the coupled fields after edits (latent dims, shared v_max...).
  void finalize();
};

}  // namespace rmbl
