#pragma once

// Down-scaled configuration shared by the pipeline-level tests: small grids,
// thin networks and short schedules so whole stages run in seconds.

#include "rmbl/config.hpp"

inline rmbl::Config tiny_pipeline_config(std::uint64_t seed = 0) {
  rmbl::Config cfg;
  cfg.seed = seed;
  cfg.world.grid.height = 16;
  cfg.world.grid.width = 16;
  cfg.world.grid.ego_row = 12;
  cfg.world.grid.ego_col = 8;
  cfg.world.grid.route_points = 6;
  cfg.world.grid.route_spacing = 3.0;

  cfg.v.groups = 4;
  cfg.v.classes = 8;
  cfg.v.patch = 4;
  cfg.v.embed = 16;
  cfg.v.heads = 2;
  cfg.v.enc_hidden = 64;
  cfg.v.dec_hidden = 64;

  cfg.m.context = 4;
  cfg.m.width = 32;
  cfg.m.layers = 1;
  cfg.m.heads = 2;
  cfg.m.mlp_mult = 2;
  cfg.m.action_embed = 8;
  cfg.m.head_hidden = 16;

  cfg.c.hidden = 64;
  cfg.c.action_embed = 8;

  cfg.train.offline_frames = 500;
  cfg.train.collect_templates = {"straight", "curve"};
  cfg.train.v_epochs = 2;
  cfg.train.v_batch = 16;
  cfg.train.m_phase_a_steps = 60;
  cfg.train.m_phase_b_steps = 30;
  cfg.train.m_batch = 3;
  cfg.train.m_warmup_steps = 20;
  cfg.train.share_update_every = 10;
  cfg.train.il_epochs = 3;
  cfg.train.il_batch = 32;
  cfg.train.rl_steps = 260;
  cfg.train.rl_batch = 16;
  cfg.train.rl_workers = 1;
  cfg.train.warmup_steps = 64;
  cfg.train.baseline_episodes = 2;
  cfg.train.rl_templates = {"straight"};
  cfg.train.lr_schedule.phase1_end = 40;
  cfg.train.lr_schedule.phase2_end = 120;
  cfg.train.ema_window = 10;

  cfg.eval.templates = {"straight"};
  cfg.eval.seeds = 1;
  cfg.eval.parallel_episodes = 1;

  cfg.finalize();
  return cfg;
}
