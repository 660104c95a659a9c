#include "rmbl/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace rmbl {

using nlohmann::json;

Config Config::defaults() {
  Config cfg;
  cfg.finalize();
  return cfg;
}

void Config::finalize() {
  v.grid = world.grid;
  m.groups = v.groups;
  m.classes = v.classes;
  c.z_dim = v.latent_dim();
  c.h_dim = m.width;
  reward.v_max = world.v_max;
  pid.v_max = world.v_max;
  expert.v_max = world.v_max;
  expert.lookahead_time = pid.lookahead_time;
  expert.r_max = c.bounds.r_max;
  expert.phi_max = c.bounds.phi_max;
  mask.corridor_half_width = world.ego_width * 0.5;
  if (world.grid.height % v.patch != 0 || world.grid.width % v.patch != 0) {
    throw std::invalid_argument("config: grid dims must be divisible by the V patch size");
  }
}

namespace {

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json schedule_json(const LrSchedule& s) {
  return {{"phase1_end", s.phase1_end}, {"phase2_end", s.phase2_end},
          {"actor_initial", s.actor_initial}, {"actor_final", s.actor_final},
          {"critic_initial", s.critic_initial}, {"critic_final", s.critic_final}};
}

void schedule_from(const json& j, LrSchedule& s) {
  get(j, "phase1_end", s.phase1_end);
  get(j, "phase2_end", s.phase2_end);
  get(j, "actor_initial", s.actor_initial);
  get(j, "actor_final", s.actor_final);
  get(j, "critic_initial", s.critic_initial);
  get(j, "critic_final", s.critic_final);
}

}  // namespace

std::string Config::to_json() const {
  json j;
  j["seed"] = seed;
  j["threads"] = threads;
  j["parallel_kernels"] = parallel_kernels;

  j["sim"] = {{"dt", world.dt},
              {"wheelbase", world.wheelbase},
              {"v_max", world.v_max},
              {"max_steer", world.max_steer},
              {"max_accel", world.max_accel},
              {"max_brake", world.max_brake},
              {"ego_length", world.ego_length},
              {"ego_width", world.ego_width},
              {"timeout_steps", world.timeout_steps},
              {"progress_eps", world.progress_eps},
              {"stuck_speed", world.stuck_speed},
              {"off_lane_limit", world.off_lane_limit},
              {"dropout_prob", world.dropout_prob},
              {"occlusion", world.occlusion},
              {"terminal_on_events", world.terminal_on_events},
              {"should_stop_line_dist", world.should_stop_line_dist},
              {"should_stop_obstacle_dist", world.should_stop_obstacle_dist},
              {"grid_height", world.grid.height},
              {"grid_width", world.grid.width},
              {"grid_cell", world.grid.cell},
              {"grid_ego_row", world.grid.ego_row},
              {"grid_ego_col", world.grid.ego_col},
              {"route_points", world.grid.route_points},
              {"route_spacing", world.grid.route_spacing}};

  j["reward"] = {{"k1", reward.k1},
                 {"k2", reward.k2},
                 {"distance_constant", reward.distance_constant},
                 {"stuck_horizon", reward.stuck_horizon},
                 {"decay_min", reward.decay_min},
                 {"eq3_literal", reward.eq3_literal}};

  j["v_model"] = {{"groups", v.groups},     {"classes", v.classes}, {"patch", v.patch},
                  {"embed", v.embed},       {"heads", v.heads},     {"enc_hidden", v.enc_hidden},
                  {"dec_hidden", v.dec_hidden}};

  j["m_model"] = {{"context", m.context}, {"width", m.width},
                  {"layers", m.layers},   {"heads", m.heads},
                  {"mlp_mult", m.mlp_mult}, {"action_embed", m.action_embed},
                  {"reward_dim", m.reward_dim}, {"head_hidden", m.head_hidden},
                  {"huber_delta", m.huber_delta}};

  j["c_model"] = {{"hidden", c.hidden},
                  {"r_max", c.bounds.r_max},
                  {"phi_max", c.bounds.phi_max},
                  {"log_std_min", c.log_std_min},
                  {"log_std_max", c.log_std_max},
                  {"log_std_init", c.log_std_init},
                  {"action_embed", c.action_embed},
                  {"discount", c.discount},
                  {"critic_polyak_tau", c.critic_polyak_tau},
                  {"anchor_tau", c.anchor_tau},
                  {"init_alpha", c.init_alpha},
                  {"target_entropy", c.target_entropy},
                  {"reward_scale", c.reward_scale}};

  j["pid"] = {{"kp_steer", pid.kp_steer},   {"ki_steer", pid.ki_steer},
              {"kd_steer", pid.kd_steer},   {"kp_speed", pid.kp_speed},
              {"ki_speed", pid.ki_speed},   {"brake_gain", pid.brake_gain},
              {"lookahead_time", pid.lookahead_time}, {"stop_radius", pid.stop_radius}};

  j["mask"] = {{"margin", mask.margin}, {"max_free", mask.max_free}};

  j["expert"] = {{"min_lookahead", expert.min_lookahead},
                 {"max_lookahead", expert.max_lookahead},
                 {"curve_gain", expert.curve_gain},
                 {"approach_margin", expert.approach_margin},
                 {"comfort_brake", expert.comfort_brake},
                 {"block_horizon", expert.block_horizon}};

  j["focal"] = {{"alpha", focal.alpha}, {"gamma", focal.gamma}};

  j["train"] = {{"offline_frames", train.offline_frames},
                {"collect_templates", train.collect_templates},
                {"expert_noise", train.expert_noise},
                {"frames_per_shard", train.frames_per_shard},
                {"holdout_fraction", train.holdout_fraction},
                {"v_epochs", train.v_epochs},
                {"v_batch", train.v_batch},
                {"v_lr", train.v_lr},
                {"k_kl_init", train.k_kl_init},
                {"kl_share_lo", train.kl_share_lo},
                {"kl_share_hi", train.kl_share_hi},
                {"m_phase_a_steps", train.m_phase_a_steps},
                {"m_phase_b_steps", train.m_phase_b_steps},
                {"m_batch", train.m_batch},
                {"m_lr", train.m_lr},
                {"k_dyn_init", train.k_dyn_init},
                {"k_rep_init", train.k_rep_init},
                {"k_rew_init", train.k_rew_init},
                {"k_con_init", train.k_con_init},
                {"dyn_share_lo", train.dyn_share_lo},
                {"dyn_share_hi", train.dyn_share_hi},
                {"rep_share_lo", train.rep_share_lo},
                {"rep_share_hi", train.rep_share_hi},
                {"rew_share_lo", train.rew_share_lo},
                {"rew_share_hi", train.rew_share_hi},
                {"con_share_lo", train.con_share_lo},
                {"con_share_hi", train.con_share_hi},
                {"share_update_every", train.share_update_every},
                {"m_warmup_steps", train.m_warmup_steps},
                {"il_epochs", train.il_epochs},
                {"il_batch", train.il_batch},
                {"il_lr", train.il_lr},
                {"rl_steps", train.rl_steps},
                {"rl_batch", train.rl_batch},
                {"rl_workers", train.rl_workers},
                {"warmup_steps", train.warmup_steps},
                {"updates_per_step", train.updates_per_step},
                {"replay_capacity", train.replay_capacity},
                {"lr_schedule", schedule_json(train.lr_schedule)},
                {"rl_templates", train.rl_templates},
                {"baseline_episodes", train.baseline_episodes},
                {"snapshot_interval", train.snapshot_interval},
                {"ema_window", train.ema_window},
                {"anchor_enabled", train.anchor_enabled}};

  j["eval"] = {{"templates", eval.templates},
               {"seeds", eval.seeds},
               {"coeff_pedestrian", eval.coeff_pedestrian},
               {"coeff_vehicle", eval.coeff_vehicle},
               {"coeff_static", eval.coeff_static},
               {"coeff_red_light", eval.coeff_red_light},
               {"coeff_stop_sign", eval.coeff_stop_sign},
               {"coeff_off_road", eval.coeff_off_road},
               {"coeff_blocked", eval.coeff_blocked},
               {"coeff_timeout", eval.coeff_timeout},
               {"agent_blocked_steps", eval.agent_blocked_steps},
               {"blocked_speed", eval.blocked_speed},
               {"deterministic_policy", eval.deterministic_policy},
               {"parallel_episodes", eval.parallel_episodes}};
  return j.dump(2);
}

Config Config::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: bad json: ") + e.what());
  }
  Config cfg;
  get(j, "seed", cfg.seed);
  get(j, "threads", cfg.threads);
  get(j, "parallel_kernels", cfg.parallel_kernels);

  if (j.contains("sim")) {
    const auto& s = j.at("sim");
    get(s, "dt", cfg.world.dt);
    get(s, "wheelbase", cfg.world.wheelbase);
    get(s, "v_max", cfg.world.v_max);
    get(s, "max_steer", cfg.world.max_steer);
    get(s, "max_accel", cfg.world.max_accel);
    get(s, "max_brake", cfg.world.max_brake);
    get(s, "ego_length", cfg.world.ego_length);
    get(s, "ego_width", cfg.world.ego_width);
    get(s, "timeout_steps", cfg.world.timeout_steps);
    get(s, "progress_eps", cfg.world.progress_eps);
    get(s, "stuck_speed", cfg.world.stuck_speed);
    get(s, "off_lane_limit", cfg.world.off_lane_limit);
    get(s, "dropout_prob", cfg.world.dropout_prob);
    get(s, "occlusion", cfg.world.occlusion);
    get(s, "terminal_on_events", cfg.world.terminal_on_events);
    get(s, "should_stop_line_dist", cfg.world.should_stop_line_dist);
    get(s, "should_stop_obstacle_dist", cfg.world.should_stop_obstacle_dist);
    get(s, "grid_height", cfg.world.grid.height);
    get(s, "grid_width", cfg.world.grid.width);
    get(s, "grid_cell", cfg.world.grid.cell);
    get(s, "grid_ego_row", cfg.world.grid.ego_row);
    get(s, "grid_ego_col", cfg.world.grid.ego_col);
    get(s, "route_points", cfg.world.grid.route_points);
    get(s, "route_spacing", cfg.world.grid.route_spacing);
  }
  if (j.contains("reward")) {
    const auto& s = j.at("reward");
    get(s, "k1", cfg.reward.k1);
    get(s, "k2", cfg.reward.k2);
    get(s, "distance_constant", cfg.reward.distance_constant);
    get(s, "stuck_horizon", cfg.reward.stuck_horizon);
    get(s, "decay_min", cfg.reward.decay_min);
    get(s, "eq3_literal", cfg.reward.eq3_literal);
  }
  if (j.contains("v_model")) {
    const auto& s = j.at("v_model");
    get(s, "groups", cfg.v.groups);
    get(s, "classes", cfg.v.classes);
    get(s, "patch", cfg.v.patch);
    get(s, "embed", cfg.v.embed);
    get(s, "heads", cfg.v.heads);
    get(s, "enc_hidden", cfg.v.enc_hidden);
    get(s, "dec_hidden", cfg.v.dec_hidden);
  }
  if (j.contains("m_model")) {
    const auto& s = j.at("m_model");
    get(s, "context", cfg.m.context);
    get(s, "width", cfg.m.width);
    get(s, "layers", cfg.m.layers);
    get(s, "heads", cfg.m.heads);
    get(s, "mlp_mult", cfg.m.mlp_mult);
    get(s, "action_embed", cfg.m.action_embed);
    get(s, "reward_dim", cfg.m.reward_dim);
    get(s, "head_hidden", cfg.m.head_hidden);
    get(s, "huber_delta", cfg.m.huber_delta);
  }
  if (j.contains("c_model")) {
    const auto& s = j.at("c_model");
    get(s, "hidden", cfg.c.hidden);
    get(s, "r_max", cfg.c.bounds.r_max);
    get(s, "phi_max", cfg.c.bounds.phi_max);
    get(s, "log_std_min", cfg.c.log_std_min);
    get(s, "log_std_max", cfg.c.log_std_max);
    get(s, "log_std_init", cfg.c.log_std_init);
    get(s, "action_embed", cfg.c.action_embed);
    get(s, "discount", cfg.c.discount);
    get(s, "critic_polyak_tau", cfg.c.critic_polyak_tau);
    get(s, "anchor_tau", cfg.c.anchor_tau);
    get(s, "init_alpha", cfg.c.init_alpha);
    get(s, "target_entropy", cfg.c.target_entropy);
    get(s, "reward_scale", cfg.c.reward_scale);
  }
  if (j.contains("pid")) {
    const auto& s = j.at("pid");
    get(s, "kp_steer", cfg.pid.kp_steer);
    get(s, "ki_steer", cfg.pid.ki_steer);
    get(s, "kd_steer", cfg.pid.kd_steer);
    get(s, "kp_speed", cfg.pid.kp_speed);
    get(s, "ki_speed", cfg.pid.ki_speed);
    get(s, "brake_gain", cfg.pid.brake_gain);
    get(s, "lookahead_time", cfg.pid.lookahead_time);
    get(s, "stop_radius", cfg.pid.stop_radius);
  }
  if (j.contains("mask")) {
    const auto& s = j.at("mask");
    get(s, "margin", cfg.mask.margin);
    get(s, "max_free", cfg.mask.max_free);
  }
  if (j.contains("expert")) {
    const auto& s = j.at("expert");
    get(s, "min_lookahead", cfg.expert.min_lookahead);
    get(s, "max_lookahead", cfg.expert.max_lookahead);
    get(s, "curve_gain", cfg.expert.curve_gain);
    get(s, "approach_margin", cfg.expert.approach_margin);
    get(s, "comfort_brake", cfg.expert.comfort_brake);
    get(s, "block_horizon", cfg.expert.block_horizon);
  }
  if (j.contains("focal")) {
    const auto& s = j.at("focal");
    get(s, "alpha", cfg.focal.alpha);
    get(s, "gamma", cfg.focal.gamma);
  }
  if (j.contains("train")) {
    const auto& s = j.at("train");
    auto& t = cfg.train;
    get(s, "offline_frames", t.offline_frames);
    get(s, "collect_templates", t.collect_templates);
    get(s, "expert_noise", t.expert_noise);
    get(s, "frames_per_shard", t.frames_per_shard);
    get(s, "holdout_fraction", t.holdout_fraction);
    get(s, "v_epochs", t.v_epochs);
    get(s, "v_batch", t.v_batch);
    get(s, "v_lr", t.v_lr);
    get(s, "k_kl_init", t.k_kl_init);
    get(s, "kl_share_lo", t.kl_share_lo);
    get(s, "kl_share_hi", t.kl_share_hi);
    get(s, "m_phase_a_steps", t.m_phase_a_steps);
    get(s, "m_phase_b_steps", t.m_phase_b_steps);
    get(s, "m_batch", t.m_batch);
    get(s, "m_lr", t.m_lr);
    get(s, "k_dyn_init", t.k_dyn_init);
    get(s, "k_rep_init", t.k_rep_init);
    get(s, "k_rew_init", t.k_rew_init);
    get(s, "k_con_init", t.k_con_init);
    get(s, "dyn_share_lo", t.dyn_share_lo);
    get(s, "dyn_share_hi", t.dyn_share_hi);
    get(s, "rep_share_lo", t.rep_share_lo);
    get(s, "rep_share_hi", t.rep_share_hi);
    get(s, "rew_share_lo", t.rew_share_lo);
    get(s, "rew_share_hi", t.rew_share_hi);
    get(s, "con_share_lo", t.con_share_lo);
    get(s, "con_share_hi", t.con_share_hi);
    get(s, "share_update_every", t.share_update_every);
    get(s, "m_warmup_steps", t.m_warmup_steps);
    get(s, "il_epochs", t.il_epochs);
    get(s, "il_batch", t.il_batch);
    get(s, "il_lr", t.il_lr);
    get(s, "rl_steps", t.rl_steps);
    get(s, "rl_batch", t.rl_batch);
    get(s, "rl_workers", t.rl_workers);
    get(s, "warmup_steps", t.warmup_steps);
    get(s, "updates_per_step", t.updates_per_step);
    get(s, "replay_capacity", t.replay_capacity);
    if (s.contains("lr_schedule")) schedule_from(s.at("lr_schedule"), t.lr_schedule);
    get(s, "rl_templates", t.rl_templates);
    get(s, "baseline_episodes", t.baseline_episodes);
    get(s, "snapshot_interval", t.snapshot_interval);
    get(s, "ema_window", t.ema_window);
    get(s, "anchor_enabled", t.anchor_enabled);
  }
  if (j.contains("eval")) {
    const auto& s = j.at("eval");
    auto& e = cfg.eval;
    get(s, "templates", e.templates);
    get(s, "seeds", e.seeds);
    get(s, "coeff_pedestrian", e.coeff_pedestrian);
    get(s, "coeff_vehicle", e.coeff_vehicle);
    get(s, "coeff_static", e.coeff_static);
    get(s, "coeff_red_light", e.coeff_red_light);
    get(s, "coeff_stop_sign", e.coeff_stop_sign);
    get(s, "coeff_off_road", e.coeff_off_road);
    get(s, "coeff_blocked", e.coeff_blocked);
    get(s, "coeff_timeout", e.coeff_timeout);
    get(s, "agent_blocked_steps", e.agent_blocked_steps);
    get(s, "blocked_speed", e.blocked_speed);
    get(s, "deterministic_policy", e.deterministic_policy);
    get(s, "parallel_episodes", e.parallel_episodes);
  }
  cfg.finalize();
  return cfg;
}

Config Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("config: cannot open '" + path + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace rmbl
