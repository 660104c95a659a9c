// Command-line front end: offline data collection, the staged training
// pipeline, scenario-suite evaluation, imagination visualizations and trace
// plotting.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rmbl/agent.hpp"
#include "rmbl/checkpoint.hpp"
#include "rmbl/config.hpp"
#include "rmbl/data.hpp"
#include "rmbl/eval.hpp"
#include "rmbl/kernels.hpp"
#include "rmbl/plot.hpp"
#include "rmbl/sim/expert.hpp"
#include "rmbl/sim/session.hpp"
#include "rmbl/trainer.hpp"

namespace fs = std::filesystem;
using namespace rmbl;

namespace {

constexpr std::uint64_t kSeedUnset = ~0ull;

Config load_config(const std::string& path, std::uint64_t seed_override, bool deterministic) {
  Config cfg = path.empty() ? Config::defaults() : Config::load_file(path);
  if (seed_override != kSeedUnset) cfg.seed = seed_override;
  if (deterministic) {
    cfg.train.rl_workers = 1;
    cfg.eval.parallel_episodes = 1;
  }
  kernels::set_parallel(cfg.parallel_kernels);
  if (cfg.threads > 0) kernels::set_threads(cfg.threads);
  return cfg;
}

void emit_reconstruction_previews(const Config& cfg, const std::string& data_dir,
                                  const std::string& ckpt, const std::string& out_path) {
  const Dataset ds = Dataset::load_dir(data_dir);
  if (ds.size() == 0) return;
  RngStream init = RngStream::from_name("init.v", cfg.seed);
  VModel v(cfg.v, init);
  load_into(load_checkpoint(ckpt), "", v.params());

  std::vector<std::vector<double>> tiles;
  std::vector<std::string> labels;
  const std::size_t stride = std::max<std::size_t>(1, ds.size() / 4);
  for (std::size_t i = 0; i < ds.size() && tiles.size() < 8; i += stride) {
    const auto obs = ds.observation(i);
    std::vector<const sim::Observation*> ptr{&obs};
    Tensor z = v.sample_latent(v.encode_logits(ptr), true, nullptr);
    Tensor probs = sigmoid(v.decode(z));
    tiles.push_back(obs.target);
    labels.push_back("truth " + std::to_string(i));
    tiles.push_back(probs.values());
    labels.push_back("recon " + std::to_string(i));
  }
  plot::write_file(out_path, plot::grid_strip(tiles, cfg.world.grid.bev_channels,
                                              cfg.world.grid.height, cfg.world.grid.width,
                                              labels));
}

int run_rollout_viz(const Config& cfg, const std::string& ckpt, const std::string& scenario,
                    std::uint64_t scenario_seed, int horizon, const std::string& out_dir) {
  const auto report =
      eval::imagination_report(cfg, ckpt, scenario, scenario_seed, horizon, out_dir);
  std::cout << "rollout-viz: mean IoU over " << horizon << " steps = " << report.mean_iou
            << (report.finite ? "" : " (NaN encountered!)") << "\n";
  return report.finite ? 0 : 1;
}

int run_plot(const std::string& traces_path, int ema_window, const std::string& out_dir) {
  std::ifstream in(traces_path);
  if (!in) {
    std::cerr << "plot: cannot open '" << traces_path << "'\n";
    return 1;
  }
  fs::create_directories(out_dir);
  std::string header;
  std::getline(in, header);
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  const auto col_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (cols[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int c_stage = col_of("stage"), c_loss = col_of("loss");
  const int c_reward = col_of("reward_raw"), c_rc = col_of("rc_raw");

  std::vector<double> reward, rc;
  std::map<std::string, std::vector<double>> losses;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != cols.size()) continue;
    const std::string stage = c_stage >= 0 ? cells[static_cast<std::size_t>(c_stage)] : "";
    if (stage == "rl" && c_reward >= 0) {
      reward.push_back(std::stod(cells[static_cast<std::size_t>(c_reward)]));
      rc.push_back(std::stod(cells[static_cast<std::size_t>(c_rc)]));
    } else if (c_loss >= 0 && !stage.empty() && stage != "rl_baseline" && stage != "rl_update") {
      losses[stage].push_back(std::stod(cells[static_cast<std::size_t>(c_loss)]));
    }
  }

  bool wrote = false;
  if (!reward.empty()) {
    plot::write_file((fs::path(out_dir) / "step_reward.svg").string(),
                     plot::line_chart("episode step reward", {{"step_reward", reward}},
                                      ema_window));
    plot::write_file((fs::path(out_dir) / "route_completion.svg").string(),
                     plot::line_chart("route completion (%)", {{"route_completion", rc}},
                                      ema_window));
    wrote = true;
  }
  if (!losses.empty()) {
    std::vector<plot::Series> series;
    for (auto& [stage, values] : losses) series.push_back({stage, std::move(values)});
    plot::write_file((fs::path(out_dir) / "losses.svg").string(),
                     plot::line_chart("training loss", series, ema_window));
    wrote = true;
  }
  if (!wrote) {
    std::cerr << "plot: no plottable rows in '" << traces_path << "'\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"world-model driving stack on a 2-D micro simulator"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = kSeedUnset;
  bool deterministic = false;
  app.add_option("--config", config_path, "JSON config file (defaults when omitted)");
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_flag("--deterministic", deterministic,
               "single worker / single episode at a time for bitwise reproducibility");

  auto* collect_cmd = app.add_subcommand("collect", "record expert demonstrations as shards");
  int frames_override = -1;
  collect_cmd->add_option("--frames", frames_override, "override train.offline_frames");

  auto* vm_cmd = app.add_subcommand("pretrain-vm", "pretrain the V model, then the M model");
  std::string data_dir;
  vm_cmd->add_option("--data", data_dir, "dataset directory")->required();

  auto* il_cmd = app.add_subcommand("pretrain-il", "imitation-initialize the policy");
  std::string il_data, il_ckpt;
  il_cmd->add_option("--data", il_data, "dataset directory")->required();
  il_cmd->add_option("--checkpoint", il_ckpt, "V+M checkpoint")->required();

  auto* rl_cmd = app.add_subcommand("train-rl", "online RL fine-tuning");
  std::string rl_ckpt;
  int rl_steps = -1, rl_workers = -1;
  bool no_anchor = false;
  std::vector<std::string> rl_templates;
  rl_cmd->add_option("--checkpoint", rl_ckpt, "V+M+C checkpoint")->required();
  rl_cmd->add_option("--steps", rl_steps, "override train.rl_steps");
  rl_cmd->add_option("--workers", rl_workers, "override train.rl_workers");
  rl_cmd->add_option("--scenarios", rl_templates, "override train.rl_templates");
  rl_cmd->add_flag("--no-anchor", no_anchor, "ablation: drop the KL anchor term");

  auto* eval_cmd = app.add_subcommand("eval", "run the scenario suite and write reports");
  std::string eval_ckpt, eval_policy = "model";
  std::vector<std::string> eval_templates;
  int eval_seeds = -1;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint for the model policy");
  eval_cmd->add_option("--policy", eval_policy, "model | expert")
      ->check(CLI::IsMember({"model", "expert"}));
  eval_cmd->add_option("--scenarios", eval_templates, "override eval.templates");
  eval_cmd->add_option("--seeds", eval_seeds, "override eval.seeds");

  auto* viz_cmd = app.add_subcommand("rollout-viz", "autoregressive imagination strips");
  std::string viz_ckpt, viz_scenario = "straight";
  std::uint64_t viz_seed = 0;
  int viz_horizon = 56;
  viz_cmd->add_option("--checkpoint", viz_ckpt, "V+M checkpoint")->required();
  viz_cmd->add_option("--scenario", viz_scenario, "scenario template");
  viz_cmd->add_option("--scenario-seed", viz_seed, "scenario seed");
  viz_cmd->add_option("--horizon", viz_horizon, "imagined steps");

  auto* plot_cmd = app.add_subcommand("plot", "render training traces to SVG");
  std::string traces_path;
  int ema_window = 50;
  plot_cmd->add_option("--traces", traces_path, "traces.csv path")->required();
  plot_cmd->add_option("--ema", ema_window, "EMA window");

  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg = load_config(config_path, seed, deterministic);

    if (collect_cmd->parsed()) {
      if (frames_override >= 0) cfg.train.offline_frames = frames_override;
      const auto res = trainer::collect(cfg, out_dir);
      std::cout << "collected " << res.frames << " frames over " << res.episodes
                << " episodes into " << out_dir << "\n";
    } else if (vm_cmd->parsed()) {
      const auto v_dir = (fs::path(out_dir) / "v").string();
      const auto m_dir = (fs::path(out_dir) / "m").string();
      const auto vres = trainer::pretrain_v(cfg, data_dir, v_dir);
      std::cout << "V pretraining done, held-out cell accuracy " << vres.holdout_accuracy
                << "\n";
      emit_reconstruction_previews(cfg, data_dir, v_dir + "/checkpoint.rmbl",
                                   (fs::path(out_dir) / "reconstructions.svg").string());
      const auto mres =
          trainer::pretrain_m(cfg, data_dir, v_dir + "/checkpoint.rmbl", m_dir);
      std::cout << "M pretraining done, joint loss " << mres.phase_b_final << "\n";
      fs::copy_file(fs::path(m_dir) / "checkpoint.rmbl", fs::path(out_dir) / "checkpoint.rmbl",
                    fs::copy_options::overwrite_existing);
    } else if (il_cmd->parsed()) {
      const auto res = trainer::pretrain_il(cfg, il_data, il_ckpt, out_dir);
      std::cout << "IL pretraining done, held-out loss " << res.holdout_loss << "\n";
    } else if (rl_cmd->parsed()) {
      if (rl_steps >= 0) cfg.train.rl_steps = rl_steps;
      if (rl_workers >= 0) cfg.train.rl_workers = rl_workers;
      if (!rl_templates.empty()) cfg.train.rl_templates = rl_templates;
      if (no_anchor) cfg.train.anchor_enabled = false;
      const auto res = trainer::train_rl(cfg, rl_ckpt, out_dir);
      std::cout << "RL done: baseline " << res.il_baseline_step_reward << ", min EMA "
                << res.min_reward_ema << ", final EMA " << res.final_reward_ema << "\n";
    } else if (eval_cmd->parsed()) {
      if (!eval_templates.empty()) cfg.eval.templates = eval_templates;
      if (eval_seeds > 0) cfg.eval.seeds = eval_seeds;
      eval::PolicyFactory factory;
      if (eval_policy == "expert") {
        factory = eval::expert_policy_factory(cfg);
      } else {
        if (eval_ckpt.empty()) {
          std::cerr << "eval: --checkpoint is required for the model policy\n";
          return 1;
        }
        factory = eval::checkpoint_policy_factory(cfg, eval_ckpt,
                                                  cfg.eval.deterministic_policy, cfg.seed);
      }
      const auto report =
          eval::run_suite(factory, cfg.eval.templates, cfg.eval.seeds, cfg, out_dir);
      eval::write_report(report, out_dir);
      std::cout << "eval: mean RC " << report.mean_rc << "%, route-averaged DS "
                << report.route_averaged_ds << " (reports in " << out_dir << ")\n";
    } else if (viz_cmd->parsed()) {
      return run_rollout_viz(cfg, viz_ckpt, viz_scenario, viz_seed, viz_horizon, out_dir);
    } else if (plot_cmd->parsed()) {
      return run_plot(traces_path, ema_window, out_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
