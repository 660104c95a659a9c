#include "rmbl/eval.hpp"

#include <atomic>
#include <filesystem>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "rmbl/agent.hpp"
#include "rmbl/plot.hpp"
#include "rmbl/sim/expert.hpp"

namespace rmbl::eval {

namespace fs = std::filesystem;

double infraction_penalty(const InfractionCounts& c, const Config::Eval& cfg) {
  double ip = 1.0;
  const auto apply = [&](int count, double coeff) {
    for (int i = 0; i < count; ++i) ip *= coeff;
  };
  apply(c.collision_pedestrian, cfg.coeff_pedestrian);
  apply(c.collision_vehicle, cfg.coeff_vehicle);
  apply(c.collision_static, cfg.coeff_static);
  apply(c.red_light, cfg.coeff_red_light);
  apply(c.stop_sign, cfg.coeff_stop_sign);
  apply(c.off_road, cfg.coeff_off_road);
  apply(c.agent_blocked, cfg.coeff_blocked);
  apply(c.route_timeout, cfg.coeff_timeout);
  return ip;
}

double driving_score(double rc_percent, double ip) { return rc_percent * ip; }

EpisodeMetrics run_episode(const Policy& policy, const sim::ScenarioSpec& spec, const Config& cfg,
                           std::uint64_t seed, const std::string& episode_log_path) {
  sim::EnvSession env(spec, cfg.world, cfg.reward, seed);
  sim::Observation obs = env.reset();

  std::ofstream log;
  if (!episode_log_path.empty()) {
    log.open(episode_log_path, std::ios::trunc);
    log << "t,x,y,psi,v,d_lat,theta_diff,v_lon,rc,r_speed,r_distance,r_dev_angle,"
           "r_dev_distance,r_step,r_term,collision,off_lane,timeout,stop_violation\n";
    log << std::setprecision(17);
  }

  EpisodeMetrics m;
  double reward_sum = 0.0;
  bool first = true;
  sim::EnvSession::StepResult last;
  while (!env.world().done()) {
    const auto controls = policy(env.world(), obs, first);
    first = false;
    last = env.step(controls);
    obs = last.obs;
    ++m.steps;
    reward_sum += last.reward.r_step;

    const auto& ev = last.events;
    if (ev.collision) {
      if (ev.collision_kind == "pedestrian") {
        ++m.infractions.collision_pedestrian;
      } else if (ev.collision_kind == "vehicle") {
        ++m.infractions.collision_vehicle;
      } else {
        ++m.infractions.collision_static;
      }
    }
    if (ev.off_lane) ++m.infractions.off_road;
    if (ev.stop_violation) {
      if (ev.stop_violation_kind == "stop") {
        ++m.infractions.stop_sign;
      } else {
        ++m.infractions.red_light;
      }
    }
    if (ev.timeout) {
      if (env.world().ego().v < cfg.eval.blocked_speed) {
        ++m.infractions.agent_blocked;
      } else {
        ++m.infractions.route_timeout;
      }
    }

    if (log.is_open()) {
      const auto& ego = env.world().ego();
      log << env.world().step_count() << ',' << ego.x << ',' << ego.y << ',' << ego.heading << ','
          << ego.v << ',' << ev.d_lat << ',' << ev.theta_diff << ',' << ev.v_lon << ',' << ev.rc
          << ',' << last.reward.r_speed << ',' << last.reward.r_distance << ','
          << last.reward.r_dev_angle << ',' << last.reward.r_dev_distance << ','
          << last.reward.r_step << ',' << last.reward.r_term << ',' << ev.collision << ','
          << ev.off_lane << ',' << ev.timeout << ',' << ev.stop_violation << '\n';
    }
  }
  // running out of budget without finishing counts against the route clock
  if (last.truncated) {
    ++m.infractions.route_timeout;
  }

  m.completed = last.completed;
  m.rc = last.events.rc * 100.0;
  m.km = env.world().ego().d / 1000.0;
  m.ip = infraction_penalty(m.infractions, cfg.eval);
  m.ds = driving_score(m.rc, m.ip);
  m.mean_step_reward = m.steps > 0 ? reward_sum / m.steps : 0.0;
  return m;
}

SuiteReport run_suite(const PolicyFactory& make_policy, const std::vector<std::string>& templates,
                      int seeds, const Config& cfg, const std::string& out_dir) {
  struct Job {
    std::string scenario;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& tpl : templates) {
    for (int s = 0; s < seeds; ++s) {
      jobs.push_back({tpl, cfg.seed + static_cast<std::uint64_t>(s)});
    }
  }
  std::vector<EpisodeRow> rows(jobs.size());

  const int workers = std::max(1, std::min<int>(cfg.eval.parallel_episodes,
                                                static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) break;
      const auto& job = jobs[i];
      const auto spec = sim::make_scenario(job.scenario, job.seed);
      std::string log_path;
      if (!out_dir.empty()) {
        log_path = (fs::path(out_dir) /
                    ("episode_" + job.scenario + "_" + std::to_string(job.seed) + ".csv"))
                       .string();
      }
      Policy policy = make_policy();
      rows[i] = {job.scenario, job.seed, run_episode(policy, spec, cfg, job.seed, log_path)};
    }
  };
  if (!out_dir.empty()) fs::create_directories(out_dir);
  if (workers == 1) {
    worker();
  } else {
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SuiteReport report;
  report.episodes = std::move(rows);
  std::map<std::string, SuiteReport::ScenarioRow> agg;
  double rc_sum = 0.0, ip_sum = 0.0, ds_sum = 0.0;
  for (const auto& row : report.episodes) {
    auto& a = agg[row.scenario];
    a.scenario = row.scenario;
    a.mean_rc += row.metrics.rc;
    a.mean_ip += row.metrics.ip;
    a.mean_ds += row.metrics.ds;
    ++a.count;
    rc_sum += row.metrics.rc;
    ip_sum += row.metrics.ip;
    ds_sum += row.metrics.ds;
  }
  for (auto& [name, a] : agg) {
    a.mean_rc /= a.count;
    a.mean_ip /= a.count;
    a.mean_ds /= a.count;
    report.per_scenario.push_back(a);
  }
  const double n = static_cast<double>(report.episodes.size());
  if (n > 0) {
    report.mean_rc = rc_sum / n;
    report.mean_ip = ip_sum / n;
    report.route_averaged_ds = ds_sum / n;
    report.ds_of_means = report.mean_rc * report.mean_ip;
  }
  return report;
}

void write_report(const SuiteReport& report, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream csv(fs::path(dir) / "report.csv", std::ios::trunc);
    csv << std::setprecision(17);
    csv << "scenario,seed,rc,ip,ds,completed,steps,km,collision_pedestrian,collision_vehicle,"
           "collision_static,red_light,stop_sign,off_road,agent_blocked,route_timeout,"
           "rate_collisions_per_km\n";
    for (const auto& row : report.episodes) {
      const auto& m = row.metrics;
      const int collisions = m.infractions.collision_pedestrian +
                             m.infractions.collision_vehicle + m.infractions.collision_static;
      csv << row.scenario << ',' << row.seed << ',' << m.rc << ',' << m.ip << ',' << m.ds << ','
          << m.completed << ',' << m.steps << ',' << m.km << ','
          << m.infractions.collision_pedestrian << ',' << m.infractions.collision_vehicle << ','
          << m.infractions.collision_static << ',' << m.infractions.red_light << ','
          << m.infractions.stop_sign << ',' << m.infractions.off_road << ','
          << m.infractions.agent_blocked << ',' << m.infractions.route_timeout << ','
          << m.rate_per_km(collisions) << '\n';
    }
  }
  {
    std::ofstream txt(fs::path(dir) / "report.txt", std::ios::trunc);
    txt << std::fixed << std::setprecision(2);
    txt << std::left << std::setw(22) << "scenario" << std::right << std::setw(10) << "RC(%)"
        << std::setw(10) << "IP" << std::setw(10) << "DS" << std::setw(8) << "runs" << "\n";
    for (const auto& a : report.per_scenario) {
      txt << std::left << std::setw(22) << a.scenario << std::right << std::setw(10) << a.mean_rc
          << std::setw(10) << a.mean_ip << std::setw(10) << a.mean_ds << std::setw(8) << a.count
          << "\n";
    }
    txt << "\n";
    txt << "route-averaged DS (mean of per-episode DS): " << report.route_averaged_ds << "\n";
    txt << "DS of means (mean RC x mean IP):            " << report.ds_of_means << "\n";
  }
}

PolicyFactory expert_policy_factory(const Config& cfg) {
  return [cfg]() -> Policy {
    auto pid = std::make_shared<PidState>();
    return [cfg, pid](const sim::World& world, const sim::Observation&, bool first) {
      if (first) *pid = PidState{};
      const auto wp = scripted_expert(world, cfg.expert);
      return pid_control(wp, world.ego().v, *pid, cfg.pid, cfg.world.dt);
    };
  };
}

ImaginationReport imagination_report(const Config& cfg, const std::string& checkpoint,
                                     const std::string& scenario, std::uint64_t scenario_seed,
                                     int horizon, const std::string& out_dir) {
  AgentStack agent(cfg, cfg.seed);
  agent.load_checkpoint(checkpoint);
  auto& v = agent.vmodel();
  auto& m = agent.mmodel();

  sim::EnvSession env(sim::make_scenario(scenario, scenario_seed), cfg.world, cfg.reward,
                      scenario_seed);
  sim::Observation obs = env.reset();
  PidState pid;
  RngStream z_rng = RngStream::from_name("viz.z", cfg.seed);

  const int context = cfg.m.context;
  std::vector<std::vector<double>> zs, actions, truths;
  while (static_cast<int>(zs.size()) < context + horizon && !env.world().done()) {
    std::vector<const sim::Observation*> ptr{&obs};
    Tensor z = v.sample_latent(v.encode_logits(ptr), false, &z_rng);
    const auto wp = scripted_expert(env.world(), cfg.expert);
    const auto [ur, uphi] = waypoint_to_unit(wp, cfg.c.bounds);
    zs.push_back(z.values());
    actions.push_back({ur, uphi});
    truths.push_back(obs.target);
    const auto r = env.step(pid_control(wp, env.world().ego().v, pid, cfg.pid, cfg.world.dt));
    obs = r.obs;
  }
  if (static_cast<int>(zs.size()) < context + horizon) {
    throw std::runtime_error("imagination_report: episode shorter than context + horizon");
  }

  std::vector<std::vector<double>> ctx_z(zs.begin(), zs.begin() + context);
  std::vector<std::vector<double>> ctx_a(actions.begin(), actions.begin() + context);
  std::vector<std::vector<double>> future(actions.begin() + context,
                                          actions.begin() + context + horizon);
  const auto imagined = m.imagine(v, ctx_z, ctx_a, future, horizon, true, z_rng);

  ImaginationReport report;
  std::vector<std::vector<double>> pred_tiles, truth_tiles;
  std::vector<std::string> labels;
  for (int k = 0; k < horizon; ++k) {
    const auto& decoded = imagined.decoded[static_cast<std::size_t>(k)];
    for (double x : decoded) {
      if (std::isnan(x)) report.finite = false;
    }
    const auto& truth = truths[static_cast<std::size_t>(context + k)];
    report.iou.push_back(plot::grid_iou(decoded, truth));
    pred_tiles.push_back(decoded);
    truth_tiles.push_back(truth);
    labels.push_back("t+" + std::to_string(k));
  }
  double sum = 0.0;
  for (double x : report.iou) sum += x;
  report.mean_iou = horizon > 0 ? sum / horizon : 0.0;
  report.one_step_iou = horizon > 0 ? report.iou.front() : 0.0;

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "imagination_iou.csv");
    csv << "step,iou\n";
    for (int k = 0; k < horizon; ++k) csv << k << ',' << report.iou[static_cast<std::size_t>(k)] << '\n';
    plot::write_file((fs::path(out_dir) / "imagination_strip.svg").string(),
                     plot::grid_strip(pred_tiles, cfg.world.grid.bev_channels,
                                      cfg.world.grid.height, cfg.world.grid.width, labels));
    plot::write_file((fs::path(out_dir) / "truth_strip.svg").string(),
                     plot::grid_strip(truth_tiles, cfg.world.grid.bev_channels,
                                      cfg.world.grid.height, cfg.world.grid.width, labels));
  }
  return report;
}

PolicyFactory checkpoint_policy_factory(const Config& cfg, const std::string& checkpoint,
                                        bool deterministic, std::uint64_t act_seed) {
  return [cfg, checkpoint, deterministic, act_seed]() -> Policy {
    auto agent = std::make_shared<AgentStack>(cfg, cfg.seed);
    agent->load_checkpoint(checkpoint);
    auto rng = std::make_shared<RngStream>(RngStream::from_name("eval.act", act_seed));
    return [agent, rng, deterministic](const sim::World& world, const sim::Observation& obs,
                                       bool first) {
      if (first) agent->reset_episode();
      return agent->act(world, obs, deterministic, *rng).controls;
    };
  };
}

}  // namespace rmbl::eval
