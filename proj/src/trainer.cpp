#include "rmbl/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rmbl/agent.hpp"
#include "rmbl/checkpoint.hpp"
#include "rmbl/kernels.hpp"
#include "rmbl/optim.hpp"
#include "rmbl/replay.hpp"
#include "rmbl/sim/expert.hpp"
#include "rmbl/sim/session.hpp"

namespace rmbl::trainer {

namespace fs = std::filesystem;
using nlohmann::json;

ShareController::ShareController(double k_init, double share_lo, double share_hi, double rate_cap,
                                 double min_component)
    : k_(k_init), lo_(share_lo), hi_(share_hi), rate_cap_(rate_cap),
      min_component_(min_component) {}

void ShareController::observe(double component_value, double total_value) {
  if (total_value <= 0.0 || component_value <= 0.0) return;
  last_share_ = k_ * component_value / total_value;
  if (component_value < min_component_) return;
  if (last_share_ < lo_ || last_share_ > hi_) {
    const double target = 0.5 * (lo_ + hi_);
    k_ *= std::clamp(target / last_share_, 1.0 / rate_cap_, rate_cap_);
  }
  k_ = std::clamp(k_, 1e-9, 1e9);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("trainer: cannot write '" + path + "'");
  out << text;
}

namespace {

void require_finite(double v, const char* component) {
  if (std::isnan(v) || std::isinf(v)) {
    throw std::runtime_error(std::string("trainer: non-finite value in ") + component + " loss");
  }
}

// One CSV for every stage; unused columns stay zero.
class TraceWriter {
 public:
  explicit TraceWriter(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("trainer: cannot write traces at '" + path + "'");
    out_ << "step,stage,loss,rec,dyn,rep,rew,con,critic,actor,kl_anchor,lr_actor,lr_critic,"
            "kl_share,reward_raw,rc_raw,reward_ema,rc_ema\n";
    out_ << std::setprecision(17);
  }

  struct Row {
    long step = 0;
    std::string stage;
    double loss = 0, rec = 0, dyn = 0, rep = 0, rew = 0, con = 0;
    double critic = 0, actor = 0, kl_anchor = 0;
    double lr_actor = 0, lr_critic = 0, kl_share = 0;
    double reward_raw = 0, rc_raw = 0, reward_ema = 0, rc_ema = 0;
  };

  void write(const Row& r) {
    out_ << r.step << ',' << r.stage << ',' << r.loss << ',' << r.rec << ',' << r.dyn << ','
         << r.rep << ',' << r.rew << ',' << r.con << ',' << r.critic << ',' << r.actor << ','
         << r.kl_anchor << ',' << r.lr_actor << ',' << r.lr_critic << ',' << r.kl_share << ','
         << r.reward_raw << ',' << r.rc_raw << ',' << r.reward_ema << ',' << r.rc_ema << '\n';
  }

 private:
  std::ofstream out_;
};

std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

// Deterministic mode of grouped categorical logits, as a one-hot.
std::vector<double> argmax_one_hot(const std::vector<double>& logits, int groups, int classes) {
  std::vector<double> out(logits.size(), 0.0);
  for (int g = 0; g < groups; ++g) {
    const double* lg = logits.data() + static_cast<std::size_t>(g) * classes;
    int pick = 0;
    for (int c = 1; c < classes; ++c) {
      if (lg[c] > lg[pick]) pick = c;
    }
    out[static_cast<std::size_t>(g) * classes + pick] = 1.0;
  }
  return out;
}

// One-hot draw from raw logits (values only, grouped categorical).
std::vector<double> sample_one_hot(const std::vector<double>& logits, int groups, int classes,
                                   RngStream& rng) {
  std::vector<double> out(logits.size(), 0.0);
  for (int g = 0; g < groups; ++g) {
    const double* lg = logits.data() + static_cast<std::size_t>(g) * classes;
    double mx = lg[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, lg[c]);
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) denom += std::exp(lg[c] - mx);
    const double u = rng.uniform();
    double cum = 0.0;
    int pick = classes - 1;
    for (int c = 0; c < classes; ++c) {
      cum += std::exp(lg[c] - mx) / denom;
      if (u < cum) {
        pick = c;
        break;
      }
    }
    out[static_cast<std::size_t>(g) * classes + pick] = 1.0;
  }
  return out;
}

// Encoder logits for every frame, batched.
std::vector<std::vector<double>> encode_all(const VModel& v, const Dataset& ds, int batch_size) {
  std::vector<std::vector<double>> cache(ds.size());
  std::vector<sim::Observation> obs_store;
  for (std::size_t begin = 0; begin < ds.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(ds.size(), begin + static_cast<std::size_t>(batch_size));
    obs_store.clear();
    obs_store.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) obs_store.push_back(ds.observation(i));
    std::vector<const sim::Observation*> ptrs;
    for (const auto& o : obs_store) ptrs.push_back(&o);
    const Tensor logits = v.encode_logits(ptrs);
    const int width = logits.cols();
    for (std::size_t i = begin; i < end; ++i) {
      const double* row = logits.values().data() + (i - begin) * static_cast<std::size_t>(width);
      cache[i].assign(row, row + width);
    }
  }
  return cache;
}

double v_cell_accuracy(const VModel& v, const Dataset& ds, std::size_t begin, std::size_t end,
                       int batch_size) {
  std::int64_t correct = 0, total = 0;
  std::vector<sim::Observation> obs_store;
  for (std::size_t b = begin; b < end; b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(end, b + static_cast<std::size_t>(batch_size));
    obs_store.clear();
    for (std::size_t i = b; i < e; ++i) obs_store.push_back(ds.observation(i));
    std::vector<const sim::Observation*> ptrs;
    for (const auto& o : obs_store) ptrs.push_back(&o);
    Tensor logits = v.encode_logits(ptrs);
    Tensor z = v.sample_latent(logits, true, nullptr);
    Tensor recon = v.decode(z);
    const int width = recon.cols();
    for (std::size_t i = b; i < e; ++i) {
      const double* row = recon.values().data() + (i - b) * static_cast<std::size_t>(width);
      const auto& target = ds.frame(i).target;
      for (int j = 0; j < width; ++j) {
        const bool pred = row[j] > 0.0;  // sigmoid(x) > 0.5 <=> x > 0
        const bool truth = target[static_cast<std::size_t>(j)] != 0;
        correct += pred == truth;
        ++total;
      }
    }
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

Tensor action_unit_tensor(const Dataset& ds, const std::vector<std::size_t>& starts, int t_len,
                          const ActionBounds& bounds) {
  std::vector<double> a;
  a.reserve(starts.size() * static_cast<std::size_t>(t_len) * 2);
  for (const auto s : starts) {
    for (int t = 0; t < t_len; ++t) {
      const auto& f = ds.frame(s + static_cast<std::size_t>(t));
      const auto [ur, uphi] =
          waypoint_to_unit({f.expert_wp[0], f.expert_wp[1]}, bounds);
      a.push_back(ur);
      a.push_back(uphi);
    }
  }
  return Tensor::from(std::move(a), {static_cast<int>(starts.size()) * t_len, 2});
}

}  // namespace

// ---------------------------------------------------------------------------
// collect
// ---------------------------------------------------------------------------

CollectResult collect(const Config& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  Dataset ds(cfg.world.grid);
  RngStream noise_root = RngStream::from_name("collect.noise", cfg.seed);

  CollectResult res;
  std::uint32_t ep = 0;
  while (res.frames < cfg.train.offline_frames) {
    const auto& tpl =
        cfg.train.collect_templates[ep % cfg.train.collect_templates.size()];
    const std::uint64_t ep_seed = cfg.seed * 1000003ull + ep;
    sim::EnvSession env(sim::make_scenario(tpl, ep_seed), cfg.world, cfg.reward, ep_seed);
    sim::Observation obs = env.reset();
    PidState pid;
    RngStream ep_noise = noise_root.split(ep);
    double prev_d = 0.0;
    std::uint32_t step = 0;
    bool completed = false;

    while (!env.world().done() && res.frames < cfg.train.offline_frames) {
      const auto wp = scripted_expert(env.world(), cfg.expert);
      auto controls = pid_control(wp, env.world().ego().v, pid, cfg.pid, cfg.world.dt);
      // uniform exploration noise on the executed steer and throttle
      const double n_steer = ep_noise.uniform(-cfg.train.expert_noise, cfg.train.expert_noise);
      const double n_thr = ep_noise.uniform(-cfg.train.expert_noise, cfg.train.expert_noise);
      controls.steer = std::clamp(controls.steer + n_steer, -1.0, 1.0);
      controls.throttle = std::clamp(controls.throttle + n_thr, 0.0, 1.0);

      const auto r = env.step(controls);

      Frame f;
      f.episode = ep;
      f.step = step;
      f.flags = 0;
      if (r.events.collision) f.flags |= kFlagCollision;
      if (r.events.off_lane) f.flags |= kFlagOffLane;
      if (r.events.timeout) f.flags |= kFlagTimeout;
      if (r.done) f.flags |= kFlagDone;
      if (r.should_stop) f.flags |= kFlagShouldStop;
      if (r.completed) f.flags |= kFlagCompleted;
      if (r.truncated) f.flags |= kFlagTruncated;
      f.speed = obs.speed;
      f.d_lat = r.events.d_lat;
      f.theta_diff = r.events.theta_diff;
      f.v_lon = r.events.v_lon;
      f.d = env.world().ego().d;
      f.rc = r.events.rc;
      f.phys[0] = r.events.v_lon;
      f.phys[1] = env.world().ego().d - prev_d;
      f.phys[2] = r.events.theta_diff;
      f.phys[3] = r.events.d_lat;
      f.r_step = r.reward.r_step;
      f.r_term = r.reward.r_term;
      f.expert_wp[0] = wp.radius;
      f.expert_wp[1] = wp.bearing;
      f.controls[0] = controls.steer;
      f.controls[1] = controls.throttle;
      f.controls[2] = controls.brake;
      f.route = obs.route;
      f.sensor.assign(obs.sensor.begin(), obs.sensor.end());
      f.target.assign(obs.target.begin(), obs.target.end());
      ds.append(std::move(f));

      prev_d = env.world().ego().d;
      obs = r.obs;
      ++step;
      ++res.frames;
      completed = r.completed;
    }

    // trailing observation so sequence windows can target the episode end
    Frame sentinel;
    sentinel.episode = ep;
    sentinel.step = step;
    sentinel.flags = kFlagSentinel;
    sentinel.speed = obs.speed;
    sentinel.route = obs.route;
    sentinel.sensor.assign(obs.sensor.begin(), obs.sensor.end());
    sentinel.target.assign(obs.target.begin(), obs.target.end());
    ds.append(std::move(sentinel));

    ++res.episodes;
    if (completed) ++res.completed_episodes;
    ++ep;
  }

  ds.save_shards(out_dir, static_cast<std::size_t>(cfg.train.frames_per_shard));

  json summary;
  summary["frames"] = res.frames;
  summary["episodes"] = res.episodes;
  summary["completed_episodes"] = res.completed_episodes;
  write_text_file((fs::path(out_dir) / "collect_summary.json").string(), summary.dump(2));
  return res;
}

// ---------------------------------------------------------------------------
// pretrain V
// ---------------------------------------------------------------------------

VResult pretrain_v(const Config& cfg, const std::string& data_dir, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const Dataset ds = Dataset::load_dir(data_dir);
  if (ds.size() < 16) {
    throw std::runtime_error("pretrain_v: dataset too small");
  }
  RngStream init = RngStream::from_name("init.v", cfg.seed);
  VModel v(cfg.v, init);
  Adam opt(v.params().tensors(), {.lr = cfg.train.v_lr});
  ShareController kkl(cfg.train.k_kl_init, cfg.train.kl_share_lo, cfg.train.kl_share_hi, 3.0,
                      1.0);

  const std::size_t holdout_begin =
      static_cast<std::size_t>(static_cast<double>(ds.size()) * (1.0 - cfg.train.holdout_fraction));
  RngStream sample_rng = RngStream::from_name("v.sample", cfg.seed);
  TraceWriter trace((fs::path(out_dir) / "traces.csv").string());

  VResult res;
  long gstep = 0;
  int share_checks = 0, share_ok = 0;
  std::vector<sim::Observation> obs_store;
  for (int epoch = 0; epoch < cfg.train.v_epochs; ++epoch) {
    const auto order =
        shuffled_indices(holdout_begin, RngStream::from_name("v.shuffle", cfg.seed).split(
                                            static_cast<std::uint64_t>(epoch)));
    double ep_rec = 0.0, ep_kl = 0.0;
    int batches = 0;
    for (std::size_t b = 0; b + cfg.train.v_batch <= order.size();
         b += static_cast<std::size_t>(cfg.train.v_batch)) {
      obs_store.clear();
      for (int i = 0; i < cfg.train.v_batch; ++i) {
        obs_store.push_back(ds.observation(order[b + static_cast<std::size_t>(i)]));
      }
      std::vector<const sim::Observation*> ptrs;
      for (const auto& o : obs_store) ptrs.push_back(&o);

      const auto loss = v.loss(ptrs, kkl.k(), cfg.focal, sample_rng);
      require_finite(loss.rec, "v reconstruction");
      require_finite(loss.kl, "v kl");
      v.params().zero_grad();
      backward(loss.total);
      opt.step();

      ep_rec += loss.rec;
      ep_kl += loss.kl;
      ++batches;
      ++gstep;
      if (gstep % 25 == 0) {
        TraceWriter::Row row;
        row.step = gstep;
        row.stage = "v";
        row.loss = loss.total.item();
        row.rec = loss.rec;
        row.dyn = loss.kl;  // raw KL value
        const double total = loss.rec + kkl.k() * loss.kl;
        row.kl_share = total > 0.0 ? kkl.k() * loss.kl / total : 0.0;
        trace.write(row);
        if (epoch > 0) {
          ++share_checks;
          if (row.kl_share >= cfg.train.kl_share_lo && row.kl_share <= cfg.train.kl_share_hi) {
            ++share_ok;
          }
        }
      }
    }
    ep_rec /= std::max(1, batches);
    ep_kl /= std::max(1, batches);
    res.epoch_rec.push_back(ep_rec);
    kkl.observe(ep_kl, ep_rec + kkl.k() * ep_kl);
  }

  res.final_k_kl = kkl.k();
  res.kl_share_ok_fraction = share_checks > 0 ? static_cast<double>(share_ok) / share_checks : 0.0;
  res.holdout_accuracy =
      v_cell_accuracy(v, ds, holdout_begin, ds.size(), cfg.train.v_batch);

  save_checkpoint((fs::path(out_dir) / "checkpoint.rmbl").string(), {{"", &v.params()}});

  json summary;
  summary["holdout_accuracy"] = res.holdout_accuracy;
  summary["final_k_kl"] = res.final_k_kl;
  summary["epoch_rec"] = res.epoch_rec;
  summary["kl_share_ok_fraction"] = res.kl_share_ok_fraction;
  write_text_file((fs::path(out_dir) / "summary.json").string(), summary.dump(2));
  return res;
}

// ---------------------------------------------------------------------------
// pretrain M
// ---------------------------------------------------------------------------

MResult pretrain_m(const Config& cfg, const std::string& data_dir, const std::string& v_ckpt,
                   const std::string& out_dir) {
  fs::create_directories(out_dir);
  const Dataset ds = Dataset::load_dir(data_dir);
  RngStream v_init = RngStream::from_name("init.v", cfg.seed);
  VModel v(cfg.v, v_init);
  load_into(load_checkpoint(v_ckpt), "", v.params());
  RngStream m_init = RngStream::from_name("init.m", cfg.seed);
  MModel m(cfg.m, m_init);

  const int t_len = cfg.m.context;
  const auto starts = ds.window_starts(t_len);
  if (starts.empty()) {
    throw std::runtime_error("pretrain_m: no sequence windows of the configured context length");
  }
  const auto cache = encode_all(v, ds, 64);
  const auto normalizer = losses::default_reward_normalizer(cfg.world.v_max, cfg.world.dt);

  Adam opt_m(m.params().tensors(), {.lr = cfg.train.m_lr});
  Adam opt_v(v.params().tensors(), {.lr = cfg.train.m_lr});
  // gentler rate cap: these adjust every share_update_every steps
  ShareController c_dyn(cfg.train.k_dyn_init, cfg.train.dyn_share_lo, cfg.train.dyn_share_hi, 1.5);
  ShareController c_rep(cfg.train.k_rep_init, cfg.train.rep_share_lo, cfg.train.rep_share_hi, 1.5);
  ShareController c_rew(cfg.train.k_rew_init, cfg.train.rew_share_lo, cfg.train.rew_share_hi, 1.5);
  ShareController c_con(cfg.train.k_con_init, cfg.train.con_share_lo, cfg.train.con_share_hi, 1.5);

  RngStream pick_rng = RngStream::from_name("m.pick", cfg.seed);
  RngStream z_rng = RngStream::from_name("m.z", cfg.seed);
  TraceWriter trace((fs::path(out_dir) / "traces.csv").string());

  const int batch = cfg.train.m_batch;
  const int rows = batch * t_len;

  std::vector<sim::Observation> obs_store;

  const auto const_inputs = [&](const std::vector<std::size_t>& chosen, MModel::LossInputs& in) {
    std::vector<double> target_next, reward, cont;
    target_next.reserve(static_cast<std::size_t>(rows) * cfg.world.grid.bev_size());
    for (const auto s : chosen) {
      for (int t = 1; t <= t_len; ++t) {
        const auto& nf = ds.frame(s + static_cast<std::size_t>(t));
        target_next.insert(target_next.end(), nf.target.begin(), nf.target.end());
      }
      for (int t = 0; t < t_len; ++t) {
        const auto& f = ds.frame(s + static_cast<std::size_t>(t));
        const auto norm = normalizer.normalize({f.phys[0], f.phys[1], f.phys[2], f.phys[3]});
        reward.insert(reward.end(), norm.begin(), norm.end());
        cont.push_back(f.continuation());
      }
    }
    in.target_next = Tensor::from(std::move(target_next), {rows, cfg.world.grid.bev_size()});
    in.reward = Tensor::from(std::move(reward), {rows, cfg.m.reward_dim});
    in.cont = Tensor::from(std::move(cont), {rows, 1});
    in.action = action_unit_tensor(ds, chosen, t_len, cfg.c.bounds);
    in.batch = batch;
    in.t = t_len;
  };

  const auto run_phase = [&](int steps, bool joint, long step_offset, double& final_loss) {
    Ema loss_ema(50);
    for (int s = 0; s < steps; ++s) {
      std::vector<std::size_t> chosen(static_cast<std::size_t>(batch));
      for (auto& c : chosen) {
        c = starts[static_cast<std::size_t>(pick_rng.next_u64() % starts.size())];
      }
      MModel::LossInputs in;
      const_inputs(chosen, in);

      if (!joint) {
        std::vector<double> zv, nv;
        zv.reserve(static_cast<std::size_t>(rows) * cfg.v.latent_dim());
        for (const auto st : chosen) {
          for (int t = 0; t < t_len; ++t) {
            const auto oh =
                sample_one_hot(cache[st + static_cast<std::size_t>(t)], cfg.v.groups,
                               cfg.v.classes, z_rng);
            zv.insert(zv.end(), oh.begin(), oh.end());
          }
          for (int t = 1; t <= t_len; ++t) {
            const auto& lg = cache[st + static_cast<std::size_t>(t)];
            nv.insert(nv.end(), lg.begin(), lg.end());
          }
        }
        in.z = Tensor::from(std::move(zv), {rows, cfg.v.latent_dim()});
        in.enc_next = Tensor::from(std::move(nv), {rows, cfg.v.latent_dim()});
      } else {
        obs_store.clear();
        obs_store.reserve(chosen.size() * static_cast<std::size_t>(t_len + 1));
        for (const auto st : chosen) {
          for (int t = 0; t <= t_len; ++t) {
            obs_store.push_back(ds.observation(st + static_cast<std::size_t>(t)));
          }
        }
        std::vector<const sim::Observation*> ptrs;
        for (const auto& o : obs_store) ptrs.push_back(&o);
        Tensor all_logits = v.encode_logits(ptrs);
        std::vector<Tensor> cur, nxt;
        for (int b = 0; b < batch; ++b) {
          cur.push_back(slice_rows(all_logits, b * (t_len + 1), t_len));
          nxt.push_back(slice_rows(all_logits, b * (t_len + 1) + 1, t_len));
        }
        in.z = v.sample_latent(concat_rows(cur), false, &z_rng);
        in.enc_next = concat_rows(nxt);
      }

      const MLossWeights w{c_dyn.k(), c_rep.k(), c_rew.k(), c_con.k()};
      const auto loss = m.loss(v, in, w, cfg.focal, z_rng);
      require_finite(loss.rec, "m reconstruction");
      require_finite(loss.dyn, "m dynamics");
      require_finite(loss.rep, "m representation");
      require_finite(loss.rew, "m reward");
      require_finite(loss.con, "m continuation");

      m.params().zero_grad();
      v.params().zero_grad();
      backward(loss.total);
      opt_m.step();
      if (joint) {
        opt_v.step();
      }

      const double total = loss.total.item();
      loss_ema.add(total);
      const long gstep = step_offset + s + 1;
      if (gstep > cfg.train.m_warmup_steps && gstep % cfg.train.share_update_every == 0) {
        c_dyn.observe(loss.dyn, total);
        c_rep.observe(loss.rep, total);
        c_rew.observe(loss.rew, total);
        c_con.observe(loss.con, total);
      }
      if (gstep % 25 == 0) {
        TraceWriter::Row row;
        row.step = gstep;
        row.stage = joint ? "m_joint" : "m_frozen";
        row.loss = total;
        row.rec = loss.rec;
        row.dyn = w.dyn * loss.dyn / std::max(total, 1e-12);
        row.rep = w.rep * loss.rep / std::max(total, 1e-12);
        row.rew = w.rew * loss.rew / std::max(total, 1e-12);
        row.con = w.con * loss.con / std::max(total, 1e-12);
        trace.write(row);
      }
      final_loss = loss_ema.value();
    }
  };

  MResult res;
  // Phase A: V frozen (its optimizer never steps), M learns alone.
  const auto v_before = v.params().snapshot();
  run_phase(cfg.train.m_phase_a_steps, false, 0, res.phase_a_final);
  const auto v_after = v.params().snapshot();
  for (std::size_t i = 0; i < v_before.size(); ++i) {
    if (v_before[i] != v_after[i]) {
      throw std::runtime_error("pretrain_m: V parameters moved during the frozen phase");
    }
  }
  // Phase B: joint fine-tuning through the live encoder.
  run_phase(cfg.train.m_phase_b_steps, true, cfg.train.m_phase_a_steps, res.phase_b_final);

  // Post-warmup share audit over the logged trace rows.
  {
    std::ifstream in((fs::path(out_dir) / "traces.csv").string());
    std::string line;
    std::getline(in, line);  // header
    int checks = 0, ok = 0;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() < 8) continue;
      const long step = std::stol(cells[0]);
      if (step <= cfg.train.m_warmup_steps) continue;
      const double dyn = std::stod(cells[4]), rep = std::stod(cells[5]);
      const double rew = std::stod(cells[6]), con = std::stod(cells[7]);
      ++checks;
      if (dyn >= cfg.train.dyn_share_lo && dyn <= cfg.train.dyn_share_hi &&
          rep >= cfg.train.rep_share_lo && rep <= cfg.train.rep_share_hi &&
          rew >= cfg.train.rew_share_lo && rew <= cfg.train.rew_share_hi &&
          con >= cfg.train.con_share_lo && con <= cfg.train.con_share_hi) {
        ++ok;
      }
    }
    res.share_ok_fraction = checks > 0 ? static_cast<double>(ok) / checks : 0.0;
  }

  save_checkpoint((fs::path(out_dir) / "checkpoint.rmbl").string(),
                  {{"", &v.params()}, {"", &m.params()}});
  json summary;
  summary["phase_a_final"] = res.phase_a_final;
  summary["phase_b_final"] = res.phase_b_final;
  summary["share_ok_fraction"] = res.share_ok_fraction;
  summary["k_dyn"] = c_dyn.k();
  summary["k_rep"] = c_rep.k();
  summary["k_rew"] = c_rew.k();
  summary["k_con"] = c_con.k();
  write_text_file((fs::path(out_dir) / "summary.json").string(), summary.dump(2));
  return res;
}

// ---------------------------------------------------------------------------
// pretrain IL
// ---------------------------------------------------------------------------

IlResult pretrain_il(const Config& cfg, const std::string& data_dir, const std::string& vm_ckpt,
                     const std::string& out_dir) {
  fs::create_directories(out_dir);
  const Dataset ds = Dataset::load_dir(data_dir);
  RngStream v_init = RngStream::from_name("init.v", cfg.seed);
  VModel v(cfg.v, v_init);
  RngStream m_init = RngStream::from_name("init.m", cfg.seed);
  MModel m(cfg.m, m_init);
  const auto entries = load_checkpoint(vm_ckpt);
  load_into(entries, "", v.params());
  load_into(entries, "", m.params());
  RngStream a_init = RngStream::from_name("init.actor", cfg.seed);
  Actor actor(cfg.c, a_init);

  // Features mirror the acting pipeline: the policy state at frame t is
  // [z_t, h_{t-1}] where h comes from the rolling (z, a) context. The policy
  // consumes the argmax latent; sampling stays a V/M training device.
  const auto cache = encode_all(v, ds, 64);
  std::vector<std::vector<double>> states;
  std::vector<std::array<double, 2>> labels;
  {
    std::deque<std::pair<std::vector<double>, std::array<double, 2>>> context;
    std::vector<double> h_prev(static_cast<std::size_t>(cfg.m.width), 0.0);
    std::uint32_t cur_episode = 0;
    bool have_episode = false;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const Frame& f = ds.frame(i);
      if (!have_episode || f.episode != cur_episode) {
        context.clear();
        h_prev.assign(static_cast<std::size_t>(cfg.m.width), 0.0);
        cur_episode = f.episode;
        have_episode = true;
      }
      if (f.sentinel()) continue;
      const auto z = argmax_one_hot(cache[i], cfg.v.groups, cfg.v.classes);
      std::vector<double> state;
      state.reserve(z.size() + h_prev.size());
      state.insert(state.end(), z.begin(), z.end());
      state.insert(state.end(), h_prev.begin(), h_prev.end());
      states.push_back(std::move(state));
      labels.push_back({f.expert_wp[0], f.expert_wp[1]});

      const auto [ur, uphi] = waypoint_to_unit({f.expert_wp[0], f.expert_wp[1]}, cfg.c.bounds);
      context.emplace_back(z, std::array<double, 2>{ur, uphi});
      while (static_cast<int>(context.size()) > cfg.m.context) context.pop_front();
      const int t = static_cast<int>(context.size());
      std::vector<double> zbuf, abuf;
      for (const auto& [zz, aa] : context) {
        zbuf.insert(zbuf.end(), zz.begin(), zz.end());
        abuf.push_back(aa[0]);
        abuf.push_back(aa[1]);
      }
      Tensor zt = Tensor::from(std::move(zbuf), {t, cfg.m.latent_dim()});
      Tensor at = Tensor::from(std::move(abuf), {t, 2});
      Tensor h = m.sequence_forward(m.mix(zt, at), 1, t);
      h_prev.assign(h.values().end() - cfg.m.width, h.values().end());
    }
  }

  const std::size_t n = states.size();
  const std::size_t holdout_begin =
      static_cast<std::size_t>(static_cast<double>(n) * (1.0 - cfg.train.holdout_fraction));
  Adam opt(actor.params().tensors(), {.lr = cfg.train.il_lr});
  TraceWriter trace((fs::path(out_dir) / "traces.csv").string());

  const auto batch_loss = [&](const std::vector<std::size_t>& idx, bool train) {
    const int b = static_cast<int>(idx.size());
    std::vector<double> sv, ev;
    sv.reserve(static_cast<std::size_t>(b) * cfg.c.state_dim());
    for (const auto i : idx) {
      sv.insert(sv.end(), states[i].begin(), states[i].end());
      ev.push_back(labels[i][0]);
      ev.push_back(labels[i][1]);
    }
    Tensor state = Tensor::from(std::move(sv), {b, cfg.c.state_dim()});
    Tensor expert = Tensor::from(std::move(ev), {b, 2});
    const auto out = actor.forward(state);
    Tensor unit = rmbl::tanh(out.mean);
    Tensor r = scale(add_scalar(slice_cols(unit, 0, 1), 1.0), cfg.c.bounds.r_max * 0.5);
    Tensor phi = scale(slice_cols(unit, 1, 1), cfg.c.bounds.phi_max);
    Tensor loss = il_loss(concat_cols({r, phi}), expert);
    if (train) {
      actor.params().zero_grad();
      backward(loss);
      opt.step();
    }
    return loss.item();
  };

  IlResult res;
  long gstep = 0;
  for (int epoch = 0; epoch < cfg.train.il_epochs; ++epoch) {
    const auto order = shuffled_indices(
        holdout_begin, RngStream::from_name("il.shuffle", cfg.seed).split(
                           static_cast<std::uint64_t>(epoch)));
    double ep_loss = 0.0;
    int batches = 0;
    for (std::size_t b = 0; b + cfg.train.il_batch <= order.size();
         b += static_cast<std::size_t>(cfg.train.il_batch)) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                   order.begin() + static_cast<std::ptrdiff_t>(b) +
                                       cfg.train.il_batch);
      const double l = batch_loss(idx, true);
      require_finite(l, "il");
      ep_loss += l;
      ++batches;
      ++gstep;
      if (gstep % 25 == 0) {
        TraceWriter::Row row;
        row.step = gstep;
        row.stage = "il";
        row.loss = l;
        trace.write(row);
      }
    }
    res.epoch_loss.push_back(ep_loss / std::max(1, batches));
  }

  // held-out loss
  {
    double sum = 0.0;
    int batches = 0;
    for (std::size_t b = holdout_begin; b + cfg.train.il_batch <= n;
         b += static_cast<std::size_t>(cfg.train.il_batch)) {
      std::vector<std::size_t> idx;
      for (int i = 0; i < cfg.train.il_batch; ++i) idx.push_back(b + static_cast<std::size_t>(i));
      sum += batch_loss(idx, false);
      ++batches;
    }
    res.holdout_loss = batches > 0 ? sum / batches : 0.0;
  }

  // the anchor leaves this stage bitwise equal to the primary
  RngStream anchor_init = RngStream::from_name("init.anchor", cfg.seed);
  Actor anchor(cfg.c, anchor_init);
  anchor.params().copy_from(actor.params());

  save_checkpoint((fs::path(out_dir) / "checkpoint.rmbl").string(),
                  {{"", &v.params()},
                   {"", &m.params()},
                   {"", &actor.params()},
                   {"anchor.", &anchor.params()}});
  json summary;
  summary["holdout_loss"] = res.holdout_loss;
  summary["epoch_loss"] = res.epoch_loss;
  summary["frames"] = n;
  write_text_file((fs::path(out_dir) / "summary.json").string(), summary.dump(2));
  return res;
}

// ---------------------------------------------------------------------------
// online RL
// ---------------------------------------------------------------------------

namespace {

struct EpisodeStat {
  double mean_step_reward = 0.0;
  double rc_percent = 0.0;
  int steps = 0;
};

SacBatch make_sac_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& idx,
                        int state_dim) {
  const int b = static_cast<int>(idx.size());
  std::vector<double> s, ns, a;
  SacBatch batch;
  s.reserve(static_cast<std::size_t>(b) * state_dim);
  ns.reserve(static_cast<std::size_t>(b) * state_dim);
  for (const auto i : idx) {
    const Transition& t = buffer.at(i);
    s.insert(s.end(), t.state.begin(), t.state.end());
    ns.insert(ns.end(), t.next_state.begin(), t.next_state.end());
    a.push_back(t.action_unit[0]);
    a.push_back(t.action_unit[1]);
    batch.reward.push_back(t.reward);
    batch.done.push_back(t.done);
  }
  batch.state = Tensor::from(std::move(s), {b, state_dim});
  batch.next_state = Tensor::from(std::move(ns), {b, state_dim});
  batch.action_unit = Tensor::from(std::move(a), {b, 2});
  return batch;
}

}  // namespace

RlResult train_rl(const Config& cfg, const std::string& vmc_ckpt, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const auto entries = load_checkpoint(vmc_ckpt);

  AgentStack agent(cfg, cfg.seed);
  load_into(entries, "", agent.vmodel().params());
  load_into(entries, "", agent.mmodel().params());
  load_into(entries, "", agent.actor().params());

  RngStream sac_init = RngStream::from_name("init.sac", cfg.seed);
  SacLearner learner(cfg.c, sac_init);
  learner.actor().params().copy_from(agent.actor().params());
  if (checkpoint_has_prefix(entries, "anchor.")) {
    load_into(entries, "anchor.", learner.anchor().params());
  } else {
    learner.init_anchor_from_actor();
  }
  learner.init_targets_from_critics();

  ReplayBuffer buffer(cfg.train.replay_capacity);
  TraceWriter trace((fs::path(out_dir) / "traces.csv").string());
  RngStream sample_rng = RngStream::from_name("rl.sample", cfg.seed);
  RngStream update_rng = RngStream::from_name("rl.update", cfg.seed);

  RlResult res;

  // IL baseline: deterministic episodes before any update.
  {
    double sum = 0.0;
    int count = 0;
    RngStream base_rng = RngStream::from_name("rl.baseline", cfg.seed);
    for (int b = 0; b < cfg.train.baseline_episodes; ++b) {
      const auto& tpl = cfg.train.rl_templates[b % cfg.train.rl_templates.size()];
      const std::uint64_t es = cfg.seed * 7919ull + static_cast<std::uint64_t>(b);
      sim::EnvSession env(sim::make_scenario(tpl, es), cfg.world, cfg.reward, es);
      sim::Observation obs = env.reset();
      agent.reset_episode();
      double rsum = 0.0;
      int steps = 0;
      while (!env.world().done()) {
        const auto act = agent.act(env.world(), obs, true, base_rng);
        const auto r = env.step(act.controls);
        rsum += r.reward.r_step;
        ++steps;
        obs = r.obs;
      }
      const double mean_r = steps > 0 ? rsum / steps : 0.0;
      sum += mean_r;
      ++count;
      TraceWriter::Row row;
      row.step = 0;
      row.stage = "rl_baseline";
      row.reward_raw = mean_r;
      row.rc_raw = env.world().project_route().rc * 100.0;
      trace.write(row);
    }
    res.il_baseline_step_reward = count > 0 ? sum / count : 0.0;
  }

  Ema ema_r(cfg.train.ema_window), ema_rc(cfg.train.ema_window);
  res.min_reward_ema = std::numeric_limits<double>::infinity();
  res.min_reward_ema_early = std::numeric_limits<double>::infinity();
  long updates = 0;

  const int workers = std::max(1, cfg.train.rl_workers);
  const auto do_updates = [&](int count) {
    for (int u = 0; u < count; ++u) {
      if (buffer.size() < static_cast<std::size_t>(
                              std::max(cfg.train.rl_batch, cfg.train.warmup_steps))) {
        return;
      }
      const auto idx = buffer.sample_indices(static_cast<std::size_t>(cfg.train.rl_batch),
                                             sample_rng);
      const auto batch = make_sac_batch(buffer, idx, cfg.c.state_dim());
      const auto [alr, clr] = lr_at(cfg.train.lr_schedule, updates);
      const auto stats =
          learner.update(batch, alr, clr, cfg.train.anchor_enabled, update_rng);
      require_finite(stats.critic_loss, "rl critic");
      require_finite(stats.actor_loss, "rl actor");
      require_finite(stats.kl_anchor, "rl anchor kl");
      ++updates;
      if (updates % 100 == 0) {
        TraceWriter::Row row;
        row.step = updates;
        row.stage = "rl_update";
        row.critic = stats.critic_loss;
        row.actor = stats.actor_loss;
        row.kl_anchor = stats.kl_anchor;
        row.lr_actor = alr;
        row.lr_critic = clr;
        trace.write(row);
      }
    }
  };

  const auto note_episode = [&](const EpisodeStat& st, int env_steps) {
    ema_r.add(st.mean_step_reward);
    ema_rc.add(st.rc_percent);
    ++res.episodes;
    res.min_reward_ema = std::min(res.min_reward_ema, ema_r.value());
    if (env_steps <= 5000) {
      res.min_reward_ema_early = std::min(res.min_reward_ema_early, ema_r.value());
    }
    const auto [alr, clr] = lr_at(cfg.train.lr_schedule, updates);
    TraceWriter::Row row;
    row.step = env_steps;
    row.stage = "rl";
    row.reward_raw = st.mean_step_reward;
    row.rc_raw = st.rc_percent;
    row.reward_ema = ema_r.value();
    row.rc_ema = ema_rc.value();
    row.lr_actor = alr;
    row.lr_critic = clr;
    trace.write(row);
  };

  if (workers <= 1) {
    // Deterministic single-worker loop: act, learn, repeat.
    RngStream act_rng = RngStream::from_name("rl.act", cfg.seed);
    int env_steps = 0;
    std::uint64_t ep = 0;
    while (env_steps < cfg.train.rl_steps) {
      const auto& tpl = cfg.train.rl_templates[ep % cfg.train.rl_templates.size()];
      const std::uint64_t es = cfg.seed * 131071ull + ep;
      sim::EnvSession env(sim::make_scenario(tpl, es), cfg.world, cfg.reward, es);
      sim::Observation obs = env.reset();
      agent.reset_episode();
      std::optional<Transition> pending;
      EpisodeStat st;

      while (!env.world().done() && env_steps < cfg.train.rl_steps) {
        const auto act = agent.act(env.world(), obs, false, act_rng);
        if (pending) {
          pending->next_state = act.state;
          buffer.push(std::move(*pending));
          pending.reset();
        }
        const auto r = env.step(act.controls);
        ++env_steps;
        ++st.steps;
        st.mean_step_reward += r.reward.r_step;
        st.rc_percent = r.events.rc * 100.0;

        Transition t;
        t.state = act.state;
        t.action_unit[0] = act.action_unit[0];
        t.action_unit[1] = act.action_unit[1];
        t.r_step = r.reward.r_step;
        t.r_term = r.reward.r_term;
        t.reward = r.reward.r_step + r.reward.r_term;
        t.done = r.done ? 1.0 : 0.0;
        t.episode = static_cast<std::uint32_t>(ep);
        t.step = static_cast<std::uint32_t>(st.steps);
        if (r.done) {
          t.next_state = agent.peek_state(r.obs, act_rng, false);
          buffer.push(std::move(t));
        } else {
          pending = std::move(t);
        }
        obs = r.obs;

        do_updates(cfg.train.updates_per_step);
        agent.actor().params().copy_from(learner.actor().params());
      }
      if (env.world().done()) {
        st.mean_step_reward = st.steps > 0 ? st.mean_step_reward / st.steps : 0.0;
        note_episode(st, env_steps);
      }
      ++ep;
    }
    res.env_steps = env_steps;
  } else {
    // Producer/consumer: workers act on parameter snapshots, one learner
    // consumes transitions.
    TransitionQueue queue(2048);
    std::mutex stats_mu;
    std::vector<EpisodeStat> pending_stats;
    std::mutex snapshot_mu;
    auto snapshot = learner.actor().params().snapshot();
    std::atomic<std::uint64_t> snapshot_version{1};
    std::atomic<bool> stop{false};
    std::atomic<std::uint64_t> next_episode{0};

    const auto worker_fn = [&](int wid) {
      AgentStack wagent(cfg, cfg.seed);
      wagent.vmodel().params().copy_from(agent.vmodel().params());
      wagent.mmodel().params().copy_from(agent.mmodel().params());
      std::uint64_t have_version = 0;
      RngStream act_rng = RngStream::from_name("rl.act", cfg.seed).split(
          static_cast<std::uint64_t>(wid));
      while (!stop.load()) {
        if (have_version != snapshot_version.load()) {
          std::lock_guard<std::mutex> lock(snapshot_mu);
          wagent.actor().params().restore(snapshot);
          have_version = snapshot_version.load();
        }
        const std::uint64_t ep = next_episode.fetch_add(1);
        const auto& tpl = cfg.train.rl_templates[ep % cfg.train.rl_templates.size()];
        const std::uint64_t es = cfg.seed * 131071ull + ep;
        sim::EnvSession env(sim::make_scenario(tpl, es), cfg.world, cfg.reward, es);
        sim::Observation obs = env.reset();
        wagent.reset_episode();
        std::optional<Transition> pending;
        EpisodeStat st;
        while (!env.world().done() && !stop.load()) {
          const auto act = wagent.act(env.world(), obs, false, act_rng);
          if (pending) {
            pending->next_state = act.state;
            if (!queue.push(std::move(*pending))) return;
            pending.reset();
          }
          const auto r = env.step(act.controls);
          ++st.steps;
          st.mean_step_reward += r.reward.r_step;
          st.rc_percent = r.events.rc * 100.0;
          Transition t;
          t.state = act.state;
          t.action_unit[0] = act.action_unit[0];
          t.action_unit[1] = act.action_unit[1];
          t.r_step = r.reward.r_step;
          t.r_term = r.reward.r_term;
          t.reward = r.reward.r_step + r.reward.r_term;
          t.done = r.done ? 1.0 : 0.0;
          if (r.done) {
            t.next_state = wagent.peek_state(r.obs, act_rng, false);
            if (!queue.push(std::move(t))) return;
          } else {
            pending = std::move(t);
          }
          obs = r.obs;
        }
        if (env.world().done()) {
          st.mean_step_reward = st.steps > 0 ? st.mean_step_reward / st.steps : 0.0;
          std::lock_guard<std::mutex> lock(stats_mu);
          pending_stats.push_back(st);
        }
      }
    };

    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn, w);

    int env_steps = 0;
    while (env_steps < cfg.train.rl_steps) {
      auto t = queue.pop();
      if (!t) break;
      buffer.push(std::move(*t));
      ++env_steps;
      do_updates(cfg.train.updates_per_step);
      if (updates > 0 && updates % cfg.train.snapshot_interval == 0) {
        std::lock_guard<std::mutex> lock(snapshot_mu);
        snapshot = learner.actor().params().snapshot();
        snapshot_version.fetch_add(1);
      }
      {
        std::lock_guard<std::mutex> lock(stats_mu);
        for (const auto& st : pending_stats) note_episode(st, env_steps);
        pending_stats.clear();
      }
    }
    stop.store(true);
    queue.close();
    for (auto& th : pool) th.join();
    res.env_steps = env_steps;
    agent.actor().params().copy_from(learner.actor().params());
  }

  res.final_reward_ema = ema_r.ready() ? ema_r.value() : 0.0;
  res.final_rc_ema = ema_rc.ready() ? ema_rc.value() : 0.0;
  if (!std::isfinite(res.min_reward_ema)) res.min_reward_ema = 0.0;
  if (!std::isfinite(res.min_reward_ema_early)) res.min_reward_ema_early = res.min_reward_ema;

  save_checkpoint((fs::path(out_dir) / "checkpoint.rmbl").string(),
                  {{"", &agent.vmodel().params()},
                   {"", &agent.mmodel().params()},
                   {"", &learner.actor().params()},
                   {"anchor.", &learner.anchor().params()},
                   {"q1.", &learner.q1().params()},
                   {"q2.", &learner.q2().params()},
                   {"tq1.", &learner.target_q1().params()},
                   {"tq2.", &learner.target_q2().params()}});

  json summary;
  summary["il_baseline_step_reward"] = res.il_baseline_step_reward;
  summary["min_reward_ema"] = res.min_reward_ema;
  summary["min_reward_ema_early"] = res.min_reward_ema_early;
  summary["final_reward_ema"] = res.final_reward_ema;
  summary["final_rc_ema"] = res.final_rc_ema;
  summary["episodes"] = res.episodes;
  summary["env_steps"] = res.env_steps;
  summary["anchor_enabled"] = cfg.train.anchor_enabled;
  write_text_file((fs::path(out_dir) / "summary.json").string(), summary.dump(2));
  return res;
}

}  // namespace rmbl::trainer
