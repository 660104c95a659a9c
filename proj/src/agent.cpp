#include "rmbl/agent.hpp"

#include <cmath>

#include "rmbl/checkpoint.hpp"

namespace rmbl {

AgentStack::AgentStack(const Config& cfg, std::uint64_t init_seed)
    : cfg_(cfg),
      v_([&] {
        RngStream r = RngStream::from_name("init.v", init_seed);
        return VModel(cfg.v, r);
      }()),
      m_([&] {
        RngStream r = RngStream::from_name("init.m", init_seed);
        return MModel(cfg.m, r);
      }()),
      actor_([&] {
        RngStream r = RngStream::from_name("init.actor", init_seed);
        return Actor(cfg.c, r);
      }()) {
  h_prev_.assign(static_cast<std::size_t>(cfg_.m.width), 0.0);
}

void AgentStack::load_checkpoint(const std::string& path) {
  const auto entries = rmbl::load_checkpoint(path);
  load_into(entries, "", v_.params());
  load_into(entries, "", m_.params());
  if (checkpoint_has_prefix(entries, "actor.")) {
    load_into(entries, "", actor_.params());
  }
}

void AgentStack::save_checkpoint(const std::string& path) const {
  rmbl::save_checkpoint(path, {{"", &v_.params()}, {"", &m_.params()}, {"", &actor_.params()}});
}

void AgentStack::reset_episode() {
  context_.clear();
  h_prev_.assign(static_cast<std::size_t>(cfg_.m.width), 0.0);
  pid_ = PidState{};
}

std::vector<double> AgentStack::encode_z(const sim::Observation& obs, bool deterministic,
                                         RngStream& rng) {
  (void)deterministic;
  (void)rng;
  std::vector<const sim::Observation*> batch{&obs};
  Tensor logits = v_.encode_logits(batch);
  // The policy always consumes the argmax latent; exploration noise comes
  // from the action head, matching the imitation features.
  Tensor z = v_.sample_latent(logits, true, nullptr);
  return z.values();
}

void AgentStack::push_context(const std::vector<double>& z, double ur, double uphi) {
  context_.emplace_back(z, std::array<double, 2>{ur, uphi});
  while (static_cast<int>(context_.size()) > cfg_.m.context) {
    context_.pop_front();
  }
  const int t = static_cast<int>(context_.size());
  std::vector<double> zbuf, abuf;
  zbuf.reserve(static_cast<std::size_t>(t) * cfg_.m.latent_dim());
  for (const auto& [zv, av] : context_) {
    zbuf.insert(zbuf.end(), zv.begin(), zv.end());
    abuf.push_back(av[0]);
    abuf.push_back(av[1]);
  }
  Tensor zt = Tensor::from(std::move(zbuf), {t, cfg_.m.latent_dim()});
  Tensor at = Tensor::from(std::move(abuf), {t, 2});
  Tensor h = m_.sequence_forward(m_.mix(zt, at), 1, t);
  const auto& hv = h.values();
  h_prev_.assign(hv.end() - cfg_.m.width, hv.end());
}

AgentStack::ActResult AgentStack::act(const sim::World& world, const sim::Observation& obs,
                                      bool deterministic, RngStream& rng) {
  ActResult out;
  const auto z = encode_z(obs, deterministic, rng);
  out.state.reserve(z.size() + h_prev_.size());
  out.state.insert(out.state.end(), z.begin(), z.end());
  out.state.insert(out.state.end(), h_prev_.begin(), h_prev_.end());

  Tensor state = Tensor::from(out.state, {1, cfg_.c.state_dim()});
  std::vector<double> noise(2, 0.0);
  if (!deterministic) {
    noise[0] = rng.normal();
    noise[1] = rng.normal();
  }
  const auto sample = sample_actor(actor_, state, Tensor::from(noise, {1, 2}), cfg_.c);
  out.log_prob = sample.log_prob.values()[0];
  const double ur = sample.unit.values()[0];
  const double uphi = sample.unit.values()[1];
  out.waypoint = unit_to_waypoint(ur, uphi, cfg_.c.bounds);

  out.masked = action_mask(out.waypoint, world.static_points_ego_frame(cfg_.mask.max_free),
                           cfg_.mask);
  const auto [mur, muphi] = waypoint_to_unit(out.masked, cfg_.c.bounds);
  out.action_unit[0] = mur;
  out.action_unit[1] = muphi;
  out.controls = pid_control(out.masked, world.ego().v, pid_, cfg_.pid, cfg_.world.dt);

  push_context(z, mur, muphi);
  return out;
}

std::vector<double> AgentStack::peek_state(const sim::Observation& obs, RngStream& rng,
                                           bool deterministic) {
  const auto z = encode_z(obs, deterministic, rng);
  std::vector<double> state;
  state.reserve(z.size() + h_prev_.size());
  state.insert(state.end(), z.begin(), z.end());
  state.insert(state.end(), h_prev_.begin(), h_prev_.end());
  return state;
}

}  // namespace rmbl
