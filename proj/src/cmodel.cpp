#include "rmbl/cmodel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rmbl {

Actor::Actor(const CModelConfig& cfg, RngStream& rng) : cfg_(cfg) {
  trunk_ = Mlp(params_, "actor.trunk", {cfg.state_dim(), cfg.hidden, cfg.hidden}, rng);
  mean_head_ = Linear(params_, "actor.mean", cfg.hidden, 2, rng, 0.01);
  logstd_head_ = Linear(params_, "actor.logstd", cfg.hidden, 2, rng, 0.01);
  for (auto& v : logstd_head_.b.node()->values) {
    v = cfg.log_std_init;
  }
}

Actor::Out Actor::forward(const Tensor& state) const {
  Tensor h = rmbl::tanh(trunk_(state));
  Out out;
  out.mean = mean_head_(h);
  out.log_std = clamp(logstd_head_(h), cfg_.log_std_min, cfg_.log_std_max);
  return out;
}

Critic::Critic(const CModelConfig& cfg, RngStream& rng) {
  a_embed_ = Mlp(params_, "critic.aemb", {2, cfg.action_embed}, rng);
  trunk_ = Mlp(params_,
               "critic.trunk", {cfg.state_dim() + cfg.action_embed, cfg.hidden, cfg.hidden, 1},
               rng);
}

Tensor Critic::forward(const Tensor& state, const Tensor& action_unit) const {
  Tensor a = rmbl::tanh(a_embed_(action_unit));
  return trunk_(concat_cols({state, a}));
}

ActorSample sample_actor(const Actor& actor, const Tensor& state, const Tensor& noise,
                         const CModelConfig& cfg) {
  const int b = state.rows();
  if (noise.rows() != b || noise.cols() != 2) {
    throw std::invalid_argument("sample_actor: noise must be [batch, 2]");
  }
  const auto out = actor.forward(state);
  Tensor pre = add(out.mean, mul(exp(out.log_std), noise));
  Tensor unit = rmbl::tanh(pre);

  // log N(pre | mean, std) with pre = mean + std*eps reduces to
  // -eps^2/2 - log_std - log(2*pi)/2 per dim; the tanh squash and the affine
  // map to waypoint bounds add their log-Jacobians.
  Tensor ones = Tensor::full(unit.shape(), 1.0);
  Tensor eps2 = mul(noise, noise);
  Tensor per_dim = sub(scale(eps2, -0.5), out.log_std);
  Tensor tanh_corr = log(clamp_min(sub(ones, mul(unit, unit)), 1e-12));
  Tensor lp = row_sum(sub(per_dim, tanh_corr));
  const double constant = -std::log(2.0 * std::numbers::pi) -
                          std::log(cfg.bounds.r_max / 2.0) - std::log(cfg.bounds.phi_max);
  ActorSample s;
  s.unit = unit;
  s.log_prob = add_scalar(lp, constant);
  s.mean = out.mean;
  s.log_std = out.log_std;
  return s;
}

PolarWaypoint unit_to_waypoint(double u_r, double u_phi, const ActionBounds& b) {
  return {(u_r + 1.0) * 0.5 * b.r_max, u_phi * b.phi_max};
}

std::pair<double, double> waypoint_to_unit(const PolarWaypoint& wp, const ActionBounds& b) {
  return {wp.radius / b.r_max * 2.0 - 1.0, wp.bearing / b.phi_max};
}

Tensor il_loss(const Tensor& predicted, const Tensor& expert) {
  if (predicted.shape() != expert.shape() || predicted.cols() != 2) {
    throw std::invalid_argument("il_loss: waypoint tensors must both be [batch, 2]");
  }
  Tensor rp = slice_cols(predicted, 0, 1);
  Tensor pp = slice_cols(predicted, 1, 1);
  Tensor re = slice_cols(expert, 0, 1);
  Tensor pe = slice_cols(expert, 1, 1);
  Tensor dx = sub(mul(rp, cos(pp)), mul(re, cos(pe)));
  Tensor dy = sub(mul(rp, sin(pp)), mul(re, sin(pe)));
  Tensor dist = sqrt(add(mul(dx, dx), mul(dy, dy)));
  Tensor dtheta = abs(wrap_angle(sub(pp, pe)));
  return mean(add(dist, scale(dtheta, 10.0)));
}

std::pair<double, double> lr_at(const LrSchedule& s, std::int64_t step) {
  if (step <= s.phase1_end) {
    return {s.actor_initial, s.critic_initial};
  }
  if (step >= s.phase2_end) {
    return {s.actor_final, s.critic_final};
  }
  const double f = static_cast<double>(step - s.phase1_end) /
                   static_cast<double>(s.phase2_end - s.phase1_end);
  return {s.actor_initial + f * (s.actor_final - s.actor_initial),
          s.critic_initial + f * (s.critic_final - s.critic_initial)};
}

SacLearner::SacLearner(CModelConfig cfg, RngStream& rng, AdamConfig adam)
    : cfg_(cfg),
      actor_(cfg, rng),
      anchor_(cfg, rng),
      q1_(cfg, rng),
      q2_(cfg, rng),
      tq1_(cfg, rng),
      tq2_(cfg, rng),
      log_alpha_(alpha_store_.create_const("alpha.log", {1}, std::log(cfg.init_alpha))),
      actor_opt_(actor_.params().tensors(), adam),
      q1_opt_(q1_.params().tensors(), adam),
      q2_opt_(q2_.params().tensors(), adam),
      alpha_opt_(alpha_store_.tensors(), adam) {
  init_anchor_from_actor();
  init_targets_from_critics();
}

double SacLearner::alpha() const { return std::exp(log_alpha_.values()[0]); }

void SacLearner::init_anchor_from_actor() { anchor_.params().copy_from(actor_.params()); }

void SacLearner::init_targets_from_critics() {
  tq1_.params().copy_from(q1_.params());
  tq2_.params().copy_from(q2_.params());
}

void SacLearner::anchor_soft_update(double tau) {
  polyak_update(anchor_.params(), actor_.params(), tau);
}

Tensor SacLearner::critic_targets(const SacBatch& batch, RngStream& rng) const {
  const int b = batch.next_state.rows();
  std::vector<double> nz(static_cast<std::size_t>(b) * 2);
  for (auto& v : nz) v = rng.normal();
  const auto next = sample_actor(actor_, batch.next_state, Tensor::from(nz, {b, 2}), cfg_);
  const auto qa = tq1_.forward(batch.next_state, next.unit).values();
  const auto qb = tq2_.forward(batch.next_state, next.unit).values();
  const auto& lp = next.log_prob.values();
  const double a = alpha();
  std::vector<double> y(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    const double qmin = std::min(qa[static_cast<std::size_t>(i)], qb[static_cast<std::size_t>(i)]);
    y[static_cast<std::size_t>(i)] =
        cfg_.reward_scale * batch.reward[static_cast<std::size_t>(i)] +
        cfg_.discount * (1.0 - batch.done[static_cast<std::size_t>(i)]) *
            (qmin - a * lp[static_cast<std::size_t>(i)]);
  }
  return Tensor::from(std::move(y), {b, 1});
}

Tensor SacLearner::actor_objective(const SacBatch& batch, bool use_anchor_kl, RngStream& rng,
                                   double* kl_out, double* entropy_out, double* q_out) const {
  const int b = batch.state.rows();
  std::vector<double> nz(static_cast<std::size_t>(b) * 2);
  for (auto& v : nz) v = rng.normal();
  const auto s = sample_actor(actor_, batch.state, Tensor::from(nz, {b, 2}), cfg_);

  Tensor qa = q1_.forward(batch.state, s.unit);
  Tensor qb = q2_.forward(batch.state, s.unit);
  std::vector<double> pick(static_cast<std::size_t>(b), 0.0);
  for (int i = 0; i < b; ++i) {
    pick[static_cast<std::size_t>(i)] =
        qa.values()[static_cast<std::size_t>(i)] <= qb.values()[static_cast<std::size_t>(i)]
            ? 1.0
            : 0.0;
  }
  Tensor qmin = where(Tensor::from(pick, {b, 1}), qa, qb);

  Tensor sac = mean(sub(scale(s.log_prob, alpha()), qmin));
  if (entropy_out != nullptr) {
    double lp = 0.0;
    for (double v : s.log_prob.values()) lp += v;
    *entropy_out = -lp / b;
  }
  if (q_out != nullptr) {
    double q = 0.0;
    for (double v : qmin.values()) q += v;
    *q_out = q / b;
  }
  if (!use_anchor_kl) {
    if (kl_out != nullptr) *kl_out = 0.0;
    return sac;
  }
  const auto anchor_out = anchor_.forward(batch.state);
  Tensor kl = mean(kl_diag_gaussian_rows(s.mean, s.log_std, stop_gradient(anchor_out.mean),
                                         stop_gradient(anchor_out.log_std)));
  if (kl_out != nullptr) *kl_out = kl.item();
  return add(sac, kl);
}

SacStats SacLearner::update(const SacBatch& batch, double actor_lr, double critic_lr,
                            bool use_anchor_kl, RngStream& rng) {
  SacStats stats;
  const int b = batch.state.rows();

  // Critics toward the entropy-regularized Bellman targets.
  Tensor y = critic_targets(batch, rng);
  q1_opt_.zero_grad();
  q2_opt_.zero_grad();
  Tensor e1 = sub(q1_.forward(batch.state, batch.action_unit), y);
  Tensor e2 = sub(q2_.forward(batch.state, batch.action_unit), y);
  Tensor critic_loss = add(mean(mul(e1, e1)), mean(mul(e2, e2)));
  stats.critic_loss = backward(critic_loss);
  q1_opt_.step(critic_lr);
  q2_opt_.step(critic_lr);

  // Actor objective, optionally anchored.
  actor_opt_.zero_grad();
  Tensor actor_loss =
      actor_objective(batch, use_anchor_kl, rng, &stats.kl_anchor, &stats.entropy, &stats.q_mean);
  stats.actor_loss = backward(actor_loss);
  actor_opt_.step(actor_lr);

  // Temperature toward the entropy target. The mean log-prob is detached, so
  // the loss is linear in log_alpha.
  alpha_opt_.zero_grad();
  const double drive = -(-stats.entropy + cfg_.target_entropy);  // -(E[log pi] + H_target)
  Tensor alpha_loss = scale(log_alpha_, drive);
  backward(alpha_loss);
  alpha_opt_.step();
  stats.alpha = alpha();

  polyak_update(tq1_.params(), q1_.params(), cfg_.critic_polyak_tau);
  polyak_update(tq2_.params(), q2_.params(), cfg_.critic_polyak_tau);
  if (use_anchor_kl) {
    anchor_soft_update(cfg_.anchor_tau);
  }
  (void)b;
  return stats;
}

std::pair<double, std::vector<std::vector<double>>> SacLearner::actor_gradients(
    const SacBatch& batch, bool use_anchor_kl, RngStream rng) const {
  Tensor loss = actor_objective(batch, use_anchor_kl, rng, nullptr, nullptr, nullptr);
  return value_and_grad(loss, actor_.params().tensors());
}

}  // namespace rmbl
