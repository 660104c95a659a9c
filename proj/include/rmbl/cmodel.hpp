#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "rmbl/control.hpp"
#include "rmbl/layers.hpp"
#include "rmbl/optim.hpp"
#include "rmbl/rng.hpp"
#include "rmbl/tensor.hpp"

namespace rmbl {

struct CModelConfig {
  int z_dim = 256;
  int h_dim = 128;
  int hidden = 256;
  ActionBounds bounds;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  double log_std_init = -2.0;  // log-std head bias at init
  int action_embed = 32;
  double discount = 0.99;
  double critic_polyak_tau = 0.005;  // target <- tau*online + (1-tau)*target
  double anchor_tau = 0.005;
  double init_alpha = 0.1;
  double target_entropy = -2.0;  // -dim(action)
  double reward_scale = 0.1;

  int state_dim() const { return z_dim + h_dim; }
};

// Squashed-Gaussian policy over the unit action square; the affine map to
// waypoint bounds happens outside the network.
class Actor {
 public:
  Actor() = default;
  Actor(const CModelConfig& cfg, RngStream& rng);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  struct Out {
    Tensor mean;     // [B,2]
    Tensor log_std;  // [B,2], clamped
  };
  Out forward(const Tensor& state) const;

 private:
  CModelConfig cfg_;
  ParamStore params_;
  Mlp trunk_;
  Linear mean_head_, logstd_head_;
};

class Critic {
 public:
  Critic() = default;
  Critic(const CModelConfig& cfg, RngStream& rng);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // state [B, z+h], action_unit [B,2] in [-1,1]^2.
  Tensor forward(const Tensor& state, const Tensor& action_unit) const;

 private:
  ParamStore params_;
  Mlp a_embed_;
  Mlp trunk_;
};

struct ActorSample {
  Tensor unit;      // tanh(pre), [B,2]
  Tensor log_prob;  // [B,1], includes tanh and bound-scaling corrections
  Tensor mean;      // pre-squash Gaussian parameters
  Tensor log_std;
};

// Reparameterized sample; noise is a [B,2] standard-normal constant so the
// draw is reproducible and differentiable through mean/log_std.
ActorSample sample_actor(const Actor& actor, const Tensor& state, const Tensor& noise,
                         const CModelConfig& cfg);

PolarWaypoint unit_to_waypoint(double u_r, double u_phi, const ActionBounds& b);
std::pair<double, double> waypoint_to_unit(const PolarWaypoint& wp, const ActionBounds& b);

// Mean Eq.5 loss over waypoint rows [(radius, bearing)]: Euclidean distance
// between the two waypoints plus 10x the absolute bearing difference
// (wrapped). Zero exactly when the waypoints coincide.
Tensor il_loss(const Tensor& predicted, const Tensor& expert);

// Three-phase schedule: constant, linear actor-up/critic-down, constant.
struct LrSchedule {
  std::int64_t phase1_end = 1000;
  std::int64_t phase2_end = 3000;
  double actor_initial = 1e-5;
  double actor_final = 3e-4;
  double critic_initial = 3e-4;
  double critic_final = 1e-4;
};
std::pair<double, double> lr_at(const LrSchedule& s, std::int64_t step);  // (actor, critic)

struct SacBatch {
  Tensor state;        // [B, z+h]
  Tensor action_unit;  // [B, 2]
  std::vector<double> reward;  // unscaled step (+ terminal) rewards
  std::vector<double> done;    // 1 = no bootstrap
  Tensor next_state;   // [B, z+h]
};

struct SacStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double kl_anchor = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;
  double q_mean = 0.0;
};

// Twin critics with Polyak targets, auto-tuned temperature and the anchored
// actor objective: L = L_SAC + KL(pi_p || pi_a), with the anchor tracking the
// primary actor by soft updates so the added term vanishes at convergence.
class SacLearner {
 public:
  SacLearner(CModelConfig cfg, RngStream& rng, AdamConfig adam = {});

  Actor& actor() { return actor_; }
  const Actor& actor() const { return actor_; }
  Actor& anchor() { return anchor_; }
  Critic& q1() { return q1_; }
  Critic& q2() { return q2_; }
  Critic& target_q1() { return tq1_; }
  Critic& target_q2() { return tq2_; }
  const CModelConfig& config() const { return cfg_; }
  double alpha() const;

  void init_anchor_from_actor();
  void init_targets_from_critics();
  void anchor_soft_update(double tau);

  SacStats update(const SacBatch& batch, double actor_lr, double critic_lr, bool use_anchor_kl,
                  RngStream& rng);

  // Gradients of the actor objective without stepping anything; used to pin
  // the anchored-loss fixed point against the plain SAC loss.
  std::pair<double, std::vector<std::vector<double>>> actor_gradients(const SacBatch& batch,
                                                                      bool use_anchor_kl,
                                                                      RngStream rng) const;

  // Entropy-regularized Bellman targets; exposed so tests can pin them.
  Tensor critic_targets(const SacBatch& batch, RngStream& rng) const;

  // Value of the actor objective with the given noise stream; the gradient
  // suites finite-difference this against actor_gradients.
  double actor_objective_value(const SacBatch& batch, bool use_anchor_kl, RngStream rng) const {
    return actor_objective(batch, use_anchor_kl, rng, nullptr, nullptr, nullptr).item();
  }

 private:
  Tensor actor_objective(const SacBatch& batch, bool use_anchor_kl, RngStream& rng,
                         double* kl_out, double* entropy_out, double* q_out) const;

  CModelConfig cfg_;
  Actor actor_, anchor_;
  Critic q1_, q2_, tq1_, tq2_;
  ParamStore alpha_store_;
  Tensor log_alpha_;
  Adam actor_opt_, q1_opt_, q2_opt_, alpha_opt_;
};

}  // namespace rmbl
