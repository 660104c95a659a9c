#pragma once

#include <vector>

#include "rmbl/layers.hpp"
#include "rmbl/losses.hpp"
#include "rmbl/rng.hpp"
#include "rmbl/tensor.hpp"
#include "rmbl/vmodel.hpp"

namespace rmbl {

struct MModelConfig {
  int context = 8;   // sliding window length
  int width = 128;   // transformer width
  int layers = 2;
  int heads = 4;
  int mlp_mult = 2;
  int groups = 16;
  int classes = 16;
  int action_embed = 32;
  int reward_dim = 4;
  int head_hidden = 64;
  double huber_delta = 1.0;

  int latent_dim() const { return groups * classes; }
};

struct MLossWeights {
  double dyn = 1.0;
  double rep = 0.1;
  double rew = 1.0;
  double con = 1.0;
};

// Latent-dynamics model: mixes (z_t, a_t) into tokens, runs a causal
// transformer over the window and predicts the next latent distribution, the
// normalized physical-variable vector and the continuation probability.
class MModel {
 public:
  MModel(MModelConfig cfg, RngStream& rng);

  const MModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // z [B*T, latent], action [B*T, 2] with radius/bearing pre-scaled to [-1,1].
  Tensor mix(const Tensor& z, const Tensor& action) const;
  // Adds learned positional embeddings and runs the causal blocks. t <= context.
  Tensor sequence_forward(const Tensor& mixed, int batch, int t) const;

  struct Heads {
    Tensor next_logits;  // [rows, latent]
    Tensor reward;       // [rows, reward_dim], already in normalized units
    Tensor cont;         // [rows, 1] probability
  };
  Heads heads(const Tensor& h) const;

  struct LossInputs {
    // all [B*T, ...] row-major over (batch, time)
    Tensor z;           // sampled latents fed to the mixer
    Tensor action;      // scaled actions
    Tensor enc_next;    // encoder logits of o_{t+1}
    Tensor target_next; // BEV labels of o_{t+1} (constant)
    Tensor reward;      // normalized reward vector (constant)
    Tensor cont;        // continuation labels (constant)
    int batch = 0;
    int t = 0;
  };
  struct Loss {
    Tensor total;
    double rec = 0.0, dyn = 0.0, rep = 0.0, rew = 0.0, con = 0.0;
  };
  // Weighted sum per the model recipe: focal reconstruction through the V
  // decoder, free-bit-clamped dynamics and representation KLs with opposed
  // stop-gradients, Huber reward error and continuation BCE. soft_latents
  // decodes the predicted probabilities instead of a hard sample (used by the
  // finite-difference suites).
  Loss loss(const VModel& v, const LossInputs& in, const MLossWeights& w,
            const losses::FocalParams& focal, RngStream& rng, bool soft_latents = false) const;

  // Per-row KL between grouped categorical logits, summed over groups: [rows,1].
  Tensor grouped_kl(const Tensor& logits_p, const Tensor& logits_q, int rows) const;

  struct Imagined {
    std::vector<std::vector<double>> latents;   // one-hot z per horizon step
    std::vector<std::vector<double>> decoded;   // sigmoid BEV probabilities
  };
  // Autoregressive rollout: context (z, a) pairs seed the window, then each
  // predicted latent is fed back with the matching future action.
  Imagined imagine(const VModel& v, std::vector<std::vector<double>> context_z,
                   std::vector<std::vector<double>> context_a,
                   const std::vector<std::vector<double>>& future_actions, int horizon,
                   bool argmax, RngStream& rng) const;

 private:
  MModelConfig cfg_;
  ParamStore params_;
  Linear z_in_, a_in_, mix_out_;
  Tensor pos_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm ln_out_;
  Linear dyn_head_;
  Mlp rew_head_, con_head_;
};

}  // namespace rmbl
