#pragma once

#include <vector>

#include "rmbl/layers.hpp"
#include "rmbl/losses.hpp"
#include "rmbl/rng.hpp"
#include "rmbl/sim/world.hpp"
#include "rmbl/tensor.hpp"

namespace rmbl {

struct VModelConfig {
  sim::GridDims grid;
  int groups = 32;
  int classes = 16;
  int patch = 4;       // patch edge in cells
  int embed = 64;      // patch/route token width
  int heads = 4;       // cross-attention heads
  int enc_hidden = 384;
  int dec_hidden = 256;

  int latent_dim() const { return groups * classes; }
  int patches_per_side() const { return grid.height / patch; }
  int patch_count() const { return patches_per_side() * patches_per_side(); }
  int patch_dim() const { return grid.sensor_channels * patch * patch; }
  int kv_tokens() const { return grid.route_points + 1; }  // route points + speed
};

// Encoder: patch-flattened sensor tokens cross-attend to route/speed tokens,
// then a dense trunk produces per-group categorical logits. Decoder: MLP from
// the flattened one-hot latent back to BEV logits. The two sides are
// asymmetric on purpose; the decoder never sees the degraded view.
class VModel {
 public:
  VModel(VModelConfig cfg, RngStream& rng);

  const VModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Data plumbing: batches of observations to input tensors (no grad).
  Tensor patch_tokens(const std::vector<const sim::Observation*>& batch) const;
  Tensor route_tokens(const std::vector<const sim::Observation*>& batch) const;

  // [B, groups*classes] logits.
  Tensor encode_logits(const Tensor& patches, const Tensor& route_kv, int batch) const;
  Tensor encode_logits(const std::vector<const sim::Observation*>& batch) const;

  // Straight-through categorical sample: values are exact one-hots per group,
  // gradients flow to the logits through the softmax probabilities. Stochastic
  // draws consume exactly batch*groups uniforms from rng.
  Tensor sample_latent(const Tensor& logits, bool argmax, RngStream* rng) const;

  // Soft latent (per-group softmax probabilities, same layout as a sample).
  // This is the differentiable path the straight-through estimator rides on;
  // the finite-difference suites check gradients through it.
  Tensor posterior(const Tensor& logits) const;

  // [B, bev_channels*H*W] reconstruction logits.
  Tensor decode(const Tensor& z) const;

  struct Loss {
    Tensor total;
    double rec = 0.0;
    double kl = 0.0;
  };
  // Reconstruction focal loss plus k_kl * KL(posterior || uniform prior).
  // soft_latents decodes the probabilities instead of a hard sample, which
  // makes the loss finite-difference checkable.
  Loss loss(const std::vector<const sim::Observation*>& batch, double k_kl,
            const losses::FocalParams& focal, RngStream& rng, bool soft_latents = false) const;

  // Per-sample KL to the uniform categorical prior, summed over groups: [B,1].
  Tensor kl_to_uniform(const Tensor& logits, int batch) const;

 private:
  VModelConfig cfg_;
  ParamStore params_;
  Linear patch_in_;
  Tensor patch_pos_;
  Linear kv_in_;
  Tensor kv_pos_;
  LayerNorm ln_q_, ln_kv_;
  MultiheadAttention cross_;
  Linear trunk_, head_;
  Mlp decoder_;
};

}  // namespace rmbl
