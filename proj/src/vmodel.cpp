#include "rmbl/vmodel.hpp"

#include <cmath>
#include <stdexcept>

namespace rmbl {

VModel::VModel(VModelConfig cfg, RngStream& rng) : cfg_(cfg) {
  if (cfg_.grid.height % cfg_.patch != 0 || cfg_.grid.width % cfg_.patch != 0) {
    throw std::invalid_argument("VModel: grid dims must be divisible by the patch size");
  }
  patch_in_ = Linear(params_, "v.enc.patch", cfg_.patch_dim(), cfg_.embed, rng);
  patch_pos_ = params_.create("v.enc.patch_pos", {cfg_.patch_count(), cfg_.embed}, 0.02, rng);
  kv_in_ = Linear(params_, "v.enc.kv", 3, cfg_.embed, rng);
  kv_pos_ = params_.create("v.enc.kv_pos", {cfg_.kv_tokens(), cfg_.embed}, 0.02, rng);
  ln_q_ = LayerNorm(params_, "v.enc.ln_q", cfg_.embed);
  ln_kv_ = LayerNorm(params_, "v.enc.ln_kv", cfg_.embed);
  cross_ = MultiheadAttention(params_, "v.enc.cross", cfg_.embed, cfg_.heads, rng);
  trunk_ = Linear(params_, "v.enc.trunk", cfg_.patch_count() * cfg_.embed, cfg_.enc_hidden, rng);
  // Sharp logits at init keep the sampled latent scene-dependent from the
  // first updates; near-uniform posteriors make the decoder bypass z and the
  // representation collapses.
  head_ = Linear(params_, "v.enc.head", cfg_.enc_hidden, cfg_.latent_dim(), rng, 4.0);
  decoder_ = Mlp(params_, "v.dec",
                 {cfg_.latent_dim(), cfg_.dec_hidden, cfg_.grid.bev_size()}, rng);
}

Tensor VModel::patch_tokens(const std::vector<const sim::Observation*>& batch) const {
  const auto& g = cfg_.grid;
  const int side = cfg_.patches_per_side();
  const int pc = cfg_.patch_count();
  const int pd = cfg_.patch_dim();
  const int b = static_cast<int>(batch.size());
  std::vector<double> out(static_cast<std::size_t>(b) * pc * pd);
  const int hw = g.height * g.width;
  for (int bi = 0; bi < b; ++bi) {
    const auto& sensor = batch[static_cast<std::size_t>(bi)]->sensor;
    if (static_cast<int>(sensor.size()) != g.sensor_size()) {
      throw std::invalid_argument("VModel: sensor grid size does not match config");
    }
    for (int pr = 0; pr < side; ++pr) {
      for (int pcid = 0; pcid < side; ++pcid) {
        const int p = pr * side + pcid;
        double* dst = out.data() + (static_cast<std::size_t>(bi) * pc + p) * pd;
        int k = 0;
        for (int ch = 0; ch < g.sensor_channels; ++ch) {
          for (int r = 0; r < cfg_.patch; ++r) {
            for (int c = 0; c < cfg_.patch; ++c) {
              const int row = pr * cfg_.patch + r;
              const int col = pcid * cfg_.patch + c;
              dst[k++] = sensor[static_cast<std::size_t>(ch * hw + row * g.width + col)];
            }
          }
        }
      }
    }
  }
  return Tensor::from(std::move(out), {b * pc, pd});
}

Tensor VModel::route_tokens(const std::vector<const sim::Observation*>& batch) const {
  const auto& g = cfg_.grid;
  const int kv = cfg_.kv_tokens();
  const int b = static_cast<int>(batch.size());
  std::vector<double> out(static_cast<std::size_t>(b) * kv * 3, 0.0);
  for (int bi = 0; bi < b; ++bi) {
    const auto* obs = batch[static_cast<std::size_t>(bi)];
    if (static_cast<int>(obs->route.size()) != g.route_points * 2) {
      throw std::invalid_argument("VModel: route point count does not match config");
    }
    double* dst = out.data() + static_cast<std::size_t>(bi) * kv * 3;
    for (int i = 0; i < g.route_points; ++i) {
      dst[i * 3] = obs->route[static_cast<std::size_t>(i) * 2] / 10.0;
      dst[i * 3 + 1] = obs->route[static_cast<std::size_t>(i) * 2 + 1] / 10.0;
    }
    // the speed rides along as one extra token
    dst[g.route_points * 3 + 2] = obs->speed / 10.0;
  }
  return Tensor::from(std::move(out), {b * kv, 3});
}

Tensor VModel::encode_logits(const Tensor& patches, const Tensor& route_kv, int batch) const {
  const int pc = cfg_.patch_count();
  Tensor q = rmbl::tanh(patch_in_(patches));
  q = add(q, tile_rows(patch_pos_, batch));
  Tensor kv = rmbl::tanh(kv_in_(route_kv));
  kv = add(kv, tile_rows(kv_pos_, batch));
  q = add(q, cross_.cross(ln_q_(q), ln_kv_(kv), batch, pc, cfg_.kv_tokens()));
  Tensor flat = reshape(q, {batch, pc * cfg_.embed});
  Tensor h = rmbl::tanh(trunk_(flat));
  return head_(h);
}

Tensor VModel::encode_logits(const std::vector<const sim::Observation*>& batch) const {
  return encode_logits(patch_tokens(batch), route_tokens(batch),
                       static_cast<int>(batch.size()));
}

Tensor VModel::sample_latent(const Tensor& logits, bool argmax, RngStream* rng) const {
  const int b = logits.rows();
  if (logits.cols() != cfg_.latent_dim()) {
    throw std::invalid_argument("VModel: logits width != groups*classes");
  }
  Tensor grouped = reshape(logits, {b * cfg_.groups, cfg_.classes});
  Tensor probs = softmax_rows(grouped);

  // Pick classes from the probability values, then attach the straight-through
  // estimator: values are the exact one-hot, gradient is the identity into the
  // probabilities.
  const auto& pv = probs.values();
  std::vector<double> one_hot(pv.size(), 0.0);
  for (int row = 0; row < b * cfg_.groups; ++row) {
    const double* p = pv.data() + static_cast<std::size_t>(row) * cfg_.classes;
    int pick = 0;
    if (argmax) {
      for (int c = 1; c < cfg_.classes; ++c) {
        if (p[c] > p[pick]) pick = c;
      }
    } else {
      if (rng == nullptr) {
        throw std::invalid_argument("VModel: stochastic sampling needs an rng stream");
      }
      const double u = rng->uniform();
      double cum = 0.0;
      pick = cfg_.classes - 1;
      for (int c = 0; c < cfg_.classes; ++c) {
        cum += p[c];
        if (u < cum) {
          pick = c;
          break;
        }
      }
    }
    one_hot[static_cast<std::size_t>(row) * cfg_.classes + pick] = 1.0;
  }

  auto node = std::make_shared<TensorNode>();
  node->shape = {b * cfg_.groups, cfg_.classes};
  node->values = std::move(one_hot);
  node->op = "straight_through";
  node->parents = {probs.node()};
  node->requires_grad = probs.requires_grad();
  if (node->requires_grad) {
    node->backward_fn = [](TensorNode& n) {
      TensorNode& p = *n.parents[0];
      if (!p.requires_grad) return;
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    };
  }
  return reshape(Tensor(node), {b, cfg_.latent_dim()});
}

Tensor VModel::posterior(const Tensor& logits) const {
  const int b = logits.rows();
  Tensor grouped = reshape(logits, {b * cfg_.groups, cfg_.classes});
  return reshape(softmax_rows(grouped), {b, cfg_.latent_dim()});
}

Tensor VModel::decode(const Tensor& z) const { return decoder_(z); }

Tensor VModel::kl_to_uniform(const Tensor& logits, int batch) const {
  Tensor grouped = reshape(logits, {batch * cfg_.groups, cfg_.classes});
  Tensor logp = log_softmax_rows(grouped);
  // KL(q || uniform) = sum q log q + log C per group.
  Tensor negent = row_sum(mul(exp(logp), logp));
  Tensor kl_group = add_scalar(negent, std::log(static_cast<double>(cfg_.classes)));
  return row_sum(reshape(kl_group, {batch, cfg_.groups}));
}

VModel::Loss VModel::loss(const std::vector<const sim::Observation*>& batch, double k_kl,
                          const losses::FocalParams& focal, RngStream& rng,
                          bool soft_latents) const {
  const int b = static_cast<int>(batch.size());
  Tensor logits = encode_logits(batch);
  Tensor z = soft_latents ? posterior(logits) : sample_latent(logits, false, &rng);
  Tensor recon = decode(z);

  std::vector<double> target;
  target.reserve(static_cast<std::size_t>(b) * cfg_.grid.bev_size());
  for (const auto* obs : batch) {
    target.insert(target.end(), obs->target.begin(), obs->target.end());
  }
  Tensor target_t = Tensor::from(std::move(target), {b, cfg_.grid.bev_size()});

  Tensor rec = losses::sigmoid_focal_loss(recon, target_t, focal);
  Tensor kl = mean(kl_to_uniform(logits, b));
  Loss out;
  out.rec = rec.item();
  out.kl = kl.item();
  out.total = add(rec, scale(kl, k_kl));
  return out;
}

}  // namespace rmbl
