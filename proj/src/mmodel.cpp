#include "rmbl/mmodel.hpp"

#include <stdexcept>

namespace rmbl {

MModel::MModel(MModelConfig cfg, RngStream& rng) : cfg_(cfg) {
  z_in_ = Linear(params_, "m.mix.z", cfg_.latent_dim(), cfg_.width, rng);
  a_in_ = Linear(params_, "m.mix.a", 2, cfg_.action_embed, rng);
  mix_out_ = Linear(params_, "m.mix.out", cfg_.width + cfg_.action_embed, cfg_.width, rng);
  pos_ = params_.create("m.pos", {cfg_.context, cfg_.width}, 0.02, rng);
  for (int l = 0; l < cfg_.layers; ++l) {
    blocks_.emplace_back(params_, "m.blk" + std::to_string(l), cfg_.width, cfg_.heads,
                         cfg_.mlp_mult, rng);
  }
  ln_out_ = LayerNorm(params_, "m.ln_out", cfg_.width);
  dyn_head_ = Linear(params_, "m.head.dyn", cfg_.width, cfg_.latent_dim(), rng);
  rew_head_ = Mlp(params_, "m.head.rew", {cfg_.width, cfg_.head_hidden, cfg_.reward_dim}, rng);
  con_head_ = Mlp(params_, "m.head.con", {cfg_.width, cfg_.head_hidden, 1}, rng);
}

Tensor MModel::mix(const Tensor& z, const Tensor& action) const {
  Tensor zh = rmbl::tanh(z_in_(z));
  Tensor ah = rmbl::tanh(a_in_(action));
  return mix_out_(concat_cols({zh, ah}));
}

Tensor MModel::sequence_forward(const Tensor& mixed, int batch, int t) const {
  if (t < 1) {
    throw std::invalid_argument("MModel: sequence length must be positive");
  }
  Tensor tokens = mixed;
  if (t > cfg_.context) {
    // Longer inputs keep only the most recent `context` tokens per window.
    std::vector<Tensor> kept;
    kept.reserve(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      kept.push_back(slice_rows(mixed, b * t + (t - cfg_.context), cfg_.context));
    }
    tokens = batch == 1 ? kept.front() : concat_rows(kept);
    t = cfg_.context;
  }
  Tensor h = add(tokens, tile_rows(slice_rows(pos_, 0, t), batch));
  for (const auto& blk : blocks_) {
    h = blk(h, batch, t, true);
  }
  return ln_out_(h);
}

MModel::Heads MModel::heads(const Tensor& h) const {
  Heads out;
  out.next_logits = dyn_head_(h);
  out.reward = rew_head_(h);
  out.cont = sigmoid(con_head_(h));
  return out;
}

Tensor MModel::grouped_kl(const Tensor& logits_p, const Tensor& logits_q, int rows) const {
  Tensor p = reshape(logits_p, {rows * cfg_.groups, cfg_.classes});
  Tensor q = reshape(logits_q, {rows * cfg_.groups, cfg_.classes});
  Tensor kl = losses::kl_categorical_logits_rows(p, q);
  return row_sum(reshape(kl, {rows, cfg_.groups}));
}

MModel::Loss MModel::loss(const VModel& v, const LossInputs& in, const MLossWeights& w,
                          const losses::FocalParams& focal, RngStream& rng,
                          bool soft_latents) const {
  const int rows = in.batch * in.t;
  Tensor e = mix(in.z, in.action);
  Tensor h = sequence_forward(e, in.batch, in.t);
  Heads hd = heads(h);

  // Reconstruction: sample the predicted next latent, decode with the V
  // decoder and score against the next BEV labels.
  Tensor z_next = soft_latents ? v.posterior(hd.next_logits)
                               : v.sample_latent(hd.next_logits, false, &rng);
  Tensor rec = losses::sigmoid_focal_loss(v.decode(z_next), in.target_next, focal);

  // Free-bit clamp at 1 nat per timestep; dynamics trains the predictor,
  // representation trains the encoder side.
  Tensor dyn = mean(clamp_min(grouped_kl(stop_gradient(in.enc_next), hd.next_logits, rows), 1.0));
  Tensor rep = mean(clamp_min(grouped_kl(in.enc_next, stop_gradient(hd.next_logits), rows), 1.0));

  Tensor rew = mean(row_sum(huber_each(sub(hd.reward, in.reward), cfg_.huber_delta)));
  Tensor con = losses::binary_cross_entropy(hd.cont, in.cont);

  Loss out;
  out.rec = rec.item();
  out.dyn = dyn.item();
  out.rep = rep.item();
  out.rew = rew.item();
  out.con = con.item();
  out.total = add(rec, add(add(scale(dyn, w.dyn), scale(rep, w.rep)),
                           add(scale(rew, w.rew), scale(con, w.con))));
  return out;
}

MModel::Imagined MModel::imagine(const VModel& v, std::vector<std::vector<double>> context_z,
                                 std::vector<std::vector<double>> context_a,
                                 const std::vector<std::vector<double>>& future_actions,
                                 int horizon, bool argmax, RngStream& rng) const {
  if (context_z.size() != context_a.size() || context_z.empty()) {
    throw std::invalid_argument("MModel::imagine: context z/a sizes must match and be non-empty");
  }
  if (static_cast<int>(context_z.size()) > cfg_.context) {
    throw std::invalid_argument("MModel::imagine: context longer than the window");
  }
  if (static_cast<int>(future_actions.size()) < horizon) {
    throw std::invalid_argument("MModel::imagine: need one action per imagined step");
  }

  Imagined out;
  for (int k = 0; k < horizon; ++k) {
    // Keep the most recent `context` tokens.
    const int t = static_cast<int>(context_z.size());
    const int start = std::max(0, t - cfg_.context);
    const int len = t - start;
    std::vector<double> zbuf, abuf;
    for (int i = start; i < t; ++i) {
      zbuf.insert(zbuf.end(), context_z[static_cast<std::size_t>(i)].begin(),
                  context_z[static_cast<std::size_t>(i)].end());
      abuf.insert(abuf.end(), context_a[static_cast<std::size_t>(i)].begin(),
                  context_a[static_cast<std::size_t>(i)].end());
    }
    Tensor z = Tensor::from(std::move(zbuf), {len, cfg_.latent_dim()});
    Tensor a = Tensor::from(std::move(abuf), {len, 2});
    Tensor h = sequence_forward(mix(z, a), 1, len);
    Tensor logits = dyn_head_(slice_rows(h, len - 1, 1));
    Tensor z_next = v.sample_latent(logits, argmax, &rng);
    Tensor decoded = sigmoid(v.decode(z_next));

    out.latents.push_back(z_next.values());
    out.decoded.push_back(decoded.values());
    context_z.push_back(z_next.values());
    context_a.push_back(future_actions[static_cast<std::size_t>(k)]);
  }
  return out;
}

}  // namespace rmbl
