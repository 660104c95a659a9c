#pragma once

// Finite-difference probes for losses that contain stop-gradients or hard
// samples. Stop-gradient sides are frozen as constants at the evaluation
// point (that is the function the estimator actually differentiates) and the
// latent draw runs through the soft probability path.

#include "rmbl/losses.hpp"
#include "rmbl/mmodel.hpp"
#include "rmbl/vmodel.hpp"

namespace probes {

struct FrozenMLoss {
  rmbl::Tensor enc_frozen;
  rmbl::Tensor pred_frozen;

  // Snapshot the sg sides at the base point before probing.
  FrozenMLoss(const rmbl::MModel& m, const rmbl::MModel::LossInputs& in) {
    const auto heads =
        m.heads(m.sequence_forward(m.mix(in.z, in.action), in.batch, in.t));
    pred_frozen = rmbl::Tensor::from(heads.next_logits.values(), heads.next_logits.shape());
    enc_frozen = rmbl::Tensor::from(in.enc_next.values(), in.enc_next.shape());
  }

  rmbl::Tensor operator()(const rmbl::VModel& v, const rmbl::MModel& m,
                          const rmbl::MModel::LossInputs& in, const rmbl::MLossWeights& w,
                          const rmbl::losses::FocalParams& focal) const {
    const int rows = in.batch * in.t;
    const auto hd = m.heads(m.sequence_forward(m.mix(in.z, in.action), in.batch, in.t));
    rmbl::Tensor rec =
        rmbl::losses::sigmoid_focal_loss(v.decode(v.posterior(hd.next_logits)), in.target_next,
                                         focal);
    rmbl::Tensor dyn =
        rmbl::mean(rmbl::clamp_min(m.grouped_kl(enc_frozen, hd.next_logits, rows), 1.0));
    rmbl::Tensor rep =
        rmbl::mean(rmbl::clamp_min(m.grouped_kl(in.enc_next, pred_frozen, rows), 1.0));
    rmbl::Tensor rew =
        rmbl::mean(rmbl::row_sum(rmbl::huber_each(rmbl::sub(hd.reward, in.reward),
                                                  m.config().huber_delta)));
    rmbl::Tensor con = rmbl::losses::binary_cross_entropy(hd.cont, in.cont);
    return rmbl::add(rec, rmbl::add(rmbl::add(rmbl::scale(dyn, w.dyn), rmbl::scale(rep, w.rep)),
                                    rmbl::add(rmbl::scale(rew, w.rew),
                                              rmbl::scale(con, w.con))));
  }
};

}  // namespace probes
