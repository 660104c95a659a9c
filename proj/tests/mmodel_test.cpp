#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "loss_probes.hpp"
#include "rmbl/mmodel.hpp"

using namespace rmbl;

namespace {

VModelConfig tiny_v() {
  VModelConfig cfg;
  cfg.grid.height = 8;
  cfg.grid.width = 8;
  cfg.grid.route_points = 3;
  cfg.groups = 2;
  cfg.classes = 4;
  cfg.patch = 4;
  cfg.embed = 8;
  cfg.heads = 2;
  cfg.enc_hidden = 16;
  cfg.dec_hidden = 16;
  return cfg;
}

MModelConfig tiny_m() {
  MModelConfig cfg;
  cfg.context = 3;
  cfg.width = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.mlp_mult = 2;
  cfg.groups = 2;
  cfg.classes = 4;
  cfg.action_embed = 4;
  cfg.head_hidden = 8;
  return cfg;
}

Tensor random_latents(int rows, const MModelConfig& cfg, RngStream& rng) {
  std::vector<double> z(static_cast<std::size_t>(rows) * cfg.latent_dim(), 0.0);
  for (int r = 0; r < rows; ++r) {
    for (int g = 0; g < cfg.groups; ++g) {
      const int pick = rng.uniform_int(cfg.classes);
      z[static_cast<std::size_t>(r) * cfg.latent_dim() + g * cfg.classes + pick] = 1.0;
    }
  }
  return Tensor::from(std::move(z), {rows, cfg.latent_dim()});
}

Tensor random_actions(int rows, RngStream& rng) {
  std::vector<double> a(static_cast<std::size_t>(rows) * 2);
  for (auto& v : a) v = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(a), {rows, 2});
}

}  // namespace

TEST_CASE("mix is deterministic and the action path is live") {
  RngStream init(31);
  MModel m(tiny_m(), init);
  RngStream rng(32);
  Tensor z = random_latents(2, m.config(), rng);
  Tensor a = random_actions(2, rng);
  const auto e1 = m.mix(z, a).values();
  const auto e2 = m.mix(z, a).values();
  CHECK(e1 == e2);

  auto av = a.values();
  av[0] += 0.25;
  const auto e3 = m.mix(z, Tensor::from(av, {2, 2})).values();
  CHECK(e1 != e3);
}

TEST_CASE("mix gradient reaches both the latent and the action") {
  RngStream init(33);
  MModel m(tiny_m(), init);
  RngStream rng(34);
  ParamStore leaves;
  Tensor z = leaves.create("z", {2, m.config().latent_dim()}, 0.5, rng);
  Tensor a = leaves.create("a", {2, 2}, 0.5, rng);
  auto loss_fn = [&]() { return mean(mul(m.mix(z, a), m.mix(z, a))); };
  auto report = oracles::fd_check(loss_fn, {z, a});
  CHECK_MESSAGE(report.max_rel < 1e-4, report.worst);
}

TEST_CASE("sequence forward is causal at every layer count") {
  for (int layers = 1; layers <= 2; ++layers) {
    auto cfg = tiny_m();
    cfg.layers = layers;
    RngStream init(35);
    MModel m(cfg, init);
    RngStream rng(36);
    const int batch = 2, t = 3;
    Tensor z = random_latents(batch * t, cfg, rng);
    Tensor a = random_actions(batch * t, rng);
    Tensor h1 = m.sequence_forward(m.mix(z, a), batch, t);

    // perturb the final token of each window
    auto av = a.values();
    for (int b = 0; b < batch; ++b) {
      av[static_cast<std::size_t>((b * t + t - 1) * 2)] += 0.5;
    }
    Tensor h2 = m.sequence_forward(m.mix(z, Tensor::from(av, {batch * t, 2})), batch, t);
    for (int b = 0; b < batch; ++b) {
      for (int tt = 0; tt < t - 1; ++tt) {
        for (int j = 0; j < cfg.width; ++j) {
          const std::size_t i = static_cast<std::size_t>((b * t + tt) * cfg.width + j);
          CHECK(h1.values()[i] == h2.values()[i]);
        }
      }
    }
  }
}

TEST_CASE("sequence forward works at t=1 and slides for t beyond the window") {
  auto cfg = tiny_m();
  RngStream init(37);
  MModel m(cfg, init);
  RngStream rng(38);

  Tensor z1 = random_latents(1, cfg, rng);
  Tensor a1 = random_actions(1, rng);
  CHECK(m.sequence_forward(m.mix(z1, a1), 1, 1).rows() == 1);

  const int t_long = cfg.context + 2;
  Tensor z = random_latents(t_long, cfg, rng);
  Tensor a = random_actions(t_long, rng);
  Tensor mixed = m.mix(z, a);
  Tensor h_long = m.sequence_forward(mixed, 1, t_long);
  CHECK(h_long.rows() == cfg.context);

  Tensor tail = slice_rows(mixed, t_long - cfg.context, cfg.context);
  Tensor h_tail = m.sequence_forward(tail, 1, cfg.context);
  CHECK(h_long.values() == h_tail.values());
}

TEST_CASE("heads produce normalized latents, probabilities and the reward vector") {
  auto cfg = tiny_m();
  RngStream init(39);
  MModel m(cfg, init);
  RngStream rng(40);
  Tensor z = random_latents(3, cfg, rng);
  Tensor a = random_actions(3, rng);
  Tensor h = m.sequence_forward(m.mix(z, a), 1, 3);
  const auto heads = m.heads(h);

  CHECK(heads.reward.cols() == cfg.reward_dim);
  for (double c : heads.cont.values()) {
    CHECK(c > 0.0);
    CHECK(c < 1.0);
  }
  Tensor probs = softmax_rows(
      reshape(heads.next_logits, {3 * cfg.groups, cfg.classes}));
  for (int r = 0; r < 3 * cfg.groups; ++r) {
    double s = 0.0;
    for (int c = 0; c < cfg.classes; ++c) {
      s += probs.values()[static_cast<std::size_t>(r * cfg.classes + c)];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("free-bit clamp floors the dynamics term at one") {
  auto cfg = tiny_m();
  RngStream init(41);
  MModel m(cfg, init);
  // identical logits: KL = 0 -> clamped value contributes exactly 1
  Tensor p = Tensor::from({0.5, -0.2, 0.1, 0.7, 0.0, 0.3, -0.4, 0.2}, {1, cfg.latent_dim()});
  Tensor kl = m.grouped_kl(p, p, 1);
  CHECK(kl.item() == 0.0);
  CHECK(clamp_min(kl, 1.0).item() == 1.0);

  // far-apart logits exceed the floor and pass through untouched
  Tensor q = scale(p, -8.0);
  const double raw = m.grouped_kl(p, q, 1).item();
  CHECK(raw > 1.0);
  CHECK(clamp_min(m.grouped_kl(p, q, 1), 1.0).item() == raw);
}

TEST_CASE("dynamics/representation stop-gradients are exact") {
  auto cfg = tiny_m();
  RngStream init(42);
  MModel m(cfg, init);
  RngStream rng(43);
  ParamStore leaves;
  // logits far enough apart that the free-bit clamp stays inactive
  Tensor enc = leaves.create("enc", {2, cfg.latent_dim()}, 2.0, rng);
  Tensor pred = leaves.create("pred", {2, cfg.latent_dim()}, 2.0, rng);

  SUBCASE("dynamics trains only the predictor side") {
    Tensor dyn = mean(clamp_min(m.grouped_kl(stop_gradient(enc), pred, 2), 1.0));
    REQUIRE(dyn.item() > 1.0);
    backward(dyn);
    for (double g : enc.grad()) CHECK(g == 0.0);
    double pred_norm = 0.0;
    for (double g : pred.grad()) pred_norm += std::abs(g);
    CHECK(pred_norm > 0.0);
  }
  SUBCASE("representation trains only the encoder side") {
    Tensor rep = mean(clamp_min(m.grouped_kl(enc, stop_gradient(pred), 2), 1.0));
    REQUIRE(rep.item() > 1.0);
    backward(rep);
    for (double g : pred.grad()) CHECK(g == 0.0);
    double enc_norm = 0.0;
    for (double g : enc.grad()) enc_norm += std::abs(g);
    CHECK(enc_norm > 0.0);
  }
}

TEST_CASE("m loss composes, reports components and matches finite differences") {
  auto vcfg = tiny_v();
  auto mcfg = tiny_m();
  RngStream vinit(44), minit(45);
  VModel v(vcfg, vinit);
  MModel m(mcfg, minit);
  RngStream rng(46);

  const int batch = 2, t = 3, rows = batch * t;
  MModel::LossInputs in;
  in.z = random_latents(rows, mcfg, rng);
  in.action = random_actions(rows, rng);
  ParamStore leaves;
  // spread the encoder logits so every per-row KL sits clear of the free-bit
  // kink at 1; finite differences are invalid straddling it
  in.enc_next = leaves.create("enc_next", {rows, mcfg.latent_dim()}, 3.0, rng);
  std::vector<double> target(static_cast<std::size_t>(rows) * vcfg.grid.bev_size());
  for (auto& x : target) x = rng.uniform() < 0.3 ? 1.0 : 0.0;
  in.target_next = Tensor::from(std::move(target), {rows, vcfg.grid.bev_size()});
  std::vector<double> rew(static_cast<std::size_t>(rows) * mcfg.reward_dim);
  for (auto& x : rew) x = rng.uniform(-1.0, 1.0);
  in.reward = Tensor::from(std::move(rew), {rows, mcfg.reward_dim});
  std::vector<double> cont(static_cast<std::size_t>(rows));
  for (auto& x : cont) x = rng.uniform() < 0.8 ? 1.0 : 0.0;
  in.cont = Tensor::from(std::move(cont), {rows, 1});
  in.batch = batch;
  in.t = t;

  const MLossWeights w{0.7, 0.2, 0.5, 0.4};
  RngStream srng(47);
  const auto loss = m.loss(v, in, w, {0.25, 2.0}, srng, true);
  CHECK(loss.dyn >= 1.0);  // free bits floor
  CHECK(loss.rep >= 1.0);
  CHECK(loss.con >= 0.0);
  CHECK(loss.total.item() ==
        doctest::Approx(loss.rec + w.dyn * loss.dyn + w.rep * loss.rep + w.rew * loss.rew +
                        w.con * loss.con)
            .epsilon(1e-12));

  // Finite differences with the stop-gradient sides frozen at the base point
  // (the function the estimator differentiates) and soft latents in place of
  // the hard draw; the frozen composition must agree with the live loss here.
  const probes::FrozenMLoss frozen(m, in);
  auto loss_fn = [&]() { return frozen(v, m, in, w, {0.25, 2.0}); };
  CHECK(loss_fn().item() == doctest::Approx(loss.total.item()).epsilon(1e-12));

  std::vector<Tensor> params = m.params().tensors();
  params.push_back(in.enc_next);
  auto report = oracles::fd_check(loss_fn, params, 1e-5, 12);
  CHECK_MESSAGE(report.max_rel < 1e-4, report.worst);
}

TEST_CASE("imagination: empty horizon, argmax determinism") {
  auto vcfg = tiny_v();
  auto mcfg = tiny_m();
  RngStream vinit(48), minit(49);
  VModel v(vcfg, vinit);
  MModel m(mcfg, minit);
  RngStream rng(50);

  std::vector<std::vector<double>> ctx_z, ctx_a, future;
  for (int t = 0; t < mcfg.context; ++t) {
    Tensor z = random_latents(1, mcfg, rng);
    ctx_z.push_back(z.values());
    ctx_a.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
  }
  for (int k = 0; k < 5; ++k) future.push_back({0.2, 0.0});

  RngStream r1(51), r2(51);
  const auto empty = m.imagine(v, ctx_z, ctx_a, future, 0, true, r1);
  CHECK(empty.latents.empty());
  CHECK(empty.decoded.empty());

  const auto a = m.imagine(v, ctx_z, ctx_a, future, 5, true, r1);
  const auto b = m.imagine(v, ctx_z, ctx_a, future, 5, true, r2);
  REQUIRE(a.latents.size() == 5);
  CHECK(a.latents == b.latents);
  CHECK(a.decoded == b.decoded);
  CHECK(a.decoded[0].size() == static_cast<std::size_t>(vcfg.grid.bev_size()));
}
