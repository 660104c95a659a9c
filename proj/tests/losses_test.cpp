#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "rmbl/losses.hpp"
#include "rmbl/rng.hpp"
#include "rmbl/layers.hpp"

using namespace rmbl;
using namespace rmbl::losses;

TEST_CASE("sigmoid focal loss hand values") {
  FocalParams p{0.25, 2.0};

  SUBCASE("confident correct logit drives the loss to ~0") {
    Tensor logits = Tensor::from({50.0}, {1});
    Tensor target = Tensor::from({1.0}, {1});
    CHECK(sigmoid_focal_loss(logits, target, p).item() < 1e-10);
  }
  SUBCASE("target 1, logit 0") {
    Tensor logits = Tensor::from({0.0}, {1});
    Tensor target = Tensor::from({1.0}, {1});
    // -0.25 * 0.25 * ln(0.5)
    CHECK(sigmoid_focal_loss(logits, target, p).item() ==
          doctest::Approx(0.04332169878499658).epsilon(1e-9));
  }
  SUBCASE("target 0, logit 0 is symmetric here") {
    Tensor logits = Tensor::from({0.0}, {1});
    Tensor target = Tensor::from({0.0}, {1});
    CHECK(sigmoid_focal_loss(logits, target, p).item() ==
          doctest::Approx(0.04332169878499658).epsilon(1e-9));
  }
  SUBCASE("rejects non-binary targets") {
    Tensor logits = Tensor::from({0.0}, {1});
    Tensor target = Tensor::from({0.5}, {1});
    CHECK_THROWS_AS(sigmoid_focal_loss(logits, target, p), std::invalid_argument);
  }
  SUBCASE("rejects invalid params") {
    Tensor logits = Tensor::from({0.0}, {1});
    Tensor target = Tensor::from({1.0}, {1});
    CHECK_THROWS_AS(sigmoid_focal_loss(logits, target, {0.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(sigmoid_focal_loss(logits, target, {0.25, -1.0}), std::invalid_argument);
  }
}

TEST_CASE("categorical KL hand values") {
  CHECK(kl_categorical({0.3, 0.7}, {0.3, 0.7}) == 0.0);
  CHECK(kl_categorical({1.0, 0.0}, {0.5, 0.5}) ==
        doctest::Approx(std::numbers::ln2).epsilon(1e-9));

  const double forward = kl_categorical({0.9, 0.1}, {0.5, 0.5});
  const double reverse = kl_categorical({0.5, 0.5}, {0.9, 0.1});
  CHECK(forward == doctest::Approx(0.3680642071684971).epsilon(1e-9));
  CHECK(reverse == doctest::Approx(0.5108256237659906).epsilon(1e-9));
  CHECK(forward != reverse);

  CHECK_THROWS_AS(kl_categorical({0.5, 0.6}, {0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("kl(p, p) is exactly zero over 1000 random distributions") {
  RngStream rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = 2 + rng.uniform_int(6);
    std::vector<double> p(static_cast<std::size_t>(c));
    double s = 0.0;
    for (auto& v : p) {
      v = rng.uniform(1e-4, 1.0);
      s += v;
    }
    double renorm = 0.0;
    for (auto& v : p) {
      v /= s;
      renorm += v;
    }
    p.back() += 1.0 - renorm;  // make the sum exact
    CHECK(kl_categorical(p, p) == 0.0);
  }
}

TEST_CASE("diag gaussian KL closed form") {
  CHECK(kl_diag_gaussian({0.0}, {1.0}, {0.0}, {1.0}) == doctest::Approx(0.0));
  CHECK(kl_diag_gaussian({0.0}, {1.0}, {1.0}, {1.0}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(kl_diag_gaussian({0.3}, {1.0}, {0.3}, {2.0}) ==
        doctest::Approx(0.3181471805599453).epsilon(1e-12));
  CHECK_THROWS_AS(kl_diag_gaussian({0.0}, {-1.0}, {0.0}, {1.0}), std::invalid_argument);
}

TEST_CASE("huber hand values") {
  CHECK(huber(Tensor::from({0.0}, {1}), 1.0).item() == 0.0);
  CHECK(huber(Tensor::from({0.5}, {1}), 1.0).item() == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(huber(Tensor::from({2.0}, {1}), 1.0).item() == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(huber(Tensor::from({-2.0}, {1}), 1.0).item() == doctest::Approx(1.5).epsilon(1e-12));
  CHECK_THROWS_AS(huber(Tensor::from({1.0}, {1}), 0.0), std::invalid_argument);
}

TEST_CASE("binary cross entropy hand values") {
  CHECK(binary_cross_entropy(Tensor::from({1.0}, {1}), Tensor::from({1.0}, {1})).item() < 1e-6);
  CHECK(binary_cross_entropy(Tensor::from({0.5}, {1}), Tensor::from({1.0}, {1})).item() ==
        doctest::Approx(std::numbers::ln2).epsilon(1e-9));
  CHECK(binary_cross_entropy(Tensor::from({0.5}, {1}), Tensor::from({0.0}, {1})).item() ==
        doctest::Approx(std::numbers::ln2).epsilon(1e-9));
  CHECK(binary_cross_entropy(Tensor::from({0.9}, {1}), Tensor::from({0.0}, {1})).item() ==
        doctest::Approx(2.302585092994046).epsilon(1e-9));
}

TEST_CASE("reward vector normalization") {
  auto norm = default_reward_normalizer(8.0, 0.1);
  REQUIRE(norm.dims() == 4);

  auto at_min = norm.normalize({0.0, 0.0, -std::numbers::pi, -3.5});
  for (double v : at_min) CHECK(v == doctest::Approx(-1.0));

  auto mid = norm.normalize({4.0, 0.4, 0.0, 0.0});
  for (double v : mid) CHECK(v == doctest::Approx(0.0));

  auto above = norm.normalize({12.0, 1.0, 4.0, 5.0});
  for (double v : above) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("loss gradients match finite differences") {
  RngStream rng(71);
  ParamStore store;
  Tensor logits = store.create("logits", {4, 4}, 1.0, rng);
  Tensor qlogits = store.create("qlogits", {4, 4}, 1.0, rng);
  std::vector<double> tv(16);
  for (auto& t : tv) t = rng.uniform() < 0.4 ? 1.0 : 0.0;
  Tensor targets = Tensor::from(tv, {4, 4});

  SUBCASE("focal") {
    auto loss_fn = [&]() { return sigmoid_focal_loss(logits, targets, {0.25, 2.0}); };
    auto report = oracles::fd_check(loss_fn, {logits});
    CHECK_MESSAGE(report.max_rel < 1e-4, report.worst);
  }
  SUBCASE("categorical KL through softmax") {
    auto loss_fn = [&]() {
      return mean(kl_categorical_rows(softmax_rows(logits), softmax_rows(qlogits)));
    };
    auto report = oracles::fd_check(loss_fn, {logits, qlogits});
    CHECK_MESSAGE(report.max_rel < 1e-4, report.worst);
  }
  SUBCASE("categorical KL from logits") {
    auto loss_fn = [&]() { return mean(kl_categorical_logits_rows(logits, qlogits)); };
    auto report = oracles::fd_check(loss_fn, {logits, qlogits});
    CHECK_MESSAGE(report.max_rel < 1e-4, report.worst);
  }
  SUBCASE("huber") {
    auto loss_fn = [&]() { return huber(scale(logits, 0.8), 1.0); };
    auto report = oracles::fd_check(loss_fn, {logits});
    CHECK_MESSAGE(report.max_rel < 1e-4, report.worst);
  }
  SUBCASE("bce") {
    auto loss_fn = [&]() { return binary_cross_entropy(sigmoid(logits), targets); };
    auto report = oracles::fd_check(loss_fn, {logits});
    CHECK_MESSAGE(report.max_rel < 1e-4, report.worst);
  }
}

TEST_CASE("losses are non-negative at random inputs and zero at minimizers") {
  RngStream rng(72);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> lv(8), tv(8);
    for (auto& v : lv) v = rng.uniform(-4.0, 4.0);
    for (auto& v : tv) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    Tensor logits = Tensor::from(lv, {2, 4});
    Tensor targets = Tensor::from(tv, {2, 4});
    CHECK(sigmoid_focal_loss(logits, targets, {0.25, 2.0}).item() >= 0.0);
    CHECK(binary_cross_entropy(sigmoid(logits), targets).item() >= 0.0);
    CHECK(huber(logits, 1.0).item() >= 0.0);
  }
}
