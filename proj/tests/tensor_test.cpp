#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "rmbl/layers.hpp"
#include "rmbl/rng.hpp"
#include "rmbl/tensor.hpp"

using namespace rmbl;

TEST_CASE("d/dx x^2 = 2x") {
  Tensor x = Tensor::param({3.0}, {1});
  Tensor y = mul(x, x);
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("stop_gradient blocks one path") {
  Tensor x = Tensor::param({2.0}, {1});
  Tensor y = mul(stop_gradient(x), x);
  CHECK(y.item() == doctest::Approx(4.0));
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("gradients upstream of stop_gradient are exactly zero") {
  Tensor x = Tensor::param({1.5}, {1});
  Tensor y = sum(stop_gradient(mul(x, x)));
  backward(y);
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("parameters off the loss path keep exact zero grads") {
  Tensor used = Tensor::param({2.0}, {1});
  Tensor unused = Tensor::param({5.0}, {1});
  Tensor y = mul(used, used);
  backward(y);
  CHECK(unused.grad()[0] == 0.0);
  CHECK(used.grad()[0] == doctest::Approx(4.0));
}

TEST_CASE("backward rejects non-scalar roots") {
  Tensor x = Tensor::param({1.0, 2.0}, {2});
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("nan check names the op that produced the nan") {
  set_nan_check(true);
  Tensor x = Tensor::param({-1.0}, {1});
  CHECK_THROWS_WITH_AS(log(x), doctest::Contains("nan"), std::runtime_error);
  set_nan_check(false);
}

TEST_CASE("random 3-layer MLP gradient matches finite differences") {
  RngStream rng(101);
  ParamStore store;
  Mlp mlp(store, "mlp", {5, 8, 7, 3}, rng);
  Tensor x = Tensor::from({0.3, -0.8, 0.1, 1.2, -0.4, 0.9, 0.0, -1.1, 0.5, 0.2}, {2, 5});
  auto loss_fn = [&]() { return mean(mul(mlp(x), mlp(x))); };
  auto report = oracles::fd_check(loss_fn, store.tensors());
  CHECK_MESSAGE(report.max_rel < 1e-4, report.worst);
}

TEST_CASE("primitive zoo gradient matches finite differences") {
  RngStream rng(55);
  ParamStore store;
  Tensor a = store.create("a", {3, 4}, 0.5, rng);
  Tensor b = store.create("b", {3, 4}, 0.5, rng);
  Tensor w = store.create("w", {4, 4}, 0.5, rng);

  auto loss_fn = [&]() {
    Tensor h = matmul(add(a, mul(a, b)), w);
    h = add_scalar(h, 0.1);
    Tensor parts = concat_cols({sigmoid(h), rmbl::tanh(h)});
    Tensor s = softmax_rows(slice_cols(parts, 1, 5));
    Tensor ln = layernorm_rows(sub(parts, scale(parts, 0.5)));
    Tensor mixed = concat_rows({s, slice_cols(ln, 0, 5)});
    Tensor e = exp(scale(mixed, 0.3));
    Tensor l = log(add_scalar(abs(mixed), 1.0));
    Tensor trig = add(rmbl::sin(slice_rows(mixed, 0, 2)), rmbl::cos(slice_rows(mixed, 2, 2)));
    Tensor p = powc(add_scalar(sigmoid(trig), 0.5), 1.7);
    return add(add(mean(e), mean(l)), add(mean(p), mean(row_sum(sqrt(add_scalar(mul(s, s), 0.3))))));
  };
  auto report = oracles::fd_check(loss_fn, store.tensors());
  CHECK_MESSAGE(report.max_rel < 1e-4, report.worst);
}

TEST_CASE("piecewise primitives: clamp, huber, where, wrap_angle, abs") {
  RngStream rng(56);
  ParamStore store;
  // Values kept away from the kinks so finite differences are valid.
  Tensor a = store.create("a", {2, 6}, 0.3, rng);
  Tensor mask = Tensor::from({1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1}, {2, 6});

  auto loss_fn = [&]() {
    Tensor c = clamp(scale(a, 3.0), -0.5, 0.5);
    Tensor h = huber_each(scale(a, 4.0), 1.0);
    Tensor w = where(mask, mul(a, a), scale(a, -2.0));
    Tensor ang = wrap_angle(add_scalar(scale(a, 8.0), 2.0));
    return add(add(mean(c), mean(h)), add(mean(w), mean(mul(ang, ang))));
  };
  auto report = oracles::fd_check(loss_fn, store.tensors());
  CHECK_MESSAGE(report.max_rel < 1e-4, report.worst);
}

TEST_CASE("kl_diag_gaussian_rows gradient matches finite differences") {
  RngStream rng(57);
  ParamStore store;
  Tensor mp = store.create("mp", {3, 2}, 0.5, rng);
  Tensor lp = store.create("lp", {3, 2}, 0.3, rng);
  Tensor ma = store.create("ma", {3, 2}, 0.5, rng);
  Tensor la = store.create("la", {3, 2}, 0.3, rng);
  auto loss_fn = [&]() { return mean(kl_diag_gaussian_rows(mp, lp, ma, la)); };
  auto report = oracles::fd_check(loss_fn, store.tensors());
  CHECK_MESSAGE(report.max_rel < 1e-4, report.worst);
}

TEST_CASE("kl_diag_gaussian_rows is exactly zero at parameter equality") {
  Tensor mp = Tensor::param({0.3, -0.7}, {1, 2});
  Tensor lp = Tensor::param({-1.0, 0.2}, {1, 2});
  Tensor ma = Tensor::from({0.3, -0.7}, {1, 2});
  Tensor la = Tensor::from({-1.0, 0.2}, {1, 2});
  Tensor kl = kl_diag_gaussian_rows(mp, lp, ma, la);
  CHECK(kl.item() == 0.0);
  backward(sum(kl));
  CHECK(mp.grad()[0] == 0.0);
  CHECK(mp.grad()[1] == 0.0);
  CHECK(lp.grad()[0] == 0.0);
  CHECK(lp.grad()[1] == 0.0);
}

TEST_CASE("forward and backward are deterministic") {
  auto run = [](std::uint64_t seed) {
    RngStream rng(seed);
    ParamStore store;
    Mlp mlp(store, "m", {4, 6, 2}, rng);
    Tensor x = Tensor::from({0.1, 0.2, 0.3, 0.4, -0.1, -0.2, -0.3, -0.4}, {2, 4});
    Tensor loss = mean(mul(mlp(x), mlp(x)));
    backward(loss);
    std::vector<double> out;
    out.push_back(loss.item());
    for (const auto& t : store.tensors()) {
      out.insert(out.end(), t.grad().begin(), t.grad().end());
    }
    return out;
  };
  CHECK(run(42) == run(42));
}

TEST_CASE("wrap_angle lands in (-pi, pi]") {
  Tensor x = Tensor::from({0.0, 3.5, -3.5, 7.0, -7.0, std::numbers::pi}, {6});
  Tensor y = wrap_angle(x);
  for (double v : y.values()) {
    CHECK(v <= std::numbers::pi + 1e-15);
    CHECK(v > -std::numbers::pi - 1e-15);
  }
  CHECK(y.values()[5] == doctest::Approx(std::numbers::pi));
  CHECK(y.values()[1] == doctest::Approx(3.5 - 2.0 * std::numbers::pi));
}
