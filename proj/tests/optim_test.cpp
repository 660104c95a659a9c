#include <doctest.h>

#include "rmbl/optim.hpp"
#include "rmbl/tensor.hpp"

using namespace rmbl;

TEST_CASE("zero gradient leaves parameters exactly unchanged") {
  Tensor p = Tensor::param({1.0, -2.0, 3.0}, {3});
  Adam opt({p}, {.lr = 0.1});
  opt.zero_grad();
  opt.step();
  CHECK(p.values()[0] == 1.0);
  CHECK(p.values()[1] == -2.0);
  CHECK(p.values()[2] == 3.0);
}

TEST_CASE("one step on f(x)=x from 0 moves by about -lr") {
  // Hand-evaluated recurrence: m_hat = g, v_hat = g^2, step = lr*g/(|g|+eps).
  Tensor x = Tensor::param({0.0}, {1});
  Adam opt({x}, {.lr = 0.1});
  Tensor loss = sum(x);
  backward(loss);
  opt.step();
  CHECK(x.values()[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("identical state and gradients give identical updates") {
  auto run = []() {
    Tensor p = Tensor::param({0.5, -0.25}, {2});
    Adam opt({p}, {.lr = 0.01});
    for (int i = 0; i < 5; ++i) {
      opt.zero_grad();
      Tensor loss = sum(mul(p, p));
      backward(loss);
      opt.step();
    }
    return p.values();
  };
  CHECK(run() == run());
}

TEST_CASE("gradient of the wrong shape is rejected") {
  Tensor p = Tensor::param({1.0, 2.0}, {2});
  Adam opt({p}, {});
  p.node()->grad.assign(3, 0.0);
  CHECK_THROWS_AS(opt.step(), std::invalid_argument);
}

TEST_CASE("adam converges on a convex bowl") {
  Tensor p = Tensor::param({4.0, -3.0}, {2});
  Adam opt({p}, {.lr = 0.05});
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    Tensor loss = sum(mul(p, p));
    backward(loss);
    opt.step();
  }
  CHECK(std::abs(p.values()[0]) < 1e-2);
  CHECK(std::abs(p.values()[1]) < 1e-2);
}
