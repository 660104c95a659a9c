#pragma once

#include <cstdint>
#include <vector>

#include "rmbl/tensor.hpp"

namespace rmbl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are allocated per parameter at
// construction and always match the parameter shapes; the step counter only
// moves forward.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  // Applies one update using the gradients currently stored on the params.
  void step();
  void step(double lr_override);
  void zero_grad() const;

  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
};

}  // namespace rmbl
