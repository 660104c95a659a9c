#pragma once

#include <vector>

#include "rmbl/tensor.hpp"

namespace rmbl::losses {

// Probability floor applied before any log.
inline constexpr double kProbFloor = 1e-7;

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

// Mean-reduced sigmoid focal loss: with p_t = t*sigmoid(x) + (1-t)*(1-sigmoid(x)),
// each element contributes -alpha * (1 - p_t)^gamma * log(p_t). Targets must be
// exactly 0 or 1.
Tensor sigmoid_focal_loss(const Tensor& logits, const Tensor& targets, const FocalParams& params);

// KL(p || q) between rows of probabilities, summed over the support: [m,C] -> [m,1].
// Rows must be normalized within 1e-9; q is floored before the log.
Tensor kl_categorical_rows(const Tensor& p, const Tensor& q);
// Scalar convenience for a single pair of distributions.
double kl_categorical(const std::vector<double>& p, const std::vector<double>& q);

// Same divergence computed from logits (no normalization requirement).
Tensor kl_categorical_logits_rows(const Tensor& logits_p, const Tensor& logits_q);

// Closed-form KL between diagonal Gaussians, summed over dims.
double kl_diag_gaussian(const std::vector<double>& mean_a, const std::vector<double>& std_a,
                        const std::vector<double>& mean_b, const std::vector<double>& std_b);

// Sum of per-element Huber values: r^2/2 inside |r| <= delta, delta*(|r| - delta/2) outside.
Tensor huber(const Tensor& residual, double delta);

// Mean-reduced BCE over probabilities clamped to [kProbFloor, 1 - kProbFloor].
// Targets must be exactly 0 or 1.
Tensor binary_cross_entropy(const Tensor& probs, const Tensor& targets);

// Per-component affine map to [-1, 1] with clamping at the configured bounds.
struct RewardNormalizer {
  struct Bound {
    double min = -1.0;
    double max = 1.0;
  };
  std::vector<Bound> bounds;

  std::vector<double> normalize(const std::vector<double>& raw) const;
  std::size_t dims() const { return bounds.size(); }
};

// Bounds for the predicted physical-variable vector [v_lon, distance delta,
// theta_diff, d_lat] given the top speed and tick length.
RewardNormalizer default_reward_normalizer(double v_max, double dt);

}  // namespace rmbl::losses
