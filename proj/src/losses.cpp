#include "rmbl/losses.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rmbl::losses {

namespace {
void require_binary(const Tensor& targets, const char* op) {
  for (double t : targets.values()) {
    if (t != 0.0 && t != 1.0) {
      throw std::invalid_argument(std::string(op) + ": targets must be exactly 0 or 1");
    }
  }
}
}  // namespace

Tensor sigmoid_focal_loss(const Tensor& logits, const Tensor& targets, const FocalParams& params) {
  if (logits.shape() != targets.shape()) {
    throw std::invalid_argument("sigmoid_focal_loss: shape mismatch");
  }
  if (params.alpha <= 0.0 || params.alpha > 1.0 || params.gamma < 0.0) {
    throw std::invalid_argument("sigmoid_focal_loss: alpha in (0,1] and gamma >= 0 required");
  }
  require_binary(targets, "sigmoid_focal_loss");
  Tensor ones = Tensor::full(logits.shape(), 1.0);
  Tensor s = sigmoid(logits);
  Tensor p = add(mul(s, targets), mul(sub(ones, s), sub(ones, targets)));
  Tensor p_safe = clamp(p, kProbFloor, 1.0);
  Tensor focus = powc(sub(ones, p_safe), params.gamma);
  Tensor each = scale(mul(focus, log(p_safe)), -params.alpha);
  return mean(each);
}

Tensor kl_categorical_rows(const Tensor& p, const Tensor& q) {
  if (p.shape() != q.shape()) {
    throw std::invalid_argument("kl_categorical: shape mismatch");
  }
  if (p.shape().size() != 2) {
    throw std::invalid_argument("kl_categorical: expected [rows, classes]");
  }
  const int m = p.rows(), c = p.cols();
  for (int i = 0; i < m; ++i) {
    double sp = 0.0, sq = 0.0;
    for (int j = 0; j < c; ++j) {
      sp += p.values()[static_cast<std::size_t>(i) * c + j];
      sq += q.values()[static_cast<std::size_t>(i) * c + j];
    }
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
      throw std::invalid_argument("kl_categorical: distributions must sum to 1 within 1e-9");
    }
  }
  Tensor p_safe = clamp_min(p, kProbFloor * kProbFloor);
  Tensor q_safe = clamp_min(q, kProbFloor);
  return row_sum(mul(p, sub(log(p_safe), log(q_safe))));
}

double kl_categorical(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("kl_categorical: size mismatch");
  }
  const int c = static_cast<int>(p.size());
  Tensor tp = Tensor::from(p, {1, c});
  Tensor tq = Tensor::from(q, {1, c});
  return kl_categorical_rows(tp, tq).item();
}

Tensor kl_categorical_logits_rows(const Tensor& logits_p, const Tensor& logits_q) {
  if (logits_p.shape() != logits_q.shape()) {
    throw std::invalid_argument("kl_categorical_logits: shape mismatch");
  }
  Tensor lp = log_softmax_rows(logits_p);
  Tensor lq = log_softmax_rows(logits_q);
  return row_sum(mul(exp(lp), sub(lp, lq)));
}

double kl_diag_gaussian(const std::vector<double>& mean_a, const std::vector<double>& std_a,
                        const std::vector<double>& mean_b, const std::vector<double>& std_b) {
  if (mean_a.size() != std_a.size() || mean_a.size() != mean_b.size() ||
      mean_a.size() != std_b.size()) {
    throw std::invalid_argument("kl_diag_gaussian: size mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < mean_a.size(); ++i) {
    if (std_a[i] <= 0.0 || std_b[i] <= 0.0) {
      throw std::invalid_argument("kl_diag_gaussian: stds must be positive");
    }
    const double diff = mean_a[i] - mean_b[i];
    const double var_ratio = (std_a[i] * std_a[i]) / (std_b[i] * std_b[i]);
    kl += std::log(std_b[i] / std_a[i]) + 0.5 * (var_ratio + diff * diff / (std_b[i] * std_b[i])) -
          0.5;
  }
  return kl;
}

Tensor huber(const Tensor& residual, double delta) {
  return sum(huber_each(residual, delta));
}

Tensor binary_cross_entropy(const Tensor& probs, const Tensor& targets) {
  if (probs.shape() != targets.shape()) {
    throw std::invalid_argument("binary_cross_entropy: shape mismatch");
  }
  require_binary(targets, "binary_cross_entropy");
  Tensor ones = Tensor::full(probs.shape(), 1.0);
  Tensor p = clamp(probs, kProbFloor, 1.0 - kProbFloor);
  Tensor each = add(mul(targets, log(p)), mul(sub(ones, targets), log(sub(ones, p))));
  return scale(mean(each), -1.0);
}

std::vector<double> RewardNormalizer::normalize(const std::vector<double>& raw) const {
  if (raw.size() != bounds.size()) {
    throw std::invalid_argument("RewardNormalizer: component count mismatch");
  }
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& b = bounds[i];
    if (!(b.min < b.max)) {
      throw std::invalid_argument("RewardNormalizer: min must be below max");
    }
    const double unit = (raw[i] - b.min) / (b.max - b.min) * 2.0 - 1.0;
    out[i] = unit < -1.0 ? -1.0 : (unit > 1.0 ? 1.0 : unit);
  }
  return out;
}

RewardNormalizer default_reward_normalizer(double v_max, double dt) {
  RewardNormalizer n;
  n.bounds = {
      {0.0, v_max},        // v_lon
      {0.0, v_max * dt},   // per-step distance delta
      {-std::numbers::pi, std::numbers::pi},  // theta_diff
      {-3.5, 3.5},         // d_lat
  };
  return n;
}

}  // namespace rmbl::losses
