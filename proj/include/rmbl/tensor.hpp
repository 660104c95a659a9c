#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

// Reverse-mode autodiff over dense row-major double arrays. A graph is built
// by the free functions below; backward() walks it once in reverse
// topological order. Graphs are single-threaded by contract; independent
// graphs may run on different threads as long as they never share mutable
// nodes (parameters are shared read-only during forward, and gradient
// accumulation happens on the thread that runs backward).
namespace rmbl {

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated by backward(); empty means zero
  const char* op = "leaf";
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<TensorNode>;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor from(std::vector<double> values, std::vector<int> shape);
  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double v);
  static Tensor scalar(double v);
  // Leaf with requires_grad set; grad storage is allocated up front so that
  // parameters off any loss path report exact zeros.
  static Tensor param(std::vector<double> values, std::vector<int> shape);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->numel(); }
  int rows() const { return node_->shape.at(0); }
  int cols() const { return node_->shape.at(1); }
  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& grad() const { return node_->grad; }
  double item() const;
  double at(std::int64_t i) const { return node_->values[static_cast<std::size_t>(i)]; }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// When on, backward() scans every propagated gradient buffer and throws,
// naming the op tag of the node where a NaN first appeared. Off by default;
// the trainer enables it around loss graphs.
void set_nan_check(bool on);
bool nan_check_enabled();

// Seeds the root gradient with 1 and accumulates into every node on a path
// to the root. Returns the scalar loss value. Throws on a non-scalar root.
double backward(const Tensor& root);

// Convenience matching the (loss, gradient map) contract: runs backward and
// copies out the gradients of the requested leaves.
std::pair<double, std::vector<std::vector<double>>> value_and_grad(
    const Tensor& root, const std::vector<Tensor>& params);

void zero_grad(const std::vector<Tensor>& params);

// ---------------------------------------------------------------------------
// Primitives. Elementwise ops require identical shapes unless stated.
// ---------------------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m,n] op [n]
Tensor add_rowwise(const Tensor& x, const Tensor& b);
Tensor mul_rowwise(const Tensor& x, const Tensor& g);
// [t,d] stacked `times` times -> [times*t, d]
Tensor tile_rows(const Tensor& x, int times);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor powc(const Tensor& a, double exponent);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor clamp_min(const Tensor& a, double lo);
// Wraps each element to (-pi, pi]; derivative 1 almost everywhere.
Tensor wrap_angle(const Tensor& a);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor layernorm_rows(const Tensor& x, double eps = 1e-5);

Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor slice_cols(const Tensor& x, int offset, int len);
Tensor slice_rows(const Tensor& x, int offset, int len);
Tensor reshape(const Tensor& x, std::vector<int> shape);

Tensor sum(const Tensor& x);   // -> [1]
Tensor mean(const Tensor& x);  // -> [1]
Tensor row_sum(const Tensor& x);   // [m,n] -> [m,1]
Tensor row_mean(const Tensor& x);  // [m,n] -> [m,1]

Tensor stop_gradient(const Tensor& x);
// mask holds 0/1 selectors and is never differentiated.
Tensor where(const Tensor& mask, const Tensor& a, const Tensor& b);
// Per-element Huber value: r^2/2 inside |r| <= delta, delta*(|r|-delta/2) outside.
Tensor huber_each(const Tensor& residual, double delta);

// Fused multi-head scaled-dot attention. q is [batch*tq, d], k and v are
// [batch*tk, d], d divisible by heads. With causal=true (requires tq == tk)
// position t attends to positions <= t only.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int batch, int tq, int tk,
                 int heads, bool causal);

// Row-wise KL(N(mean_p, e^logstd_p) || N(mean_a, e^logstd_a)) for diagonal
// Gaussians, summed over the feature dim: [m,d] inputs -> [m,1]. Forward and
// backward are written in expm1 form so both are exactly zero when the two
// parameter sets are bitwise equal.
Tensor kl_diag_gaussian_rows(const Tensor& mean_p, const Tensor& logstd_p, const Tensor& mean_a,
                             const Tensor& logstd_a);

}  // namespace rmbl
