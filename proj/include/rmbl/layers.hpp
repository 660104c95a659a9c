#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rmbl/rng.hpp"
#include "rmbl/tensor.hpp"

namespace rmbl {

// Named registry of trainable leaves. Layers register their parameters here
// so optimizers, checkpoints and soft updates can address the whole model by
// (name, tensor) pairs in a stable order.
class ParamStore {
 public:
  Tensor create(const std::string& name, std::vector<int> shape, double init_std, RngStream& rng);
  Tensor create_const(const std::string& name, std::vector<int> shape, double value);

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<Tensor> tensors() const;
  const Tensor& find(const std::string& name) const;
  std::size_t size() const { return items_.size(); }
  std::int64_t scalar_count() const;

  void zero_grad() const;
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values) const;
  // Position-wise copy between architecture-identical stores.
  void copy_from(const ParamStore& other) const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// dst <- tau * src + (1 - tau) * dst, parameter-wise. Stores must be
// architecture-identical.
void polyak_update(const ParamStore& dst, const ParamStore& src, double tau);

double param_distance(const ParamStore& a, const ParamStore& b);

struct Linear {
  Linear() = default;
  Linear(ParamStore& store, const std::string& prefix, int in, int out, RngStream& rng,
         double init_std_scale = 1.0);
  Tensor operator()(const Tensor& x) const;
  Tensor w, b;
};

// Dense stack with tanh on hidden layers and a linear output.
struct Mlp {
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& prefix, const std::vector<int>& dims, RngStream& rng,
      double out_init_scale = 1.0);
  Tensor operator()(const Tensor& x) const;
  std::vector<Linear> layers;
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& prefix, int dim);
  Tensor operator()(const Tensor& x) const;
  Tensor gain, bias;
};

// Multi-head attention over projected q/k/v with a residual-free output
// projection; the block wiring lives in TransformerBlock.
struct MultiheadAttention {
  MultiheadAttention() = default;
  MultiheadAttention(ParamStore& store, const std::string& prefix, int dim, int heads,
                     RngStream& rng);
  // Self attention: x is [batch*t, dim].
  Tensor self(const Tensor& x, int batch, int t, bool causal) const;
  // Cross attention: q_in [batch*tq, dim], kv [batch*tk, dim].
  Tensor cross(const Tensor& q_in, const Tensor& kv, int batch, int tq, int tk) const;
  Linear wq, wk, wv, wo;
  int heads = 1;
};

// Pre-norm transformer block: x + attn(ln1 x), then x + mlp(ln2 x).
struct TransformerBlock {
  TransformerBlock() = default;
  TransformerBlock(ParamStore& store, const std::string& prefix, int dim, int heads, int mlp_mult,
                   RngStream& rng);
  Tensor operator()(const Tensor& x, int batch, int t, bool causal) const;
  LayerNorm ln1, ln2;
  MultiheadAttention attn;
  Linear fc1, fc2;
};

}  // namespace rmbl
