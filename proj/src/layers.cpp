#include "rmbl/layers.hpp"

#include <cmath>

namespace rmbl {

Tensor ParamStore::create(const std::string& name, std::vector<int> shape, double init_std,
                          RngStream& rng) {
  std::int64_t count = 1;
  for (int d : shape) count *= d;
  std::vector<double> values(static_cast<std::size_t>(count));
  for (auto& v : values) {
    v = init_std == 0.0 ? 0.0 : rng.normal(0.0, init_std);
  }
  Tensor t = Tensor::param(std::move(values), std::move(shape));
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::create_const(const std::string& name, std::vector<int> shape, double value) {
  std::int64_t count = 1;
  for (int d : shape) count *= d;
  Tensor t = Tensor::param(std::vector<double>(static_cast<std::size_t>(count), value),
                           std::move(shape));
  items_.emplace_back(name, t);
  return t;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& [name, t] : items_) out.push_back(t);
  return out;
}

const Tensor& ParamStore::find(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.first == name) return item.second;
  }
  throw std::out_of_range("ParamStore: no parameter named '" + name + "'");
}

std::int64_t ParamStore::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() const {
  for (const auto& [name, t] : items_) {
    t.node()->grad.assign(t.values().size(), 0.0);
  }
}

std::vector<std::vector<double>> ParamStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(items_.size());
  for (const auto& [name, t] : items_) out.push_back(t.values());
  return out;
}

void ParamStore::restore(const std::vector<std::vector<double>>& values) const {
  if (values.size() != items_.size()) {
    throw std::invalid_argument("ParamStore::restore: parameter count mismatch");
  }
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (values[i].size() != items_[i].second.values().size()) {
      throw std::invalid_argument("ParamStore::restore: shape mismatch at '" +
                                  items_[i].first + "'");
    }
    items_[i].second.node()->values = values[i];
  }
}

void ParamStore::copy_from(const ParamStore& other) const {
  restore(other.snapshot());
}

void polyak_update(const ParamStore& dst, const ParamStore& src, double tau) {
  if (dst.size() != src.size()) {
    throw std::invalid_argument("polyak_update: parameter count mismatch");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto& d = dst.items()[i].second.node()->values;
    const auto& s = src.items()[i].second.values();
    if (d.size() != s.size()) {
      throw std::invalid_argument("polyak_update: shape mismatch");
    }
    for (std::size_t j = 0; j < d.size(); ++j) {
      d[j] = tau * s[j] + (1.0 - tau) * d[j];
    }
  }
}

double param_distance(const ParamStore& a, const ParamStore& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& va = a.items()[i].second.values();
    const auto& vb = b.items()[i].second.values();
    for (std::size_t j = 0; j < va.size(); ++j) {
      const double d = va[j] - vb[j];
      s += d * d;
    }
  }
  return std::sqrt(s);
}

Linear::Linear(ParamStore& store, const std::string& prefix, int in, int out, RngStream& rng,
               double init_std_scale) {
  const double std = init_std_scale / std::sqrt(static_cast<double>(in));
  w = store.create(prefix + ".w", {in, out}, std, rng);
  b = store.create_const(prefix + ".b", {out}, 0.0);
}

Tensor Linear::operator()(const Tensor& x) const { return add_rowwise(matmul(x, w), b); }

Mlp::Mlp(ParamStore& store, const std::string& prefix, const std::vector<int>& dims,
         RngStream& rng, double out_init_scale) {
  if (dims.size() < 2) {
    throw std::invalid_argument("Mlp: need at least input and output dims");
  }
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    layers.emplace_back(store, prefix + ".l" + std::to_string(i), dims[i], dims[i + 1], rng,
                        last ? out_init_scale : 1.0);
  }
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) {
      h = tanh(h);
    }
  }
  return h;
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& prefix, int dim) {
  gain = store.create_const(prefix + ".g", {dim}, 1.0);
  bias = store.create_const(prefix + ".b", {dim}, 0.0);
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return add_rowwise(mul_rowwise(layernorm_rows(x), gain), bias);
}

MultiheadAttention::MultiheadAttention(ParamStore& store, const std::string& prefix, int dim,
                                       int heads_, RngStream& rng)
    : wq(store, prefix + ".q", dim, dim, rng),
      wk(store, prefix + ".k", dim, dim, rng),
      wv(store, prefix + ".v", dim, dim, rng),
      wo(store, prefix + ".o", dim, dim, rng),
      heads(heads_) {}

Tensor MultiheadAttention::self(const Tensor& x, int batch, int t, bool causal) const {
  Tensor q = wq(x), k = wk(x), v = wv(x);
  return wo(attention(q, k, v, batch, t, t, heads, causal));
}

Tensor MultiheadAttention::cross(const Tensor& q_in, const Tensor& kv, int batch, int tq,
                                 int tk) const {
  Tensor q = wq(q_in), k = wk(kv), v = wv(kv);
  return wo(attention(q, k, v, batch, tq, tk, heads, false));
}

TransformerBlock::TransformerBlock(ParamStore& store, const std::string& prefix, int dim,
                                   int heads, int mlp_mult, RngStream& rng)
    : ln1(store, prefix + ".ln1", dim),
      ln2(store, prefix + ".ln2", dim),
      attn(store, prefix + ".attn", dim, heads, rng),
      fc1(store, prefix + ".fc1", dim, dim * mlp_mult, rng),
      fc2(store, prefix + ".fc2", dim * mlp_mult, dim, rng) {}

Tensor TransformerBlock::operator()(const Tensor& x, int batch, int t, bool causal) const {
  Tensor h = add(x, attn.self(ln1(x), batch, t, causal));
  return add(h, fc2(tanh(fc1(ln2(h)))));
}

}  // namespace rmbl
