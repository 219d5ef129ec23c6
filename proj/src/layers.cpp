#include "destine/layers.hpp"

#include <cmath>

namespace destine::nn {

void ParamSet::add(std::string name, Tensor& t) {
  for (const NamedParam& p : items_) {
    if (p.name == name) throw ConfigError("duplicate parameter name: " + name);
  }
  t.set_requires_grad(true);
  items_.push_back(NamedParam{std::move(name), &t});
}

int64_t ParamSet::total_size() const {
  int64_t n = 0;
  for (const NamedParam& p : items_) n += p.tensor->size();
  return n;
}

void ParamSet::zero_grad() {
  for (const NamedParam& p : items_) p.tensor->zero_grad();
}

// ---------------------------------------------------------------------------

LinearLayer::LinearLayer(Rng& rng, int in_dim, int out_dim, bool with_bias) : has_bias(with_bias) {
  if (in_dim <= 0 || out_dim <= 0) throw DimensionError("linear layer dims must be positive");
  weight = Tensor({in_dim, out_dim});
  const double a = std::sqrt(6.0 / (in_dim + out_dim));
  for (int64_t i = 0; i < weight.size(); ++i) weight.data()[i] = rng.uniform(-a, a);
  if (has_bias) bias = Tensor({1, out_dim});
}

Var LinearLayer::apply(Graph& g, Var x) {
  if (x.cols() != weight.rows()) {
    throw DimensionError("linear layer expects " + std::to_string(weight.rows()) + " inputs, got " +
                         std::to_string(x.cols()));
  }
  Var y = g.matmul(x, g.param(weight));
  if (has_bias) y = g.add_row_broadcast(y, g.param(bias));
  return y;
}

void LinearLayer::register_into(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".w", weight);
  if (has_bias) ps.add(prefix + ".b", bias);
}

// ---------------------------------------------------------------------------

MlpLayer::MlpLayer(Rng& rng, const std::vector<int>& dims) {
  if (dims.size() < 2) throw DimensionError("mlp needs at least input and output dims");
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    layers.emplace_back(rng, dims[i], dims[i + 1]);
  }
}

Var MlpLayer::apply(Graph& g, Var x) {
  for (size_t i = 0; i < layers.size(); ++i) {
    x = layers[i].apply(g, x);
    if (i + 1 < layers.size()) x = g.relu(x);
  }
  return x;
}

void MlpLayer::register_into(ParamSet& ps, const std::string& prefix) {
  for (size_t i = 0; i < layers.size(); ++i) {
    layers[i].register_into(ps, prefix + ".fc" + std::to_string(i));
  }
}

// ---------------------------------------------------------------------------

LayerNormLayer::LayerNormLayer(int dim) {
  gamma = Tensor::full({1, dim}, 1.0);
  beta = Tensor({1, dim});
}

Var LayerNormLayer::apply(Graph& g, Var x) {
  return g.layer_norm(x, g.param(gamma), g.param(beta));
}

void LayerNormLayer::register_into(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".gamma", gamma);
  ps.add(prefix + ".beta", beta);
}

// ---------------------------------------------------------------------------

MultiHeadAttentionLayer::MultiHeadAttentionLayer(Rng& rng, int embed_dim_in, int num_heads_in)
    : embed_dim(embed_dim_in), num_heads(num_heads_in) {
  if (embed_dim <= 0 || num_heads <= 0) throw DimensionError("attention dims must be positive");
  if (embed_dim % num_heads != 0) {
    throw DimensionError("embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
                         std::to_string(num_heads));
  }
  wq = LinearLayer(rng, embed_dim, embed_dim);
  wk = LinearLayer(rng, embed_dim, embed_dim);
  wv = LinearLayer(rng, embed_dim, embed_dim);
  wo = LinearLayer(rng, embed_dim, embed_dim);
}

Var MultiHeadAttentionLayer::apply(Graph& g, Var q, Var k, Var v, const AttentionMask* mask) {
  if (q.cols() != embed_dim || k.cols() != embed_dim || v.cols() != embed_dim) {
    throw DimensionError("attention inputs must have " + std::to_string(embed_dim) + " columns");
  }
  if (k.rows() != v.rows()) throw DimensionError("attention keys/values row mismatch");
  if (mask != nullptr && (mask->rows() != q.rows() || mask->cols() != k.rows())) {
    throw DimensionError("attention mask must be " + std::to_string(q.rows()) + "x" +
                         std::to_string(k.rows()) + ", got " + std::to_string(mask->rows()) + "x" +
                         std::to_string(mask->cols()));
  }
  Var pq = wq.apply(g, q);
  Var pk = wk.apply(g, k);
  Var pv = wv.apply(g, v);
  const int dh = embed_dim / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(static_cast<size_t>(num_heads));
  for (int h = 0; h < num_heads; ++h) {
    Var qh = g.slice_cols(pq, h * dh, dh);
    Var kh = g.slice_cols(pk, h * dh, dh);
    Var vh = g.slice_cols(pv, h * dh, dh);
    Var scores = g.affine(g.matmul(qh, kh, false, true), scale, 0.0);
    Var attn = g.row_softmax(scores, mask);
    heads.push_back(g.matmul(attn, vh));
  }
  return wo.apply(g, num_heads == 1 ? heads[0] : g.concat_cols(heads));
}

void MultiHeadAttentionLayer::register_into(ParamSet& ps, const std::string& prefix) {
  wq.register_into(ps, prefix + ".wq");
  wk.register_into(ps, prefix + ".wk");
  wv.register_into(ps, prefix + ".wv");
  wo.register_into(ps, prefix + ".wo");
}

Var multi_head_attention(Graph& g, MultiHeadAttentionLayer& layer, Var q, Var k, Var v,
                         const AttentionMask* mask) {
  return layer.apply(g, q, k, v, mask);
}

// ---------------------------------------------------------------------------

SelfAttentionBlock::SelfAttentionBlock(Rng& rng, int dim, int heads, int mlp_hidden)
    : ln_attn(dim), attn(rng, dim, heads), ln_mlp(dim), mlp(rng, {dim, mlp_hidden, dim}) {}

Var SelfAttentionBlock::apply(Graph& g, Var x, const AttentionMask* mask, Var pos) {
  Var xn = ln_attn.apply(g, x);
  Var qk = pos.valid() ? g.add(xn, pos) : xn;
  x = g.add(x, attn.apply(g, qk, qk, xn, mask));
  x = g.add(x, mlp.apply(g, ln_mlp.apply(g, x)));
  return x;
}

void SelfAttentionBlock::register_into(ParamSet& ps, const std::string& prefix) {
  ln_attn.register_into(ps, prefix + ".ln_attn");
  attn.register_into(ps, prefix + ".attn");
  ln_mlp.register_into(ps, prefix + ".ln_mlp");
  mlp.register_into(ps, prefix + ".mlp");
}

// ---------------------------------------------------------------------------

DecoderLayer::DecoderLayer(Rng& rng, int dim, int heads, int mlp_hidden)
    : ln_self(dim),
      self_attn(rng, dim, heads),
      ln_q(dim),
      ln_kv(dim),
      cross_attn(rng, dim, heads),
      ln_mlp(dim),
      mlp(rng, {dim, mlp_hidden, dim}) {}

Var DecoderLayer::apply(Graph& g, Var q, Var memory, Var pos_q, Var pos_mem) {
  Var qn = ln_self.apply(g, q);
  Var qk = pos_q.valid() ? g.add(qn, pos_q) : qn;
  q = g.add(q, self_attn.apply(g, qk, qk, qn));

  Var qn2 = ln_q.apply(g, q);
  Var qq = pos_q.valid() ? g.add(qn2, pos_q) : qn2;
  Var mn = ln_kv.apply(g, memory);
  Var mk = pos_mem.valid() ? g.add(mn, pos_mem) : mn;
  q = g.add(q, cross_attn.apply(g, qq, mk, mn));

  q = g.add(q, mlp.apply(g, ln_mlp.apply(g, q)));
  return q;
}

void DecoderLayer::register_into(ParamSet& ps, const std::string& prefix) {
  ln_self.register_into(ps, prefix + ".ln_self");
  self_attn.register_into(ps, prefix + ".self");
  ln_q.register_into(ps, prefix + ".ln_q");
  ln_kv.register_into(ps, prefix + ".ln_kv");
  cross_attn.register_into(ps, prefix + ".cross");
  ln_mlp.register_into(ps, prefix + ".ln_mlp");
  mlp.register_into(ps, prefix + ".mlp");
}

}  // namespace destine::nn
