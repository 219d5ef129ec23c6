#pragma once

#include <string>
#include <vector>

#include "destine/graph.hpp"
#include "destine/rng.hpp"

namespace destine::nn {

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

// Ordered registry of trainable tensors. Registration order is the canonical
// order for the optimizer and the checkpoint directory.
class ParamSet {
 public:
  void add(std::string name, Tensor& t);
  const std::vector<NamedParam>& items() const { return items_; }
  size_t count() const { return items_.size(); }
  int64_t total_size() const;
  void zero_grad();

 private:
  std::vector<NamedParam> items_;
};

struct LinearLayer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
  bool has_bias = true;

  LinearLayer() = default;
  LinearLayer(Rng& rng, int in_dim, int out_dim, bool with_bias = true);

  int in_dim() const { return weight.rows(); }
  int out_dim() const { return weight.cols(); }
  Var apply(Graph& g, Var x);
  void register_into(ParamSet& ps, const std::string& prefix);
};

// Affine layers with ReLU between them (none after the last).
struct MlpLayer {
  std::vector<LinearLayer> layers;

  MlpLayer() = default;
  MlpLayer(Rng& rng, const std::vector<int>& dims);

  Var apply(Graph& g, Var x);
  void register_into(ParamSet& ps, const std::string& prefix);
};

struct LayerNormLayer {
  Tensor gamma;  // 1 x dim
  Tensor beta;   // 1 x dim

  LayerNormLayer() = default;
  explicit LayerNormLayer(int dim);

  Var apply(Graph& g, Var x);
  void register_into(ParamSet& ps, const std::string& prefix);
};

struct MultiHeadAttentionLayer {
  int embed_dim = 0;
  int num_heads = 0;
  LinearLayer wq, wk, wv, wo;

  MultiHeadAttentionLayer() = default;
  MultiHeadAttentionLayer(Rng& rng, int embed_dim, int num_heads);

  // q/k/v carry embed_dim columns; mask, when given, is (q.rows x k.rows).
  Var apply(Graph& g, Var q, Var k, Var v, const AttentionMask* mask = nullptr);
  void register_into(ParamSet& ps, const std::string& prefix);
};

// Free-function form of the attention operation.
Var multi_head_attention(Graph& g, MultiHeadAttentionLayer& layer, Var q, Var k, Var v,
                         const AttentionMask* mask = nullptr);

// Pre-norm residual block: x + Attn(LN(x)+pos, LN(x)+pos, LN(x)), then
// x + MLP(LN(x)). `pos`, when valid, must match x's shape.
struct SelfAttentionBlock {
  LayerNormLayer ln_attn;
  MultiHeadAttentionLayer attn;
  LayerNormLayer ln_mlp;
  MlpLayer mlp;

  SelfAttentionBlock() = default;
  SelfAttentionBlock(Rng& rng, int dim, int heads, int mlp_hidden);

  Var apply(Graph& g, Var x, const AttentionMask* mask = nullptr, Var pos = {});
  void register_into(ParamSet& ps, const std::string& prefix);
};

// Pre-norm decoder layer: self-attention over the query rows, cross-attention
// to a memory, then an MLP; position embeddings go to queries/keys only.
struct DecoderLayer {
  LayerNormLayer ln_self;
  MultiHeadAttentionLayer self_attn;
  LayerNormLayer ln_q;
  LayerNormLayer ln_kv;
  MultiHeadAttentionLayer cross_attn;
  LayerNormLayer ln_mlp;
  MlpLayer mlp;

  DecoderLayer() = default;
  DecoderLayer(Rng& rng, int dim, int heads, int mlp_hidden);

  Var apply(Graph& g, Var q, Var memory, Var pos_q = {}, Var pos_mem = {});
  void register_into(ParamSet& ps, const std::string& prefix);
};

}  // namespace destine::nn
