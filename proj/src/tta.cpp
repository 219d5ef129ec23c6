#include "destine/tta.hpp"

#include <cmath>

namespace destine {

using nn::AttentionMask;
using nn::Graph;
using nn::Tensor;
using nn::Var;

AttentionMask build_window_mask(int t, double tw_seconds, double dt) {
  if (t < 1) throw ConfigError("window mask needs t >= 1");
  if (dt <= 0.0 || tw_seconds <= 0.0) throw ConfigError("window mask needs positive tw and dt");
  const int w = static_cast<int>(std::lround(tw_seconds / dt));
  if (w < 1) throw ConfigError("window mask: tw/dt rounds below one step");
  AttentionMask mask(t, t, /*allow_all=*/false);
  for (int i = 0; i < t; ++i) {
    const int lo = std::max(0, i - w + 1);
    for (int j = lo; j <= i; ++j) mask.set_allowed(i, j, true);
  }
  mask.window_steps = w;
  return mask;
}

AttentionMask build_history_mask(int t_obs, int t, double tw_seconds, double dt) {
  if (t_obs < 0) throw ConfigError("history mask needs t_obs >= 0");
  return build_window_mask(t_obs + t, tw_seconds, dt);
}

// ---------------------------------------------------------------------------

TtaLayerParams::TtaLayerParams(Rng& rng, int d_t, int t_total) {
  wq = Tensor({d_t, d_t});
  wk = Tensor({d_t, d_t});
  wv = Tensor({d_t, d_t});
  const double a = std::sqrt(6.0 / (2 * d_t));
  for (int64_t i = 0; i < wq.size(); ++i) wq.data()[i] = rng.uniform(-a, a) * 0.1;
  for (int64_t i = 0; i < wk.size(); ++i) wk.data()[i] = rng.uniform(-a, a) * 0.1;
  // Values start at the identity so alignment begins near a pass-through.
  for (int i = 0; i < d_t; ++i) wv.at(i, i) = 1.0;
  for (int64_t i = 0; i < wv.size(); ++i) wv.data()[i] += rng.uniform(-a, a) * 0.02;
  pos = Tensor({t_total, d_t});
  for (int64_t i = 0; i < pos.size(); ++i) pos.data()[i] = rng.normal(0.0, 1.0);
}

void TtaLayerParams::register_into(nn::ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".wq", wq);
  ps.add(prefix + ".wk", wk);
  ps.add(prefix + ".wv", wv);
  ps.add(prefix + ".pos", pos);
}

TtaModule::TtaModule(Rng& rng, const ModelConfig& cfg)
    : cfg_(cfg.tta), n_max_(cfg.n_max), t_pred_(cfg.t_pred_steps), d_t_(4 * cfg.n_max) {
  if (cfg_.variant == TtaConfig::Variant::kOff) return;
  t_obs_ = cfg_.variant == TtaConfig::Variant::kMaskedHistory ? cfg.t_obs_steps : 0;
  const int t_total = t_obs_ + t_pred_;
  switch (cfg_.variant) {
    case TtaConfig::Variant::kNoMask:
      has_mask_ = false;
      break;
    case TtaConfig::Variant::kMasked:
      mask_ = build_window_mask(t_pred_, cfg_.tw_seconds, cfg.dt);
      has_mask_ = true;
      break;
    case TtaConfig::Variant::kMaskedHistory:
      mask_ = build_history_mask(t_obs_, t_pred_, cfg_.tw_seconds, cfg.dt);
      has_mask_ = true;
      break;
    case TtaConfig::Variant::kOff:
      break;
  }
  layers_.reserve(static_cast<size_t>(cfg_.layers));
  for (int i = 0; i < cfg_.layers; ++i) layers_.emplace_back(rng, d_t_, t_total);
}

Var TtaModule::layer_forward(Graph& g, size_t layer_idx, Var pred_tokens, Var obs_tokens) {
  TtaLayerParams& lp = layers_.at(layer_idx);
  Var tokens = obs_tokens.valid() ? g.concat_rows({obs_tokens, pred_tokens}) : pred_tokens;
  if (tokens.rows() != lp.pos.rows()) {
    throw DimensionError("tta: temporal position embedding length mismatch");
  }
  Var shifted = g.add(tokens, g.param(lp.pos));
  Var q = g.matmul(shifted, g.param(lp.wq));
  Var k = g.matmul(shifted, g.param(lp.wk));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_t_));
  Var scores = g.affine(g.matmul(q, k, false, true), scale, 0.0);
  Var attn = g.row_softmax(scores, has_mask_ ? &mask_ : nullptr);
  Var values = g.matmul(tokens, g.param(lp.wv));
  Var out = g.matmul(attn, values);
  if (t_obs_ > 0) {
    std::vector<int> pred_rows(static_cast<size_t>(t_pred_));
    for (int t = 0; t < t_pred_; ++t) pred_rows[static_cast<size_t>(t)] = t_obs_ + t;
    out = g.pick_rows(out, pred_rows);
  }
  if (cfg_.residual) out = g.add(out, pred_tokens);
  return out;
}

Var TtaModule::apply(Graph& g, Var fine, const SceneContext& ctx, int n, int k) {
  if (!enabled()) return fine;
  if (n > n_max_) {
    throw CapacityError("tta: scene has " + std::to_string(n) + " agents, n_max is " +
                        std::to_string(n_max_));
  }
  if (fine.rows() != n * k || fine.cols() != t_pred_ * 5) {
    throw DimensionError("tta: fine tensor has unexpected shape");
  }

  // Observation tokens for the history variant: each agent's observed track
  // in its own frame, channels (x, y, 0, 0), zero-padded to n_max.
  Var obs_tokens;  // shared across modes
  if (t_obs_ > 0) {
    Tensor obs({t_obs_, d_t_});
    for (int a = 0; a < n; ++a) {
      const auto& pts = ctx.local[static_cast<size_t>(a)].agents[static_cast<size_t>(a)].obs;
      for (int t = 0; t < t_obs_; ++t) {
        obs.at(t, 4 * a + 0) = pts[static_cast<size_t>(t)].x;
        obs.at(t, 4 * a + 1) = pts[static_cast<size_t>(t)].y;
      }
    }
    obs_tokens = g.constant(obs);
  }

  const int64_t row_len = static_cast<int64_t>(t_pred_) * 5;
  std::vector<Var> mode_outputs;
  mode_outputs.reserve(static_cast<size_t>(k));
  for (int m = 0; m < k; ++m) {
    // Token (t, 4a + c) <- fine[(a*k + m), t*5 + c], c in 0..3; pad past N.
    std::vector<int64_t> idx(static_cast<size_t>(t_pred_) * d_t_, -1);
    for (int t = 0; t < t_pred_; ++t) {
      for (int a = 0; a < n; ++a) {
        for (int c = 0; c < 4; ++c) {
          idx[static_cast<size_t>(t) * d_t_ + 4 * a + c] =
              static_cast<int64_t>(a * k + m) * row_len + t * 5 + c;
        }
      }
    }
    Var tokens = g.gather(fine, {t_pred_, d_t_}, std::move(idx));
    for (size_t li = 0; li < layers_.size(); ++li) {
      tokens = layer_forward(g, li, tokens, obs_tokens);
    }
    mode_outputs.push_back(g.reshape(tokens, {t_pred_ * d_t_, 1}));
  }

  // Reassemble: location/scale channels from the aligned tokens, confidence
  // channel from the fine tensor.
  mode_outputs.push_back(g.reshape(fine, {n * k * static_cast<int>(row_len), 1}));
  Var stacked = g.concat_rows(mode_outputs);
  const int64_t mode_block = static_cast<int64_t>(t_pred_) * d_t_;
  const int64_t fine_base = static_cast<int64_t>(k) * mode_block;
  std::vector<int64_t> out_idx(static_cast<size_t>(n) * k * row_len);
  for (int a = 0; a < n; ++a) {
    for (int m = 0; m < k; ++m) {
      const int64_t row0 = static_cast<int64_t>(a * k + m) * row_len;
      for (int t = 0; t < t_pred_; ++t) {
        for (int c = 0; c < 5; ++c) {
          out_idx[static_cast<size_t>(row0 + t * 5 + c)] =
              c < 4 ? m * mode_block + static_cast<int64_t>(t) * d_t_ + 4 * a + c
                    : fine_base + row0 + t * 5 + 4;
        }
      }
    }
  }
  return g.gather(stacked, {n * k, static_cast<int>(row_len)}, std::move(out_idx));
}

void TtaModule::register_into(nn::ParamSet& ps, const std::string& prefix) {
  for (size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].register_into(ps, prefix + ".layer" + std::to_string(i));
  }
}

}  // namespace destine
