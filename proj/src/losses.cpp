#include "destine/losses.hpp"

#include <cmath>

#include "destine/goal_predictor.hpp"

namespace destine {

using nn::Graph;
using nn::Tensor;
using nn::Var;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// Column indices of the (x, y) channels for every step in a (t*5)-wide row.
std::vector<int64_t> channel_index(int rows, int t, int ch0, int ch_count) {
  std::vector<int64_t> idx;
  idx.reserve(static_cast<size_t>(rows) * t * ch_count);
  for (int r = 0; r < rows; ++r) {
    for (int s = 0; s < t; ++s) {
      for (int c = 0; c < ch_count; ++c) {
        idx.push_back(static_cast<int64_t>(r) * t * 5 + s * 5 + ch0 + c);
      }
    }
  }
  return idx;
}

}  // namespace

Var gaussian_nll_rows(Graph& g, Var mu, Var log_sigma, const Tensor& target) {
  if (mu.rows() != target.rows() || mu.cols() != 2 || log_sigma.cols() != 2) {
    throw DimensionError("gaussian_nll_rows expects R x 2 inputs");
  }
  Var ls = g.clamp(log_sigma, -kLogSigmaClamp, kLogSigmaClamp);
  Var res = g.sub(mu, g.constant(target));
  Var z = g.mul(res, g.exp(g.neg(ls)));
  Var half_z2 = g.affine(g.mul(z, z), 0.5, 0.0);
  Var per_dim = g.add(half_z2, ls);
  // Row sums via matmul with a ones column, then the constant term.
  Var ones = g.constant({2, 1}, {1.0, 1.0});
  return g.affine(g.matmul(per_dim, ones), 1.0, kLog2Pi);
}

double gaussian_nll(const Vec2& mu, const Vec2& log_sigma, const Vec2& target) {
  Graph g;
  Var vmu = g.constant({1, 2}, {mu.x, mu.y});
  Var vls = g.constant({1, 2}, {log_sigma.x, log_sigma.y});
  Tensor tgt({1, 2}, {target.x, target.y});
  return g.value(gaussian_nll_rows(g, vmu, vls, tgt)).data()[0];
}

double huber_loss(const std::vector<Vec2>& pred, const std::vector<Vec2>& target, double delta) {
  if (pred.size() != target.size()) throw DimensionError("huber: length mismatch");
  if (pred.empty()) throw DimensionError("huber: empty input");
  Graph g;
  const int n = static_cast<int>(pred.size());
  std::vector<double> pd, td;
  for (int i = 0; i < n; ++i) {
    pd.insert(pd.end(), {pred[static_cast<size_t>(i)].x, pred[static_cast<size_t>(i)].y});
    td.insert(td.end(), {target[static_cast<size_t>(i)].x, target[static_cast<size_t>(i)].y});
  }
  Var diff = g.sub(g.constant({n, 2}, pd), g.constant({n, 2}, td));
  return g.value(g.mean(g.huber_elementwise(diff, delta))).data()[0];
}

std::vector<int> select_best_mode(const Tensor& y_hat, int n, int k,
                                  const std::vector<Vec2>& gt_endpoints) {
  if (y_hat.rows() != n * k) throw DimensionError("select_best_mode: row mismatch");
  const int t = y_hat.cols() / 5;
  std::vector<int> best(static_cast<size_t>(n), 0);
  for (int a = 0; a < n; ++a) {
    double best_err = std::numeric_limits<double>::infinity();
    for (int m = 0; m < k; ++m) {
      const int row = a * k + m;
      const Vec2 end{y_hat.at(row, (t - 1) * 5), y_hat.at(row, (t - 1) * 5 + 1)};
      const double err = dist(end, gt_endpoints[static_cast<size_t>(a)]);
      if (err < best_err) {
        best_err = err;
        best[static_cast<size_t>(a)] = m;
      }
    }
  }
  return best;
}

SceneTargets SceneTargets::build(const Scene& scene, const std::vector<AgentFrame>& frames, int k) {
  SceneTargets t;
  t.n = scene.num_agents();
  t.t_pred = scene.t_pred_steps;
  t.futures.reserve(static_cast<size_t>(t.n) * t.t_pred);
  t.endpoints.reserve(static_cast<size_t>(t.n));
  for (int a = 0; a < t.n; ++a) {
    const AgentFrame& frame = frames[static_cast<size_t>(a)];
    for (const Vec2& p : scene.agents[static_cast<size_t>(a)].fut) {
      t.futures.push_back(frame.to_frame(p));
    }
    t.endpoints.push_back(t.futures.back());
  }
  t.endpoints_nk = Tensor({t.n * k, 2});
  for (int a = 0; a < t.n; ++a) {
    for (int m = 0; m < k; ++m) {
      t.endpoints_nk.at(a * k + m, 0) = t.endpoints[static_cast<size_t>(a)].x;
      t.endpoints_nk.at(a * k + m, 1) = t.endpoints[static_cast<size_t>(a)].y;
    }
  }
  return t;
}

TotalLossResult total_loss(Graph& g, const ForwardVars& fw, const SceneTargets& targets,
                           double coarse_rate_hz, double dt, const LossWeights& weights) {
  const int n = targets.n;
  const int t = targets.t_pred;
  const Tensor& yhat_val = g.value(fw.y_hat);
  const int k = fw.mode_logits.cols();

  TotalLossResult result;
  result.best_modes = select_best_mode(yhat_val, n, k, targets.endpoints);
  std::vector<int> best_rows(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a) {
    best_rows[static_cast<size_t>(a)] = a * k + result.best_modes[static_cast<size_t>(a)];
  }

  Var total = g.scalar(0.0);
  Var l_g, l_wp, l_y;

  // Goal term: NLL + Huber on the best-mode goal against the gt endpoint.
  if (fw.goals5.valid() && weights.alpha != 0.0) {
    Var best = g.pick_rows(fw.goals5, best_rows);
    Var mu = g.slice_cols(best, 0, 2);
    Var ls = g.slice_cols(best, 2, 2);
    Tensor end_target({n, 2});
    for (int a = 0; a < n; ++a) {
      end_target.at(a, 0) = targets.endpoints[static_cast<size_t>(a)].x;
      end_target.at(a, 1) = targets.endpoints[static_cast<size_t>(a)].y;
    }
    Var nll = g.mean(gaussian_nll_rows(g, mu, ls, end_target));
    Var hub = g.mean(g.huber_elementwise(g.sub(mu, g.constant(end_target)), weights.huber_delta));
    l_g = g.add(nll, hub);
    total = g.add(total, g.affine(l_g, weights.alpha, 0.0));
  }

  // Waypoint term: Huber only, against ground truth at the coarse timestamps.
  if (fw.waypoints.valid() && coarse_rate_hz > 0.0 && weights.gamma != 0.0) {
    const int t_wp = fw.waypoints.cols() / 5;
    Var best = g.pick_rows(fw.waypoints, best_rows);
    Var mu = g.gather(best, {n, t_wp * 2}, channel_index(n, t_wp, 0, 2));
    Tensor wp_target({n, t_wp * 2});
    for (int a = 0; a < n; ++a) {
      for (int w = 0; w < t_wp; ++w) {
        const double ts = (w + 1) / coarse_rate_hz;
        int step = static_cast<int>(std::lround(ts / dt));
        step = std::min(step, t);
        const Vec2 p = targets.futures[static_cast<size_t>(a) * t + step - 1];
        wp_target.at(a, w * 2) = p.x;
        wp_target.at(a, w * 2 + 1) = p.y;
      }
    }
    l_wp = g.mean(g.huber_elementwise(g.sub(mu, g.constant(wp_target)), weights.huber_delta));
    total = g.add(total, g.affine(l_wp, weights.gamma, 0.0));
  }

  // Final trajectory term: NLL + Huber on the best mode, plus the mode
  // classification cross-entropy.
  if (weights.beta != 0.0) {
    Var best = g.pick_rows(fw.y_hat, best_rows);
    Var mu = g.reshape(g.gather(best, {n, t * 2}, channel_index(n, t, 0, 2)), {n * t, 2});
    Var ls = g.reshape(g.gather(best, {n, t * 2}, channel_index(n, t, 2, 2)), {n * t, 2});
    Tensor fut_target({n * t, 2});
    for (int a = 0; a < n; ++a) {
      for (int s = 0; s < t; ++s) {
        const Vec2 p = targets.futures[static_cast<size_t>(a) * t + s];
        fut_target.at(a * t + s, 0) = p.x;
        fut_target.at(a * t + s, 1) = p.y;
      }
    }
    Var nll = g.mean(gaussian_nll_rows(g, mu, ls, fut_target));
    Var hub = g.mean(g.huber_elementwise(g.sub(mu, g.constant(fut_target)), weights.huber_delta));

    Var probs = g.row_softmax(fw.mode_logits);
    std::vector<int64_t> pick(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) {
      pick[static_cast<size_t>(a)] =
          static_cast<int64_t>(a) * k + result.best_modes[static_cast<size_t>(a)];
    }
    Var ce = g.neg(g.mean(g.log(g.gather(probs, {n, 1}, pick))));
    l_y = g.add(g.add(nll, hub), ce);
    total = g.add(total, g.affine(l_y, weights.beta, 0.0));
  }

  result.total = total;
  result.values.l_g = l_g.valid() ? g.value(l_g).data()[0] : 0.0;
  result.values.l_wp = l_wp.valid() ? g.value(l_wp).data()[0] : 0.0;
  result.values.l_y = l_y.valid() ? g.value(l_y).data()[0] : 0.0;
  result.values.total = g.value(total).data()[0];
  return result;
}

}  // namespace destine
