#include "destine/model.hpp"

namespace destine {

using nn::Graph;
using nn::Tensor;
using nn::Var;

DestineModel::DestineModel(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  local_encoder_ = LocalEncoder(rng, cfg_);
  global_encoder_ = GlobalEncoder(rng, cfg_);
  goal_predictor_ = GoalPredictor(rng, cfg_);
  if (cfg_.use_goal && cfg_.coarse_rate_hz > 0.0) {
    coarse_decoder_ = CoarseDecoder(rng, cfg_);
    has_coarse_ = true;
  }
  fine_decoder_ = FineDecoder(rng, cfg_);
  tta_ = TtaModule(rng, cfg_);

  local_encoder_.register_into(params_, "encoder.local");
  global_encoder_.register_into(params_, "encoder.global");
  if (cfg_.use_goal) {
    goal_predictor_.register_into(params_, "goal");
  } else {
    // The trajectory-only baseline still builds h from the intention
    // embedding, so those parameters stay trainable.
    goal_predictor_.intention.register_into(params_, "goal.intention");
    goal_predictor_.h_proj.register_into(params_, "goal.h_proj");
  }
  if (has_coarse_) coarse_decoder_.register_into(params_, "coarse");
  fine_decoder_.register_into(params_, "fine");
  tta_.register_into(params_, "tta");
}

DestineModel::Forward DestineModel::forward(Graph& g, const Scene& scene,
                                            const ForwardOptions& options) {
  Forward fw;
  fw.ctx = SceneContext::build(scene);
  const int n = scene.num_agents();
  const int k = cfg_.k_modes;
  fw.agent_id_norm.resize(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a) {
    fw.agent_id_norm[static_cast<size_t>(a)] =
        static_cast<double>(scene.agents[static_cast<size_t>(a)].agent_id) / n;
  }

  Var local = local_encoder_.encode(g, fw.ctx, cfg_);
  Var global_ = global_encoder_.encode(g, local, fw.ctx);

  Var h;
  Var goals5;
  if (cfg_.use_goal) {
    GoalPredictor::Outputs out = goal_predictor_.run(g, local, global_, fw.agent_id_norm);
    h = out.h;
    goals5 = out.goals5;
  } else {
    h = goal_predictor_.assemble_h(g, local, global_, fw.agent_id_norm);
  }

  const bool tf_active = options.epoch < options.tf_switch_epoch && cfg_.use_goal;
  Var goals_cond = goals5;
  if (tf_active) {
    if (options.targets == nullptr) {
      throw ConfigError("teacher forcing requires scene targets");
    }
    goals_cond = teacher_forcing_select(g, goals5, options.targets->endpoints_nk, options.epoch,
                                        options.tf_switch_epoch);
  }

  Var waypoints;
  if (has_coarse_) waypoints = coarse_decoder_.decode(g, h, goals_cond);

  Var cond;
  switch (fine_decoder_.conditioning) {
    case FineDecoder::Conditioning::kNone: break;
    case FineDecoder::Conditioning::kGoal: cond = goals_cond; break;
    case FineDecoder::Conditioning::kWaypoints: cond = waypoints; break;
  }
  FineDecoder::Outputs fine = fine_decoder_.decode(g, h, cond, n, k);

  fw.vars.goals5 = goals5;
  fw.vars.waypoints = waypoints;
  fw.vars.y_hat = tta_.apply(g, fine.traj, fw.ctx, n, k);
  fw.vars.mode_logits = fine.mode_logits;
  return fw;
}

DestineModel::Prediction DestineModel::predict(const Scene& scene) {
  Graph g;
  Forward fw = forward(g, scene, ForwardOptions{});
  const int n = scene.num_agents();
  const int k = cfg_.k_modes;
  const int t = cfg_.t_pred_steps;

  Prediction pred;
  pred.frames = fw.ctx.frames;
  pred.traj.n = n;
  pred.traj.k = k;
  pred.traj.t = t;
  pred.traj.sample_rate_hz = 1.0 / cfg_.dt;
  pred.traj.params = g.value(fw.vars.y_hat).vec();
  pred.traj.mode_scores = g.value(g.row_softmax(fw.vars.mode_logits)).vec();
  if (fw.vars.goals5.valid()) {
    pred.goals.n = n;
    pred.goals.k = k;
    pred.goals.values = g.value(fw.vars.goals5).vec();
  }
  return pred;
}

ScenePrediction DestineModel::predict_focal_global(const Scene& scene) {
  Prediction pred = predict(scene);
  const int focal = scene.focal_agent;
  const AgentFrame& frame = pred.frames[static_cast<size_t>(focal)];
  ScenePrediction out;
  out.modes.resize(static_cast<size_t>(pred.traj.k));
  out.probs.resize(static_cast<size_t>(pred.traj.k));
  for (int m = 0; m < pred.traj.k; ++m) {
    out.probs[static_cast<size_t>(m)] = pred.traj.score(focal, m);
    std::vector<Vec2>& pts = out.modes[static_cast<size_t>(m)];
    pts.reserve(static_cast<size_t>(pred.traj.t));
    for (int s = 0; s < pred.traj.t; ++s) {
      pts.push_back(frame.to_global({pred.traj.param(focal, m, s, 0), pred.traj.param(focal, m, s, 1)}));
    }
  }
  return out;
}

}  // namespace destine
