#include "destine/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <unordered_map>

#include "destine/checkpoint.hpp"
#include "destine/optim.hpp"
#include "destine/parallel.hpp"
#include "json.hpp"

namespace destine {

namespace fs = std::filesystem;
using nn::Graph;

namespace {

std::vector<int> shuffled_indices(int n, uint64_t seed) {
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const int j = rng.uniform_int(0, i);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  return idx;
}

struct ElementResult {
  std::vector<std::vector<double>> grads;  // aligned with ParamSet order; empty if untouched
  LossBreakdown loss;
};

std::string epoch_ckpt_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%03d.ckpt", epoch);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
}

}  // namespace

MetricsReport evaluate_model(DestineModel& model, const std::vector<Scene>& scenes, int k,
                             double miss_threshold) {
  if (scenes.empty()) throw ConfigError("evaluate: empty scene set");
  std::vector<ScenePrediction> preds(scenes.size());
  parallel_for(static_cast<int>(scenes.size()), [&](int i) {
    preds[static_cast<size_t>(i)] = model.predict_focal_global(scenes[static_cast<size_t>(i)]);
  });
  return compute_metrics(scenes, preds, k, miss_threshold);
}

RunRecord train_model(DestineModel& model, const std::vector<Scene>& train_scenes,
                      const std::vector<Scene>& val_scenes, const TrainConfig& cfg,
                      const std::string& out_dir, std::ostream* log) {
  cfg.validate();
  if (train_scenes.empty()) throw ConfigError("train: empty training set");
  if (val_scenes.empty()) throw ConfigError("train: empty validation set");
  fs::create_directories(out_dir);

  const auto t_start = std::chrono::steady_clock::now();
  const int n_train = static_cast<int>(train_scenes.size());
  const int steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = static_cast<int64_t>(steps_per_epoch) * cfg.total_epochs();
  const LossWeights weights = cfg.to_loss_weights();

  // Ground-truth targets in agent frames, fixed per scene.
  std::vector<SceneTargets> targets(train_scenes.size());
  for (size_t i = 0; i < train_scenes.size(); ++i) {
    SceneContext ctx = SceneContext::build(train_scenes[i]);
    targets[i] = SceneTargets::build(train_scenes[i], ctx.frames, cfg.k);
  }

  nn::AdamConfig adam_cfg;
  adam_cfg.weight_decay = cfg.weight_decay;
  nn::AdamOptimizer adam(model.params(), adam_cfg);

  std::unordered_map<const nn::Tensor*, size_t> param_index;
  for (size_t i = 0; i < model.params().count(); ++i) {
    param_index[model.params().items()[i].tensor] = i;
  }

  write_text(out_dir + "/config.txt", cfg.canonical_text());

  RunRecord record;
  record.config_hash = cfg.hash();
  double best_fde = std::numeric_limits<double>::infinity();
  int64_t global_step = 0;

  for (int epoch = 0; epoch < cfg.total_epochs(); ++epoch) {
    const bool tf = epoch < cfg.epochs_tf;
    const std::vector<int> order =
        shuffled_indices(n_train, static_cast<uint64_t>(cfg.seed) * 1000003ULL + epoch);

    double sum_total = 0.0, sum_lg = 0.0, sum_lwp = 0.0, sum_ly = 0.0;
    int batches = 0;
    for (int start = 0; start < n_train; start += cfg.batch_size, ++batches) {
      const int count = std::min(cfg.batch_size, n_train - start);
      std::vector<ElementResult> results(static_cast<size_t>(count));
      try {
        parallel_for(count, [&](int e) {
          const int scene_idx = order[static_cast<size_t>(start + e)];
          const Scene& scene = train_scenes[static_cast<size_t>(scene_idx)];
          Graph g;
          ForwardOptions opts;
          opts.epoch = epoch;
          opts.tf_switch_epoch = cfg.epochs_tf;
          opts.targets = &targets[static_cast<size_t>(scene_idx)];
          DestineModel::Forward fw = model.forward(g, scene, opts);
          TotalLossResult loss = total_loss(g, fw.vars, *opts.targets, cfg.coarse_rate_hz,
                                            scene.dt, weights);
          g.backward(loss.total);
          ElementResult& res = results[static_cast<size_t>(e)];
          res.loss = loss.values;
          res.grads.resize(model.params().count());
          for (const Graph::ParamGrad& pg : g.param_grads()) {
            if (pg.grad == nullptr) continue;
            res.grads[param_index.at(pg.param)] = *pg.grad;
          }
        });
      } catch (const NumericError& e) {
        // Abort with a diagnostic dump of the offending batch.
        std::string dump = "numeric failure during training\n";
        dump += "epoch " + std::to_string(epoch) + " batch " + std::to_string(batches) + "\n";
        dump += "scenes:";
        for (int e2 = 0; e2 < count; ++e2) {
          dump += " " + std::to_string(order[static_cast<size_t>(start + e2)]);
        }
        dump += "\nerror: " + std::string(e.what()) + "\n";
        write_text(out_dir + "/nan_dump.txt", dump);
        throw NumericError(std::string(e.what()) + " (batch dump in " + out_dir +
                           "/nan_dump.txt)");
      }

      // Fixed reduction order: element index within the batch.
      model.params().zero_grad();
      const double scale = 1.0 / count;
      const auto& items = model.params().items();
      for (int e = 0; e < count; ++e) {
        const ElementResult& res = results[static_cast<size_t>(e)];
        for (size_t pi = 0; pi < items.size(); ++pi) {
          if (res.grads[pi].empty()) continue;
          std::vector<double>& dst = items[pi].tensor->grad();
          const std::vector<double>& src = res.grads[pi];
          for (size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
        }
        sum_total += res.loss.total;
        sum_lg += res.loss.l_g;
        sum_lwp += res.loss.l_wp;
        sum_ly += res.loss.l_y;
      }
      adam.step(nn::cosine_lr(global_step, total_steps, cfg.lr0));
      ++global_step;
    }

    EpochLog elog;
    elog.epoch = epoch;
    elog.teacher_forcing = tf;
    elog.mean_total = sum_total / n_train;
    elog.mean_l_g = sum_lg / n_train;
    elog.mean_l_wp = sum_lwp / n_train;
    elog.mean_l_y = sum_ly / n_train;

    MetricsReport val = evaluate_model(model, val_scenes, cfg.k, cfg.miss_threshold);
    elog.val_min_fde = val.min_fde;
    elog.val_min_ade = val.min_ade;
    record.epochs.push_back(elog);

    const std::string ckpt = out_dir + "/" + epoch_ckpt_name(epoch);
    save_checkpoint(ckpt, model.params());
    if (val.min_fde < best_fde) {
      best_fde = val.min_fde;
      record.best_epoch = epoch;
      fs::copy_file(ckpt, out_dir + "/best.ckpt", fs::copy_options::overwrite_existing);
    }
    if (log != nullptr) {
      char line[256];
      std::snprintf(line, sizeof(line),
                    "epoch %d tf=%d loss=%.6f (g=%.4f wp=%.4f y=%.4f) val_minFDE=%.6f "
                    "val_minADE=%.6f%s",
                    epoch, tf ? 1 : 0, elog.mean_total, elog.mean_l_g, elog.mean_l_wp,
                    elog.mean_l_y, elog.val_min_fde, elog.val_min_ade,
                    epoch + 1 == cfg.epochs_tf ? "  [teacher-forcing switch after this epoch]"
                                               : "");
      (*log) << line << "\n";
    }
  }

  // Final metrics come from the reloaded best checkpoint so that a later
  // `eval` of the same file is bit-identical.
  record.checkpoint_path = out_dir + "/best.ckpt";
  load_checkpoint(record.checkpoint_path, model.params());
  record.final_metrics = evaluate_model(model, val_scenes, cfg.k, cfg.miss_threshold);
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  // Persist the run record and the metrics CSV row.
  nlohmann::json j;
  j["config_hash"] = record.config_hash;
  j["best_epoch"] = record.best_epoch;
  j["checkpoint"] = record.checkpoint_path;
  j["wall_seconds"] = record.wall_seconds;
  j["epochs"] = nlohmann::json::array();
  for (const EpochLog& e : record.epochs) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"teacher_forcing", e.teacher_forcing},
                           {"mean_total", e.mean_total},
                           {"mean_l_g", e.mean_l_g},
                           {"mean_l_wp", e.mean_l_wp},
                           {"mean_l_y", e.mean_l_y},
                           {"val_min_fde", e.val_min_fde},
                           {"val_min_ade", e.val_min_ade}});
  }
  j["final"] = {{"min_ade", record.final_metrics.min_ade},
                {"min_fde", record.final_metrics.min_fde},
                {"mr", record.final_metrics.mr},
                {"hor_pct", record.final_metrics.hor_pct},
                {"sor_pct", record.final_metrics.sor_pct},
                {"min_de_1s", record.final_metrics.min_de_1s},
                {"min_de_2s", record.final_metrics.min_de_2s},
                {"min_de_3s", record.final_metrics.min_de_3s}};
  write_text(out_dir + "/run_record.json", j.dump(2) + "\n");
  write_text(out_dir + "/metrics.csv", MetricsReport::csv_header() + "\n" +
                                           record.final_metrics.csv_row(record.config_hash,
                                                                        cfg.seed) +
                                           "\n");
  return record;
}

RunRecord train_from_dir(const std::string& data_dir, const TrainConfig& cfg,
                         const std::string& out_dir, std::ostream* log) {
  const std::vector<Scene> train_scenes = load_scene_dir(data_dir + "/train");
  const std::vector<Scene> val_scenes = load_scene_dir(data_dir + "/val");
  DestineModel model(cfg.to_model_config(), static_cast<uint64_t>(cfg.seed));
  return train_model(model, train_scenes, val_scenes, cfg, out_dir, log);
}

MetricsReport evaluate_checkpoint(const std::string& ckpt_path, const std::string& data_dir, int k,
                                  const std::string& config_path) {
  std::string cfg_file = config_path;
  if (cfg_file.empty()) {
    cfg_file = (fs::path(ckpt_path).parent_path() / "config.txt").string();
  }
  TrainConfig cfg = load_train_config(cfg_file);
  if (k > cfg.k) {
    throw ConfigError("eval: k=" + std::to_string(k) + " exceeds the trained k=" +
                      std::to_string(cfg.k));
  }
  DestineModel model(cfg.to_model_config(), static_cast<uint64_t>(cfg.seed));
  load_checkpoint(ckpt_path, model.params());
  const std::vector<Scene> scenes = load_scene_dir(data_dir + "/val");
  return evaluate_model(model, scenes, k, cfg.miss_threshold);
}

// ---------------------------------------------------------------------------
// Ablation driver

namespace {

std::string trim_copy(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::pair<std::string, std::string>> parse_overrides(const std::string& text,
                                                                 int line_no) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    const size_t eq = tok.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("matrix line " + std::to_string(line_no) + ": expected key=value, got '" +
                        tok + "'");
    }
    out.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return out;
}

}  // namespace

AblationMatrix parse_ablation_matrix(const std::string& text) {
  AblationMatrix m;
  m.seeds = {1, 2, 3};
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim_copy(line);
    if (line.empty()) continue;
    const size_t colon = line.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("matrix line " + std::to_string(line_no) + ": expected 'key: ...'");
    }
    const std::string head = trim_copy(line.substr(0, colon));
    const std::string rest = trim_copy(line.substr(colon + 1));
    if (head == "seeds") {
      m.seeds.clear();
      std::istringstream ss(rest);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        m.seeds.push_back(std::stoi(trim_copy(tok)));
      }
      if (m.seeds.empty()) throw ConfigError("matrix: seeds list is empty");
    } else if (head == "base") {
      for (const auto& [key, value] : parse_overrides(rest, line_no)) {
        apply_config_override(m.base, key, value);
      }
    } else if (head.rfind("cell ", 0) == 0) {
      AblationCell cell;
      cell.name = trim_copy(head.substr(5));
      if (cell.name.empty()) throw ConfigError("matrix: cell without a name");
      cell.overrides = parse_overrides(rest, line_no);
      m.cells.push_back(std::move(cell));
    } else {
      throw ConfigError("matrix line " + std::to_string(line_no) + ": unknown directive '" + head +
                        "'");
    }
  }
  if (m.cells.empty()) throw ConfigError("matrix: no cells defined");
  return m;
}

AblationMatrix load_ablation_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open matrix file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_ablation_matrix(text);
}

AblationResult run_ablation(const AblationMatrix& matrix, const std::vector<Scene>& train_scenes,
                            const std::vector<Scene>& val_scenes, const std::string& out_dir,
                            std::ostream* log) {
  fs::create_directories(out_dir);
  AblationResult result;
  std::ostringstream csv;
  csv << "cell,seed,k,scenes,min_ade,min_fde,mr,hor_pct,sor_pct,min_de_1s,min_de_2s,min_de_3s,"
         "wall_seconds\n";

  for (const AblationCell& cell : matrix.cells) {
    MetricsReport mean_report;
    double mean_wall = 0.0;
    for (int seed : matrix.seeds) {
      TrainConfig cfg = matrix.base;
      for (const auto& [key, value] : cell.overrides) apply_config_override(cfg, key, value);
      cfg.seed = seed;
      cfg.validate();
      if (log != nullptr) (*log) << "[ablate] cell=" << cell.name << " seed=" << seed << "\n";
      DestineModel model(cfg.to_model_config(), static_cast<uint64_t>(seed));
      const std::string run_dir = out_dir + "/" + cell.name + "_s" + std::to_string(seed);
      RunRecord record = train_model(model, train_scenes, val_scenes, cfg, run_dir, log);

      AblationRow row;
      row.cell = cell.name;
      row.seed = seed;
      row.metrics = record.final_metrics;
      row.wall_seconds = record.wall_seconds;
      result.rows.push_back(row);
      char wall[32];
      std::snprintf(wall, sizeof(wall), "%.2f", record.wall_seconds);
      csv << record.final_metrics.csv_row(cell.name, seed) << "," << wall << "\n";

      mean_report.min_ade += record.final_metrics.min_ade;
      mean_report.min_fde += record.final_metrics.min_fde;
      mean_report.mr += record.final_metrics.mr;
      mean_report.hor_pct += record.final_metrics.hor_pct;
      mean_report.sor_pct += record.final_metrics.sor_pct;
      mean_report.min_de_1s += record.final_metrics.min_de_1s;
      mean_report.min_de_2s += record.final_metrics.min_de_2s;
      mean_report.min_de_3s += record.final_metrics.min_de_3s;
      mean_report.k_used = record.final_metrics.k_used;
      mean_report.scene_count = record.final_metrics.scene_count;
      mean_wall += record.wall_seconds;
    }
    const double ns = static_cast<double>(matrix.seeds.size());
    mean_report.min_ade /= ns;
    mean_report.min_fde /= ns;
    mean_report.mr /= ns;
    mean_report.hor_pct /= ns;
    mean_report.sor_pct /= ns;
    mean_report.min_de_1s /= ns;
    mean_report.min_de_2s /= ns;
    mean_report.min_de_3s /= ns;

    AblationRow mean_row;
    mean_row.cell = cell.name;
    mean_row.seed = -1;  // mean over seeds
    mean_row.metrics = mean_report;
    mean_row.wall_seconds = mean_wall;
    result.rows.push_back(mean_row);
    char wall[32];
    std::snprintf(wall, sizeof(wall), "%.2f", mean_wall);
    csv << mean_report.csv_row(cell.name, -1) << "," << wall << "\n";
  }

  result.csv = csv.str();
  write_text(out_dir + "/ablation.csv", result.csv);
  return result;
}

}  // namespace destine
