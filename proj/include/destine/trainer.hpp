#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "destine/model.hpp"
#include "destine/train_config.hpp"

namespace destine {

struct EpochLog {
  int epoch = 0;
  bool teacher_forcing = false;
  double mean_total = 0.0;
  double mean_l_g = 0.0;
  double mean_l_wp = 0.0;
  double mean_l_y = 0.0;
  double val_min_fde = 0.0;
  double val_min_ade = 0.0;
};

struct RunRecord {
  std::string config_hash;
  std::vector<EpochLog> epochs;
  MetricsReport final_metrics;  // best checkpoint, reloaded from disk
  std::string checkpoint_path;
  int best_epoch = -1;
  double wall_seconds = 0.0;
};

// Trains in place. Writes per-epoch checkpoints, best.ckpt, config.txt,
// run_record.json and metrics.csv under out_dir. The returned final metrics
// come from the reloaded best checkpoint, so a later `eval` on that file
// reproduces them exactly.
RunRecord train_model(DestineModel& model, const std::vector<Scene>& train_scenes,
                      const std::vector<Scene>& val_scenes, const TrainConfig& cfg,
                      const std::string& out_dir, std::ostream* log = nullptr);

// Convenience entry point working from a dataset directory holding train/
// and val/ subdirectories of scene files.
RunRecord train_from_dir(const std::string& data_dir, const TrainConfig& cfg,
                         const std::string& out_dir, std::ostream* log = nullptr);

MetricsReport evaluate_model(DestineModel& model, const std::vector<Scene>& scenes, int k,
                             double miss_threshold = 2.0);

// Loads the config stored next to the checkpoint (config.txt in the same
// directory) unless an explicit config path is given.
MetricsReport evaluate_checkpoint(const std::string& ckpt_path, const std::string& data_dir, int k,
                                  const std::string& config_path = "");

struct AblationCell {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;
};

struct AblationMatrix {
  std::vector<int> seeds;
  TrainConfig base;
  std::vector<AblationCell> cells;
};

AblationMatrix parse_ablation_matrix(const std::string& text);
AblationMatrix load_ablation_matrix(const std::string& path);

struct AblationRow {
  std::string cell;
  int seed = 0;
  MetricsReport metrics;
  double wall_seconds = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // per (cell, seed), plus per-cell means with seed -1
  std::string csv;                // fixed column order, documented in the README
};

// Trains every (cell, seed) with a fresh model and optimizer, shared scene
// sets, and emits the comparison table.
AblationResult run_ablation(const AblationMatrix& matrix, const std::vector<Scene>& train_scenes,
                            const std::vector<Scene>& val_scenes, const std::string& out_dir,
                            std::ostream* log = nullptr);

}  // namespace destine
