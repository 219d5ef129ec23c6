#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "destine/checkpoint.hpp"
#include "destine/generator.hpp"
#include "destine/svg_plot.hpp"
#include "destine/trainer.hpp"

namespace fs = std::filesystem;
using namespace destine;

namespace {

void run_gen(uint64_t seed, int count, const std::string& layout, const std::string& out_dir,
             int agents) {
  fs::create_directories(out_dir);
  const std::vector<Layout> mixed{Layout::kStraight, Layout::kCurve, Layout::kTee, Layout::kCross};
  for (int i = 0; i < count; ++i) {
    GeneratorSpec spec;
    Rng pick(seed + static_cast<uint64_t>(i) * 7919ULL);
    spec.layout = layout == "mixed" ? mixed[static_cast<size_t>(i) % mixed.size()]
                                    : layout_from_string(layout);
    spec.num_agents = agents > 0 ? agents : pick.uniform_int(2, 5);
    Scene scene = generate_scene(seed + static_cast<uint64_t>(i), spec);
    char name[64];
    std::snprintf(name, sizeof(name), "scene_%05d.json", i);
    save_scene(scene, out_dir + "/" + name);
  }
  std::cout << "wrote " << count << " scenes to " << out_dir << "\n";
}

void run_eval(const std::string& ckpt, const std::string& data, int k,
              const std::string& config_path) {
  MetricsReport r = evaluate_checkpoint(ckpt, data, k, config_path);
  std::cout << MetricsReport::csv_header() << "\n" << r.csv_row("eval", 0) << "\n";
}

void run_plot(const std::string& scene_path, const std::string& ckpt, const std::string& out,
              const std::string& config_path) {
  Scene scene = load_scene(scene_path);
  ScenePrediction pred;
  if (!ckpt.empty()) {
    std::string cfg_file = config_path;
    if (cfg_file.empty()) cfg_file = (fs::path(ckpt).parent_path() / "config.txt").string();
    TrainConfig cfg = load_train_config(cfg_file);
    DestineModel model(cfg.to_model_config(), static_cast<uint64_t>(cfg.seed));
    load_checkpoint(ckpt, model.params());
    pred = model.predict_focal_global(scene);
  }
  plot_scene(scene, pred, out);
  std::cout << "wrote " << out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"destine: multi-agent trajectory forecaster"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "generate synthetic scenes");
  uint64_t gen_seed = 1;
  int gen_count = 16;
  int gen_agents = 0;
  std::string gen_layout = "mixed";
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "base seed");
  gen->add_option("--count", gen_count, "number of scenes");
  gen->add_option("--layout", gen_layout, "straight|curve|t|cross|mixed");
  gen->add_option("--agents", gen_agents, "agents per scene (0 = varied)");
  gen->add_option("--out", gen_out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train a model");
  std::string train_config, train_data, train_out;
  train->add_option("--config", train_config, "config file")->required();
  train->add_option("--data", train_data, "dataset dir with train/ and val/")->required();
  train->add_option("--out", train_out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_config;
  int eval_k = 6;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset dir with val/")->required();
  eval->add_option("--k", eval_k, "modes to evaluate");
  eval->add_option("--config", eval_config, "config file (default: config.txt next to ckpt)");

  auto* ablate = app.add_subcommand("ablate", "run an ablation matrix");
  std::string abl_matrix, abl_data, abl_out;
  ablate->add_option("--matrix", abl_matrix, "matrix spec file")->required();
  ablate->add_option("--data", abl_data, "dataset dir with train/ and val/")->required();
  ablate->add_option("--out", abl_out, "output directory")->required();

  auto* plot = app.add_subcommand("plot", "render a scene to SVG");
  std::string plot_scene_path, plot_ckpt, plot_out = "scene.svg", plot_config;
  plot->add_option("--scene", plot_scene_path, "scene json")->required();
  plot->add_option("--ckpt", plot_ckpt, "checkpoint file (optional)");
  plot->add_option("--out", plot_out, "output svg path");
  plot->add_option("--config", plot_config, "config file (default: config.txt next to ckpt)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      run_gen(gen_seed, gen_count, gen_layout, gen_out, gen_agents);
    } else if (train->parsed()) {
      TrainConfig cfg = load_train_config(train_config);
      RunRecord record = train_from_dir(train_data, cfg, train_out, &std::cout);
      std::cout << "best epoch " << record.best_epoch << ", checkpoint " << record.checkpoint_path
                << "\n"
                << MetricsReport::csv_header() << "\n"
                << record.final_metrics.csv_row(record.config_hash, cfg.seed) << "\n";
    } else if (eval->parsed()) {
      run_eval(eval_ckpt, eval_data, eval_k, eval_config);
    } else if (ablate->parsed()) {
      AblationMatrix matrix = load_ablation_matrix(abl_matrix);
      const std::vector<Scene> train_scenes = load_scene_dir(abl_data + "/train");
      const std::vector<Scene> val_scenes = load_scene_dir(abl_data + "/val");
      AblationResult result = run_ablation(matrix, train_scenes, val_scenes, abl_out, &std::cout);
      std::cout << result.csv;
    } else if (plot->parsed()) {
      run_plot(plot_scene_path, plot_ckpt, plot_out, plot_config);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
