#include "destine/train_config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace destine {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct KeyEntry {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::map<std::string, KeyEntry>& key_table() {
  static const std::map<std::string, KeyEntry> table = [] {
    std::map<std::string, KeyEntry> t;
    auto add_int = [&](const std::string& key, int TrainConfig::* field) {
      t[key] = {[field](TrainConfig& c, const std::string& k, const std::string& v) {
                  c.*field = parse_int(k, v);
                },
                [field](const TrainConfig& c) { return std::to_string(c.*field); }};
    };
    auto add_double = [&](const std::string& key, double TrainConfig::* field) {
      t[key] = {[field](TrainConfig& c, const std::string& k, const std::string& v) {
                  c.*field = parse_double(k, v);
                },
                [field](const TrainConfig& c) { return fmt_double(c.*field); }};
    };
    auto add_bool = [&](const std::string& key, bool TrainConfig::* field) {
      t[key] = {[field](TrainConfig& c, const std::string& k, const std::string& v) {
                  c.*field = parse_bool(k, v);
                },
                [field](const TrainConfig& c) { return c.*field ? "true" : "false"; }};
    };
    auto add_string = [&](const std::string& key, std::string TrainConfig::* field) {
      t[key] = {[field](TrainConfig& c, const std::string&, const std::string& v) { c.*field = v; },
                [field](const TrainConfig& c) { return c.*field; }};
    };
    add_int("epochs_tf", &TrainConfig::epochs_tf);
    add_int("epochs_ft", &TrainConfig::epochs_ft);
    add_int("batch_size", &TrainConfig::batch_size);
    add_double("lr0", &TrainConfig::lr0);
    add_double("weight_decay", &TrainConfig::weight_decay);
    add_int("seed", &TrainConfig::seed);
    add_int("k", &TrainConfig::k);
    add_int("embed_dim", &TrainConfig::embed_dim);
    add_int("layers", &TrainConfig::layers);
    add_int("heads", &TrainConfig::heads);
    add_double("radius", &TrainConfig::radius);
    add_int("n_max", &TrainConfig::n_max);
    add_bool("goal.enabled", &TrainConfig::goal_enabled);
    add_string("goal.kind", &TrainConfig::goal_kind);
    add_int("goal.layers", &TrainConfig::goal_layers);
    add_int("goal.learned_depth", &TrainConfig::goal_learned_depth);
    add_double("coarse.rate_hz", &TrainConfig::coarse_rate_hz);
    add_string("tta.variant", &TrainConfig::tta_variant);
    add_int("tta.layers", &TrainConfig::tta_layers);
    add_double("tta.tw_seconds", &TrainConfig::tta_tw_seconds);
    add_bool("tta.residual", &TrainConfig::tta_residual);
    add_double("loss.alpha", &TrainConfig::loss_alpha);
    add_double("loss.gamma", &TrainConfig::loss_gamma);
    add_double("loss.beta", &TrainConfig::loss_beta);
    add_double("huber.delta", &TrainConfig::huber_delta);
    add_double("miss_threshold", &TrainConfig::miss_threshold);
    return t;
  }();
  return table;
}

}  // namespace

ModelConfig TrainConfig::to_model_config() const {
  ModelConfig m;
  m.embed_dim = embed_dim;
  m.heads = heads;
  m.layers = layers;
  m.k_modes = k;
  m.radius = radius;
  m.n_max = n_max;
  m.use_goal = goal_enabled;
  if (goal_kind == "dynamic") {
    m.goal_kind = ModelConfig::GoalKind::kDynamic;
  } else if (goal_kind == "learned") {
    m.goal_kind = ModelConfig::GoalKind::kLearned;
  } else {
    throw ConfigError("config: goal.kind must be 'dynamic' or 'learned', got '" + goal_kind + "'");
  }
  m.goal_layers = goal_layers;
  m.learned_depth = goal_learned_depth;
  m.coarse_rate_hz = coarse_rate_hz;
  m.tta.variant = tta_variant_from_string(tta_variant);
  m.tta.layers = tta_layers;
  m.tta.tw_seconds = tta_tw_seconds;
  m.tta.residual = tta_residual;
  m.validate();
  return m;
}

LossWeights TrainConfig::to_loss_weights() const {
  LossWeights w;
  w.alpha = loss_alpha;
  w.gamma = loss_gamma;
  w.beta = loss_beta;
  w.huber_delta = huber_delta;
  return w;
}

void TrainConfig::validate() const {
  if (epochs_tf < 0 || epochs_ft < 0 || total_epochs() < 1) {
    throw ConfigError("config: epochs_tf + epochs_ft must be >= 1");
  }
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (lr0 <= 0.0) throw ConfigError("config: lr0 must be positive");
  if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be >= 0");
  if (miss_threshold <= 0.0) throw ConfigError("config: miss_threshold must be positive");
  to_model_config();  // validates the model side
}

std::string TrainConfig::canonical_text() const {
  std::ostringstream os;
  for (const auto& [key, entry] : key_table()) {
    os << key << " = " << entry.get(*this) << "\n";
  }
  return os.str();
}

std::string TrainConfig::hash() const {
  const std::string text = canonical_text();
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_config_override(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto it = key_table().find(key);
  if (it == key_table().end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second.set(cfg, key, value);
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    apply_config_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  TrainConfig cfg = parse_train_config(text);
  cfg.validate();
  return cfg;
}

}  // namespace destine
