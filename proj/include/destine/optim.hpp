#pragma once

#include <cstdint>
#include <vector>

#include "destine/layers.hpp"

namespace destine::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Adam with decoupled weight decay. Moment buffers are allocated per
// parameter at construction and shape-match them by definition.
class AdamOptimizer {
 public:
  AdamOptimizer(ParamSet& params, AdamConfig cfg = {});

  // Consumes Tensor::grad of every registered parameter.
  void step(double lr);
  void zero_grad() { params_->zero_grad(); }
  int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  ParamSet* params_;
  AdamConfig cfg_;
  int64_t step_count_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// lr0 * (1 + cos(pi * step / total_steps)) / 2; throws RangeError outside
// 0 <= step <= total_steps.
double cosine_lr(int64_t step, int64_t total_steps, double lr0);

}  // namespace destine::nn
