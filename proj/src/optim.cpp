#include "destine/optim.hpp"

#include <cmath>

namespace destine::nn {

AdamOptimizer::AdamOptimizer(ParamSet& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
  m_.reserve(params.count());
  v_.reserve(params.count());
  for (const NamedParam& p : params.items()) {
    m_.emplace_back(static_cast<size_t>(p.tensor->size()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.tensor->size()), 0.0);
  }
}

void AdamOptimizer::step(double lr) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  const auto& items = params_->items();
  for (size_t pi = 0; pi < items.size(); ++pi) {
    Tensor& t = *items[pi].tensor;
    const std::vector<double>& g = t.grad();
    std::vector<double>& m = m_[pi];
    std::vector<double>& v = v_[pi];
    for (size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError("non-finite gradient in parameter '" + items[pi].name + "'");
      }
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      t.data()[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * t.data()[i]);
    }
  }
}

double cosine_lr(int64_t step, int64_t total_steps, double lr0) {
  if (total_steps <= 0) throw RangeError("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps) {
    throw RangeError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(total_steps) + "]");
  }
  const double pi = 3.14159265358979323846;
  return lr0 * (1.0 + std::cos(pi * static_cast<double>(step) / static_cast<double>(total_steps))) / 2.0;
}

}  // namespace destine::nn
