#include "destine/gradcheck.hpp"

#include <cmath>
#include <unordered_map>

namespace destine::nn {

GradCheckReport grad_check(const std::function<Var(Graph&)>& build, std::vector<Tensor*> leaves,
                           double fd_step) {
  for (Tensor* t : leaves) {
    if (!t->requires_grad()) t->set_requires_grad(true);
  }

  // Analytic pass.
  std::unordered_map<Tensor*, std::vector<double>> analytic;
  {
    Graph g;
    Var out = build(g);
    if (g.value(out).size() != 1) {
      throw DimensionError("grad_check forward must be scalar-valued");
    }
    g.backward(out);
    for (auto& pg : g.param_grads()) {
      if (pg.grad != nullptr) analytic[pg.param] = *pg.grad;
    }
  }

  auto eval = [&]() {
    Graph g;
    Var out = build(g);
    return g.value(out).data()[0];
  };

  GradCheckReport report;
  for (Tensor* t : leaves) {
    auto it = analytic.find(t);
    for (int64_t i = 0; i < t->size(); ++i) {
      const double saved = t->data()[i];
      t->data()[i] = saved + fd_step;
      const double fp = eval();
      t->data()[i] = saved - fd_step;
      const double fm = eval();
      t->data()[i] = saved;
      const double numeric = (fp - fm) / (2.0 * fd_step);
      const double a = it == analytic.end() ? 0.0 : it->second[static_cast<size_t>(i)];
      const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > report.max_rel_err) report.max_rel_err = rel;
      ++report.coords_checked;
    }
  }
  return report;
}

}  // namespace destine::nn
