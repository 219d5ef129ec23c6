#pragma once

#include <functional>
#include <vector>

#include "destine/graph.hpp"

namespace destine::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
};

// Compares analytic gradients of a scalar-valued forward against central
// finite differences. `build` reconstructs the forward on a fresh graph and
// must bind every tensor in `leaves` via Graph::param. Relative error per
// coordinate is |a - n| / max(1, |a|, |n|).
GradCheckReport grad_check(const std::function<Var(Graph&)>& build, std::vector<Tensor*> leaves,
                           double fd_step = 1e-6);

}  // namespace destine::nn
