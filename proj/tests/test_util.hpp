#pragma once

#include <vector>

#include "destine/rng.hpp"
#include "destine/tensor.hpp"

namespace destine::testutil {

inline nn::Tensor random_tensor(Rng& rng, nn::Shape shape, double scale = 1.0) {
  nn::Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0, scale);
  return t;
}

}  // namespace destine::testutil
