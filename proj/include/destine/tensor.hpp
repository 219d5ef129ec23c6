#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "destine/common.hpp"

namespace destine::nn {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major fp64 tensor. Parameters carry requires_grad and a grad
// buffer of matching shape that the optimizer consumes.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  // 2D convenience, data listed row by row.
  static Tensor matrix(int rows, int cols, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  // 2D accessors; throw on rank mismatch.
  int rows() const;
  int cols() const;
  double& at(int r, int c);
  double at(int r, int c) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on);
  std::vector<double>& grad();
  const std::vector<double>& grad() const { return grad_; }
  void zero_grad();

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
  std::vector<double> grad_;
};

}  // namespace destine::nn
