#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "destine/tensor.hpp"

namespace destine::nn {

class Graph;

// Lightweight handle into a Graph. Copies are cheap; the graph owns storage.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Shape& shape() const;
  int rows() const;
  int cols() const;
};

// Additive attention mask: allowed entries contribute 0 to the logits,
// blocked entries the kBlocked sentinel. exp(kBlocked - rowmax) underflows,
// so blocked positions get an exact zero weight.
class AttentionMask {
 public:
  AttentionMask(int rows, int cols, bool allow_all = true);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  void set_allowed(int i, int j, bool on);
  bool is_allowed(int i, int j) const {
    return allow_[static_cast<size_t>(i) * cols_ + j] != 0;
  }
  double additive(int i, int j) const { return is_allowed(i, j) ? 0.0 : kBlocked; }
  int allowed_in_row(int i) const;
  // Throws DegenerateMaskError when some row is fully blocked.
  void validate_rows() const;

  int window_steps = 0;  // set by the temporal mask builders

  static constexpr double kBlocked = -1e30;

 private:
  int rows_;
  int cols_;
  std::vector<uint8_t> allow_;
};

// Reverse-mode autodiff over 2D tensors. One graph is single-threaded;
// independent graphs may run concurrently and share parameter tensors
// read-only. Every op validates shapes and rejects non-finite outputs.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves -------------------------------------------------------------
  Var constant(const Tensor& t);
  Var constant(Shape shape, std::vector<double> data);
  Var scalar(double v);
  // Differentiable leaf bound to an external tensor; deduplicated by
  // address so shared weights accumulate into one grad buffer.
  Var param(Tensor& t);
  // Differentiable leaf not bound to anything (grad via grad()).
  Var leaf(const Tensor& t);

  // Elementwise --------------------------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var affine(Var a, double scale, double shift);
  Var neg(Var a) { return affine(a, -1.0, 0.0); }
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var clamp(Var a, double lo, double hi);
  Var huber_elementwise(Var diff, double delta);
  // a: (R x C), row: (1 x C), added to every row.
  Var add_row_broadcast(Var a, Var row);

  // Linear algebra -----------------------------------------------------
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  // out[r, m] = sum_c h[r, c] * filters[r, c * m_out + m]; each row of
  // `filters` is a row-major (C x m_out) matrix applied to that row of h.
  Var dynamic_linear(Var h, Var filters, int m_out);

  // Structure ----------------------------------------------------------
  Var reshape(Var a, Shape shape);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var a, int begin, int count);
  Var pick_rows(Var a, std::vector<int> row_index);
  // out[i] = flat_index[i] < 0 ? 0 : src.flat[flat_index[i]]
  Var gather(Var src, Shape out_shape, std::vector<int64_t> flat_index);

  // Reductions / normalization ------------------------------------------
  Var sum(Var a);
  Var mean(Var a);
  Var row_softmax(Var a, const AttentionMask* mask = nullptr);
  // Normalizes over columns with learned scale/shift (both 1 x C).
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

  // Execution ----------------------------------------------------------
  void backward(Var loss);
  const Tensor& value(Var v) const;
  const std::vector<double>& grad(Var v);
  // Adds scale * grad into Tensor::grad of every bound parameter.
  void accumulate_param_grads(double scale = 1.0);
  struct ParamGrad {
    Tensor* param;
    const std::vector<double>* grad;  // null when untouched by backward
  };
  // Bound parameters in registration order.
  std::vector<ParamGrad> param_grads();

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  int push(Tensor value, bool needs_grad, std::function<void()> backward, const char* op);
  std::vector<double>& grad_buf(int id);
  void check_same_graph(Var v) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> param_ids_;
  std::vector<std::pair<Tensor*, int>> param_order_;
  bool ran_backward_ = false;

  friend struct Var;
};

}  // namespace destine::nn
