#include "destine/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace destine::nn {

namespace {

// C (m x n) = op(A)(m x k) * op(B)(k x n) + beta * C, all row-major.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a, const double* b,
          double beta, double* c) {
  const size_t mn = static_cast<size_t>(m) * n;
  if (beta == 0.0) {
    std::memset(c, 0, mn * sizeof(double));
  }
  if (!trans_a && !trans_b) {
    for (int i = 0; i < m; ++i) {
      const double* ai = a + static_cast<size_t>(i) * k;
      double* ci = c + static_cast<size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        const double av = ai[p];
        if (av == 0.0) continue;
        const double* bp = b + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (int i = 0; i < m; ++i) {
      const double* ai = a + static_cast<size_t>(i) * k;
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const double* bj = b + static_cast<size_t>(j) * k;
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
        ci[j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {
    for (int p = 0; p < k; ++p) {
      const double* ap = a + static_cast<size_t>(p) * m;
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int i = 0; i < m; ++i) {
        const double av = ap[i];
        if (av == 0.0) continue;
        double* ci = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else {
    for (int i = 0; i < m; ++i) {
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const double* bj = b + static_cast<size_t>(j) * k;
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += a[static_cast<size_t>(p) * m + i] * bj[p];
        ci[j] += acc;
      }
    }
  }
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw NumericError(std::string("non-finite output of op '") + op + "'");
  }
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " requires a rank-2 tensor, got " + shape_str(t.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// AttentionMask

AttentionMask::AttentionMask(int rows, int cols, bool allow_all) : rows_(rows), cols_(cols) {
  if (rows <= 0 || cols <= 0) throw DimensionError("attention mask extents must be positive");
  allow_.assign(static_cast<size_t>(rows) * cols, allow_all ? 1 : 0);
}

void AttentionMask::set_allowed(int i, int j, bool on) {
  allow_[static_cast<size_t>(i) * cols_ + j] = on ? 1 : 0;
}

int AttentionMask::allowed_in_row(int i) const {
  int n = 0;
  for (int j = 0; j < cols_; ++j) n += is_allowed(i, j) ? 1 : 0;
  return n;
}

void AttentionMask::validate_rows() const {
  for (int i = 0; i < rows_; ++i) {
    if (allowed_in_row(i) == 0) {
      throw DegenerateMaskError("attention mask row " + std::to_string(i) + " is fully blocked");
    }
  }
}

// ---------------------------------------------------------------------------
// Var

const Shape& Var::shape() const { return graph->value(*this).shape(); }
int Var::rows() const { return graph->value(*this).rows(); }
int Var::cols() const { return graph->value(*this).cols(); }

// ---------------------------------------------------------------------------
// Graph plumbing

int Graph::push(Tensor value, bool needs_grad, std::function<void()> backward, const char* op) {
  require_finite(value, op);
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  node.backward = needs_grad ? std::move(backward) : std::function<void()>();
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Graph::grad_buf(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) n.grad.assign(static_cast<size_t>(n.value.size()), 0.0);
  return n.grad;
}

void Graph::check_same_graph(Var v) const {
  if (!v.valid() || v.graph != this || v.id >= static_cast<int>(nodes_.size())) {
    throw DimensionError("Var does not belong to this graph");
  }
}

const Tensor& Graph::value(Var v) const {
  check_same_graph(v);
  return nodes_[static_cast<size_t>(v.id)].value;
}

const std::vector<double>& Graph::grad(Var v) {
  check_same_graph(v);
  return grad_buf(v.id);
}

Var Graph::constant(const Tensor& t) {
  return Var{this, push(t, false, nullptr, "constant")};
}

Var Graph::constant(Shape shape, std::vector<double> data) {
  return constant(Tensor(std::move(shape), std::move(data)));
}

Var Graph::scalar(double v) { return constant(Tensor({1, 1}, {v})); }

Var Graph::param(Tensor& t) {
  auto it = param_ids_.find(&t);
  if (it != param_ids_.end()) return Var{this, it->second};
  int id = push(t, true, nullptr, "param");
  param_ids_.emplace(&t, id);
  param_order_.emplace_back(&t, id);
  return Var{this, id};
}

Var Graph::leaf(const Tensor& t) {
  return Var{this, push(t, true, nullptr, "leaf")};
}

void Graph::backward(Var loss) {
  check_same_graph(loss);
  const Node& ln = nodes_[static_cast<size_t>(loss.id)];
  if (ln.value.size() != 1) {
    throw DimensionError("backward requires a scalar output, got " + shape_str(ln.value.shape()));
  }
  grad_buf(loss.id)[0] += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
    n.backward();
  }
  ran_backward_ = true;
}

void Graph::accumulate_param_grads(double scale) {
  for (auto& [tensor, id] : param_order_) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) continue;
    std::vector<double>& dst = tensor->grad();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += scale * n.grad[i];
  }
}

std::vector<Graph::ParamGrad> Graph::param_grads() {
  std::vector<ParamGrad> out;
  out.reserve(param_order_.size());
  for (auto& [tensor, id] : param_order_) {
    Node& n = nodes_[static_cast<size_t>(id)];
    out.push_back(ParamGrad{tensor, n.grad.empty() ? nullptr : &n.grad});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise ops

Var Graph::add(Var a, Var b) {
  check_same_graph(a);
  check_same_graph(b);
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape() != tb.shape()) {
    throw DimensionError("add shape mismatch: " + shape_str(ta.shape()) + " vs " + shape_str(tb.shape()));
  }
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) out.data()[i] = ta.data()[i] + tb.data()[i];
  bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  int aid = a.id, bid = b.id;
  int id = push(std::move(out), ng, nullptr, "add");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid, bid]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      if (nodes_[static_cast<size_t>(aid)].needs_grad) {
        std::vector<double>& ga = grad_buf(aid);
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (nodes_[static_cast<size_t>(bid)].needs_grad) {
        std::vector<double>& gb = grad_buf(bid);
        for (size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
      }
    };
  }
  return Var{this, id};
}

Var Graph::sub(Var a, Var b) {
  return add(a, affine(b, -1.0, 0.0));
}

Var Graph::mul(Var a, Var b) {
  check_same_graph(a);
  check_same_graph(b);
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape() != tb.shape()) {
    throw DimensionError("mul shape mismatch: " + shape_str(ta.shape()) + " vs " + shape_str(tb.shape()));
  }
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) out.data()[i] = ta.data()[i] * tb.data()[i];
  bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  int aid = a.id, bid = b.id;
  int id = push(std::move(out), ng, nullptr, "mul");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid, bid]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      const Tensor& va = nodes_[static_cast<size_t>(aid)].value;
      const Tensor& vb = nodes_[static_cast<size_t>(bid)].value;
      if (nodes_[static_cast<size_t>(aid)].needs_grad) {
        std::vector<double>& ga = grad_buf(aid);
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * vb.data()[i];
      }
      if (nodes_[static_cast<size_t>(bid)].needs_grad) {
        std::vector<double>& gb = grad_buf(bid);
        for (size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * va.data()[i];
      }
    };
  }
  return Var{this, id};
}

Var Graph::affine(Var a, double scale, double shift) {
  check_same_graph(a);
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) out.data()[i] = scale * ta.data()[i] + shift;
  bool ng = nodes_[a.id].needs_grad;
  int aid = a.id;
  int id = push(std::move(out), ng, nullptr, "affine");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid, scale]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      std::vector<double>& ga = grad_buf(aid);
      for (size_t i = 0; i < gy.size(); ++i) ga[i] += scale * gy[i];
    };
  }
  return Var{this, id};
}

Var Graph::relu(Var a) {
  check_same_graph(a);
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) out.data()[i] = ta.data()[i] > 0.0 ? ta.data()[i] : 0.0;
  bool ng = nodes_[a.id].needs_grad;
  int aid = a.id;
  int id = push(std::move(out), ng, nullptr, "relu");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      const Tensor& va = nodes_[static_cast<size_t>(aid)].value;
      std::vector<double>& ga = grad_buf(aid);
      for (size_t i = 0; i < gy.size(); ++i) {
        if (va.data()[i] > 0.0) ga[i] += gy[i];
      }
    };
  }
  return Var{this, id};
}

Var Graph::exp(Var a) {
  check_same_graph(a);
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) out.data()[i] = std::exp(ta.data()[i]);
  bool ng = nodes_[a.id].needs_grad;
  int aid = a.id;
  int id = push(std::move(out), ng, nullptr, "exp");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid]() {
      Node& self = nodes_[static_cast<size_t>(id)];
      const std::vector<double>& gy = self.grad;
      std::vector<double>& ga = grad_buf(aid);
      for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * self.value.data()[i];
    };
  }
  return Var{this, id};
}

Var Graph::log(Var a) {
  check_same_graph(a);
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) out.data()[i] = std::log(ta.data()[i]);
  bool ng = nodes_[a.id].needs_grad;
  int aid = a.id;
  int id = push(std::move(out), ng, nullptr, "log");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      const Tensor& va = nodes_[static_cast<size_t>(aid)].value;
      std::vector<double>& ga = grad_buf(aid);
      for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] / va.data()[i];
    };
  }
  return Var{this, id};
}

Var Graph::clamp(Var a, double lo, double hi) {
  if (lo > hi) throw RangeError("clamp: lo > hi");
  check_same_graph(a);
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) out.data()[i] = std::min(hi, std::max(lo, ta.data()[i]));
  bool ng = nodes_[a.id].needs_grad;
  int aid = a.id;
  int id = push(std::move(out), ng, nullptr, "clamp");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid, lo, hi]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      const Tensor& va = nodes_[static_cast<size_t>(aid)].value;
      std::vector<double>& ga = grad_buf(aid);
      for (size_t i = 0; i < gy.size(); ++i) {
        const double x = va.data()[i];
        if (x > lo && x < hi) ga[i] += gy[i];
      }
    };
  }
  return Var{this, id};
}

Var Graph::huber_elementwise(Var diff, double delta) {
  if (delta <= 0.0) throw RangeError("huber delta must be positive");
  check_same_graph(diff);
  const Tensor& td = value(diff);
  Tensor out(td.shape());
  for (int64_t i = 0; i < td.size(); ++i) {
    const double r = td.data()[i];
    const double ar = std::fabs(r);
    out.data()[i] = ar <= delta ? 0.5 * r * r : delta * (ar - 0.5 * delta);
  }
  bool ng = nodes_[diff.id].needs_grad;
  int did = diff.id;
  int id = push(std::move(out), ng, nullptr, "huber");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, did, delta]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      const Tensor& vd = nodes_[static_cast<size_t>(did)].value;
      std::vector<double>& gd = grad_buf(did);
      for (size_t i = 0; i < gy.size(); ++i) {
        const double r = vd.data()[i];
        const double dr = std::fabs(r) <= delta ? r : (r > 0.0 ? delta : -delta);
        gd[i] += gy[i] * dr;
      }
    };
  }
  return Var{this, id};
}

Var Graph::add_row_broadcast(Var a, Var row) {
  check_same_graph(a);
  check_same_graph(row);
  const Tensor& ta = value(a);
  const Tensor& tr = value(row);
  require_rank2(ta, "add_row_broadcast");
  require_rank2(tr, "add_row_broadcast");
  if (tr.rows() != 1 || tr.cols() != ta.cols()) {
    throw DimensionError("add_row_broadcast: row must be 1x" + std::to_string(ta.cols()) + ", got " +
                         shape_str(tr.shape()));
  }
  const int rows = ta.rows(), cols = ta.cols();
  Tensor out(ta.shape());
  for (int i = 0; i < rows; ++i) {
    const double* src = ta.data() + static_cast<size_t>(i) * cols;
    double* dst = out.data() + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) dst[j] = src[j] + tr.data()[j];
  }
  bool ng = nodes_[a.id].needs_grad || nodes_[row.id].needs_grad;
  int aid = a.id, rid = row.id;
  int id = push(std::move(out), ng, nullptr, "add_row_broadcast");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid, rid, rows, cols]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      if (nodes_[static_cast<size_t>(aid)].needs_grad) {
        std::vector<double>& ga = grad_buf(aid);
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (nodes_[static_cast<size_t>(rid)].needs_grad) {
        std::vector<double>& gr = grad_buf(rid);
        for (int i = 0; i < rows; ++i) {
          const double* g = gy.data() + static_cast<size_t>(i) * cols;
          for (int j = 0; j < cols; ++j) gr[static_cast<size_t>(j)] += g[j];
        }
      }
    };
  }
  return Var{this, id};
}

// ---------------------------------------------------------------------------
// Linear algebra

Var Graph::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  check_same_graph(a);
  check_same_graph(b);
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_rank2(ta, "matmul");
  require_rank2(tb, "matmul");
  const int m = trans_a ? ta.cols() : ta.rows();
  const int ka = trans_a ? ta.rows() : ta.cols();
  const int kb = trans_b ? tb.cols() : tb.rows();
  const int n = trans_b ? tb.rows() : tb.cols();
  if (ka != kb) {
    throw DimensionError("matmul inner dim mismatch: " + shape_str(ta.shape()) + (trans_a ? "^T" : "") +
                         " x " + shape_str(tb.shape()) + (trans_b ? "^T" : ""));
  }
  Tensor out({m, n});
  gemm(trans_a, trans_b, m, n, ka, ta.data(), tb.data(), 0.0, out.data());
  bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  int aid = a.id, bid = b.id;
  int id = push(std::move(out), ng, nullptr, "matmul");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid, bid, trans_a, trans_b, m, n, ka]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      const Tensor& va = nodes_[static_cast<size_t>(aid)].value;
      const Tensor& vb = nodes_[static_cast<size_t>(bid)].value;
      const int k = ka;
      if (nodes_[static_cast<size_t>(aid)].needs_grad) {
        std::vector<double>& ga = grad_buf(aid);
        if (!trans_a) {
          // dA (m x k) = dC * op(B)^T
          gemm(false, !trans_b, m, k, n, gy.data(), vb.data(), 1.0, ga.data());
        } else if (!trans_b) {
          // dA (k x m) = B * dC^T
          gemm(false, true, k, m, n, vb.data(), gy.data(), 1.0, ga.data());
        } else {
          // dA (k x m) = B^T * dC^T
          gemm(true, true, k, m, n, vb.data(), gy.data(), 1.0, ga.data());
        }
      }
      if (nodes_[static_cast<size_t>(bid)].needs_grad) {
        std::vector<double>& gb = grad_buf(bid);
        if (!trans_b) {
          // dB (k x n) = op(A)^T * dC
          gemm(!trans_a, false, k, n, m, va.data(), gy.data(), 1.0, gb.data());
        } else if (!trans_a) {
          // dB (n x k) = dC^T * A
          gemm(true, false, n, k, m, gy.data(), va.data(), 1.0, gb.data());
        } else {
          // dB (n x k) = dC^T * A^T
          gemm(true, true, n, k, m, gy.data(), va.data(), 1.0, gb.data());
        }
      }
    };
  }
  return Var{this, id};
}

Var Graph::dynamic_linear(Var h, Var filters, int m_out) {
  check_same_graph(h);
  check_same_graph(filters);
  const Tensor& th = value(h);
  const Tensor& tf = value(filters);
  require_rank2(th, "dynamic_linear");
  require_rank2(tf, "dynamic_linear");
  const int rows = th.rows(), c = th.cols();
  if (tf.rows() != rows || tf.cols() != c * m_out) {
    throw DimensionError("dynamic_linear: filters must be " + std::to_string(rows) + "x" +
                         std::to_string(c * m_out) + ", got " + shape_str(tf.shape()));
  }
  Tensor out({rows, m_out});
  for (int r = 0; r < rows; ++r) {
    const double* hr = th.data() + static_cast<size_t>(r) * c;
    const double* fr = tf.data() + static_cast<size_t>(r) * c * m_out;
    double* orow = out.data() + static_cast<size_t>(r) * m_out;
    for (int ci = 0; ci < c; ++ci) {
      const double hv = hr[ci];
      const double* f = fr + static_cast<size_t>(ci) * m_out;
      for (int mo = 0; mo < m_out; ++mo) orow[mo] += hv * f[mo];
    }
  }
  bool ng = nodes_[h.id].needs_grad || nodes_[filters.id].needs_grad;
  int hid = h.id, fid = filters.id;
  int id = push(std::move(out), ng, nullptr, "dynamic_linear");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, hid, fid, rows, c, m_out]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      const Tensor& vh = nodes_[static_cast<size_t>(hid)].value;
      const Tensor& vf = nodes_[static_cast<size_t>(fid)].value;
      const bool need_h = nodes_[static_cast<size_t>(hid)].needs_grad;
      const bool need_f = nodes_[static_cast<size_t>(fid)].needs_grad;
      std::vector<double>* gh = need_h ? &grad_buf(hid) : nullptr;
      std::vector<double>* gf = need_f ? &grad_buf(fid) : nullptr;
      for (int r = 0; r < rows; ++r) {
        const double* gyr = gy.data() + static_cast<size_t>(r) * m_out;
        const double* hr = vh.data() + static_cast<size_t>(r) * c;
        const double* fr = vf.data() + static_cast<size_t>(r) * c * m_out;
        for (int ci = 0; ci < c; ++ci) {
          const double* f = fr + static_cast<size_t>(ci) * m_out;
          double acc = 0.0;
          for (int mo = 0; mo < m_out; ++mo) acc += gyr[mo] * f[mo];
          if (need_h) (*gh)[static_cast<size_t>(r) * c + ci] += acc;
          if (need_f) {
            double* gfp = gf->data() + static_cast<size_t>(r) * c * m_out + static_cast<size_t>(ci) * m_out;
            const double hv = hr[ci];
            for (int mo = 0; mo < m_out; ++mo) gfp[mo] += hv * gyr[mo];
          }
        }
      }
    };
  }
  return Var{this, id};
}

// ---------------------------------------------------------------------------
// Structure ops

Var Graph::reshape(Var a, Shape shape) {
  check_same_graph(a);
  const Tensor& ta = value(a);
  if (numel(shape) != ta.size()) {
    throw DimensionError("reshape " + shape_str(ta.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
  }
  Tensor out(std::move(shape), ta.vec());
  bool ng = nodes_[a.id].needs_grad;
  int aid = a.id;
  int id = push(std::move(out), ng, nullptr, "reshape");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      std::vector<double>& ga = grad_buf(aid);
      for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    };
  }
  return Var{this, id};
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  int cols = -1, rows = 0;
  bool ng = false;
  for (Var p : parts) {
    check_same_graph(p);
    const Tensor& t = value(p);
    require_rank2(t, "concat_rows");
    if (cols < 0) cols = t.cols();
    if (t.cols() != cols) throw DimensionError("concat_rows: column mismatch");
    rows += t.rows();
    ng = ng || nodes_[p.id].needs_grad;
  }
  Tensor out({rows, cols});
  double* dst = out.data();
  for (Var p : parts) {
    const Tensor& t = value(p);
    std::memcpy(dst, t.data(), static_cast<size_t>(t.size()) * sizeof(double));
    dst += t.size();
  }
  std::vector<int> ids;
  for (Var p : parts) ids.push_back(p.id);
  int id = push(std::move(out), ng, nullptr, "concat_rows");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, ids]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      size_t off = 0;
      for (int pid : ids) {
        Node& pn = nodes_[static_cast<size_t>(pid)];
        const size_t n = static_cast<size_t>(pn.value.size());
        if (pn.needs_grad) {
          std::vector<double>& gp = grad_buf(pid);
          for (size_t i = 0; i < n; ++i) gp[i] += gy[off + i];
        }
        off += n;
      }
    };
  }
  return Var{this, id};
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  int rows = -1, cols = 0;
  bool ng = false;
  for (Var p : parts) {
    check_same_graph(p);
    const Tensor& t = value(p);
    require_rank2(t, "concat_cols");
    if (rows < 0) rows = t.rows();
    if (t.rows() != rows) throw DimensionError("concat_cols: row mismatch");
    cols += t.cols();
    ng = ng || nodes_[p.id].needs_grad;
  }
  Tensor out({rows, cols});
  int off = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    const int pc = t.cols();
    for (int r = 0; r < rows; ++r) {
      std::memcpy(out.data() + static_cast<size_t>(r) * cols + off,
                  t.data() + static_cast<size_t>(r) * pc, static_cast<size_t>(pc) * sizeof(double));
    }
    off += pc;
  }
  std::vector<int> ids;
  for (Var p : parts) ids.push_back(p.id);
  int id = push(std::move(out), ng, nullptr, "concat_cols");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, ids, rows, cols]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      int off2 = 0;
      for (int pid : ids) {
        Node& pn = nodes_[static_cast<size_t>(pid)];
        const int pc = pn.value.cols();
        if (pn.needs_grad) {
          std::vector<double>& gp = grad_buf(pid);
          for (int r = 0; r < rows; ++r) {
            const double* g = gy.data() + static_cast<size_t>(r) * cols + off2;
            double* dst2 = gp.data() + static_cast<size_t>(r) * pc;
            for (int j = 0; j < pc; ++j) dst2[j] += g[j];
          }
        }
        off2 += pc;
      }
    };
  }
  return Var{this, id};
}

Var Graph::slice_cols(Var a, int begin, int count) {
  check_same_graph(a);
  const Tensor& ta = value(a);
  require_rank2(ta, "slice_cols");
  if (begin < 0 || count < 0 || begin + count > ta.cols()) {
    throw DimensionError("slice_cols out of range");
  }
  const int rows = ta.rows(), cols = ta.cols();
  Tensor out({rows, count});
  for (int r = 0; r < rows; ++r) {
    std::memcpy(out.data() + static_cast<size_t>(r) * count,
                ta.data() + static_cast<size_t>(r) * cols + begin,
                static_cast<size_t>(count) * sizeof(double));
  }
  bool ng = nodes_[a.id].needs_grad;
  int aid = a.id;
  int id = push(std::move(out), ng, nullptr, "slice_cols");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid, begin, count, rows, cols]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      std::vector<double>& ga = grad_buf(aid);
      for (int r = 0; r < rows; ++r) {
        const double* g = gy.data() + static_cast<size_t>(r) * count;
        double* dst = ga.data() + static_cast<size_t>(r) * cols + begin;
        for (int j = 0; j < count; ++j) dst[j] += g[j];
      }
    };
  }
  return Var{this, id};
}

Var Graph::pick_rows(Var a, std::vector<int> row_index) {
  check_same_graph(a);
  const Tensor& ta = value(a);
  require_rank2(ta, "pick_rows");
  const int rows = ta.rows(), cols = ta.cols();
  for (int r : row_index) {
    if (r < 0 || r >= rows) throw DimensionError("pick_rows index out of range");
  }
  Tensor out({static_cast<int>(row_index.size()), cols});
  for (size_t i = 0; i < row_index.size(); ++i) {
    std::memcpy(out.data() + i * cols, ta.data() + static_cast<size_t>(row_index[i]) * cols,
                static_cast<size_t>(cols) * sizeof(double));
  }
  bool ng = nodes_[a.id].needs_grad;
  int aid = a.id;
  int id = push(std::move(out), ng, nullptr, "pick_rows");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid, row_index, cols]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      std::vector<double>& ga = grad_buf(aid);
      for (size_t i = 0; i < row_index.size(); ++i) {
        const double* g = gy.data() + i * cols;
        double* dst = ga.data() + static_cast<size_t>(row_index[i]) * cols;
        for (int j = 0; j < cols; ++j) dst[j] += g[j];
      }
    };
  }
  return Var{this, id};
}

Var Graph::gather(Var src, Shape out_shape, std::vector<int64_t> flat_index) {
  check_same_graph(src);
  const Tensor& ts = value(src);
  if (static_cast<int64_t>(flat_index.size()) != numel(out_shape)) {
    throw DimensionError("gather: index count does not match output shape");
  }
  for (int64_t ix : flat_index) {
    if (ix >= ts.size()) throw DimensionError("gather index out of range");
  }
  Tensor out(std::move(out_shape));
  for (size_t i = 0; i < flat_index.size(); ++i) {
    out.data()[i] = flat_index[i] < 0 ? 0.0 : ts.data()[flat_index[i]];
  }
  bool ng = nodes_[src.id].needs_grad;
  int sid = src.id;
  int id = push(std::move(out), ng, nullptr, "gather");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, sid, flat_index]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      std::vector<double>& gs = grad_buf(sid);
      for (size_t i = 0; i < flat_index.size(); ++i) {
        if (flat_index[i] >= 0) gs[static_cast<size_t>(flat_index[i])] += gy[i];
      }
    };
  }
  return Var{this, id};
}

// ---------------------------------------------------------------------------
// Reductions / normalization

Var Graph::sum(Var a) {
  check_same_graph(a);
  const Tensor& ta = value(a);
  double s = 0.0;
  for (int64_t i = 0; i < ta.size(); ++i) s += ta.data()[i];
  bool ng = nodes_[a.id].needs_grad;
  int aid = a.id;
  int id = push(Tensor({1, 1}, {s}), ng, nullptr, "sum");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid]() {
      const double g = nodes_[static_cast<size_t>(id)].grad[0];
      std::vector<double>& ga = grad_buf(aid);
      for (double& v : ga) v += g;
    };
  }
  return Var{this, id};
}

Var Graph::mean(Var a) {
  const Tensor& ta = value(a);
  if (ta.size() == 0) throw DimensionError("mean of empty tensor");
  return affine(sum(a), 1.0 / static_cast<double>(ta.size()), 0.0);
}

Var Graph::row_softmax(Var a, const AttentionMask* mask) {
  check_same_graph(a);
  const Tensor& ta = value(a);
  require_rank2(ta, "row_softmax");
  const int rows = ta.rows(), cols = ta.cols();
  if (mask != nullptr) {
    if (mask->rows() != rows || mask->cols() != cols) {
      throw DimensionError("row_softmax mask is " + std::to_string(mask->rows()) + "x" +
                           std::to_string(mask->cols()) + ", scores are " + std::to_string(rows) +
                           "x" + std::to_string(cols));
    }
    mask->validate_rows();
  }
  Tensor out({rows, cols});
  for (int r = 0; r < rows; ++r) {
    const double* x = ta.data() + static_cast<size_t>(r) * cols;
    double* y = out.data() + static_cast<size_t>(r) * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < cols; ++j) {
      const double v = x[j] + (mask ? mask->additive(r, j) : 0.0);
      if (v > mx) mx = v;
    }
    double s = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double v = x[j] + (mask ? mask->additive(r, j) : 0.0);
      y[j] = std::exp(v - mx);
      s += y[j];
    }
    const double inv = 1.0 / s;
    for (int j = 0; j < cols; ++j) y[j] *= inv;
    if (mask) {
      // Blocked positions must carry exactly zero weight.
      for (int j = 0; j < cols; ++j) {
        if (!mask->is_allowed(r, j) && y[j] != 0.0) {
          throw NumericError("masked softmax produced nonzero weight at a blocked position");
        }
      }
    }
  }
  bool ng = nodes_[a.id].needs_grad;
  int aid = a.id;
  int id = push(std::move(out), ng, nullptr, "row_softmax");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, aid, rows, cols]() {
      Node& self = nodes_[static_cast<size_t>(id)];
      const std::vector<double>& gy = self.grad;
      std::vector<double>& ga = grad_buf(aid);
      for (int r = 0; r < rows; ++r) {
        const double* y = self.value.data() + static_cast<size_t>(r) * cols;
        const double* g = gy.data() + static_cast<size_t>(r) * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += y[j] * g[j];
        double* d = ga.data() + static_cast<size_t>(r) * cols;
        for (int j = 0; j < cols; ++j) d[j] += y[j] * (g[j] - dot);
      }
    };
  }
  return Var{this, id};
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
  check_same_graph(x);
  check_same_graph(gamma);
  check_same_graph(beta);
  const Tensor& tx = value(x);
  const Tensor& tg = value(gamma);
  const Tensor& tb = value(beta);
  require_rank2(tx, "layer_norm");
  const int rows = tx.rows(), cols = tx.cols();
  if (tg.rank() != 2 || tg.rows() != 1 || tg.cols() != cols || tb.rank() != 2 || tb.rows() != 1 ||
      tb.cols() != cols) {
    throw DimensionError("layer_norm scale/shift must be 1x" + std::to_string(cols));
  }
  Tensor out({rows, cols});
  std::vector<double> inv_std(static_cast<size_t>(rows));
  std::vector<double> means(static_cast<size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const double* xr = tx.data() + static_cast<size_t>(r) * cols;
    double m = 0.0;
    for (int j = 0; j < cols; ++j) m += xr[j];
    m /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = xr[j] - m;
      var += d * d;
    }
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    means[static_cast<size_t>(r)] = m;
    inv_std[static_cast<size_t>(r)] = inv;
    double* y = out.data() + static_cast<size_t>(r) * cols;
    for (int j = 0; j < cols; ++j) y[j] = (xr[j] - m) * inv * tg.data()[j] + tb.data()[j];
  }
  bool ng = nodes_[x.id].needs_grad || nodes_[gamma.id].needs_grad || nodes_[beta.id].needs_grad;
  int xid = x.id, gid = gamma.id, bid = beta.id;
  int id = push(std::move(out), ng, nullptr, "layer_norm");
  if (ng) {
    nodes_[static_cast<size_t>(id)].backward = [this, id, xid, gid, bid, rows, cols, means, inv_std]() {
      const std::vector<double>& gy = nodes_[static_cast<size_t>(id)].grad;
      const Tensor& vx = nodes_[static_cast<size_t>(xid)].value;
      const Tensor& vg = nodes_[static_cast<size_t>(gid)].value;
      const bool need_x = nodes_[static_cast<size_t>(xid)].needs_grad;
      const bool need_g = nodes_[static_cast<size_t>(gid)].needs_grad;
      const bool need_b = nodes_[static_cast<size_t>(bid)].needs_grad;
      std::vector<double>* gx = need_x ? &grad_buf(xid) : nullptr;
      std::vector<double>* gg = need_g ? &grad_buf(gid) : nullptr;
      std::vector<double>* gb = need_b ? &grad_buf(bid) : nullptr;
      for (int r = 0; r < rows; ++r) {
        const double* xr = vx.data() + static_cast<size_t>(r) * cols;
        const double* g = gy.data() + static_cast<size_t>(r) * cols;
        const double m = means[static_cast<size_t>(r)];
        const double inv = inv_std[static_cast<size_t>(r)];
        double mean_dyg = 0.0, mean_dyg_xhat = 0.0;
        for (int j = 0; j < cols; ++j) {
          const double xhat = (xr[j] - m) * inv;
          const double dyg = g[j] * vg.data()[j];
          mean_dyg += dyg;
          mean_dyg_xhat += dyg * xhat;
          if (need_g) (*gg)[static_cast<size_t>(j)] += g[j] * xhat;
          if (need_b) (*gb)[static_cast<size_t>(j)] += g[j];
        }
        mean_dyg /= cols;
        mean_dyg_xhat /= cols;
        if (need_x) {
          double* dx = gx->data() + static_cast<size_t>(r) * cols;
          for (int j = 0; j < cols; ++j) {
            const double xhat = (xr[j] - m) * inv;
            const double dyg = g[j] * vg.data()[j];
            dx[j] += inv * (dyg - mean_dyg - xhat * mean_dyg_xhat);
          }
        }
      }
    };
  }
  return Var{this, id};
}

}  // namespace destine::nn
