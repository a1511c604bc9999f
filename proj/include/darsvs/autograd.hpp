#pragma once

// Tape-based reverse-mode differentiation over coarse sequence-level ops.
// Each op computes its forward value eagerly and records a closure that
// accumulates gradients into its inputs when Graph::backward runs.

#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "darsvs/tensor.hpp"

namespace darsvs {

template <class Real>
class Graph;

template <class Real>
struct Var {
  Graph<Real>* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor<Real>& value() const { return graph->value(id); }
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
};

template <class Real>
class Graph {
 public:
  using Backward = std::function<void(Graph&, int)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<Real> constant(Tensor<Real> t) {
    Node n;
    n.value = std::move(t);
    return push(std::move(n));
  }

  Var<Real> input(Tensor<Real> t, bool requires_grad) {
    Node n;
    n.value = std::move(t);
    n.needs_grad = grad_enabled_ && requires_grad;
    return push(std::move(n));
  }

  Var<Real> param(Parameter<Real>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    Node n;
    n.external = &p.value;
    n.external_grad = &p.grad;
    n.needs_grad = grad_enabled_ && p.trainable;
    Var<Real> v = push(std::move(n));
    param_nodes_[&p] = v.id;
    return v;
  }

  const Tensor<Real>& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external ? *n.external : n.value;
  }

  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  bool needs_grad(Var<Real> v) const { return v.valid() && needs_grad(v.id); }

  // Gradient buffer of a node, zero-initialised on first access.
  Tensor<Real>& grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    Tensor<Real>& g = n.external_grad ? *n.external_grad : n.grad;
    const Tensor<Real>& v = n.external ? *n.external : n.value;
    if (!g.same_shape(v)) g = Tensor<Real>(v.shape());
    n.has_grad = true;
    return g;
  }

  bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].has_grad; }

  Var<Real> record(Tensor<Real> value, std::initializer_list<Var<Real>> inputs, Backward bw) {
    return record(std::move(value), std::span<const Var<Real>>(inputs.begin(), inputs.size()), std::move(bw));
  }

  Var<Real> record(Tensor<Real> value, std::span<const Var<Real>> inputs, Backward bw) {
    Node n;
    n.value = std::move(value);
    if (grad_enabled_) {
      for (const auto& in : inputs)
        if (in.valid() && needs_grad(in.id)) n.needs_grad = true;
    }
    if (n.needs_grad) n.backward = std::move(bw);
    return push(std::move(n));
  }

  // Seeds d(root)/d(root) = 1 and runs every recorded closure in reverse order.
  void backward(Var<Real> root) {
    if (value(root.id).size() != 1) throw DimensionError("backward requires a scalar root");
    if (!needs_grad(root.id)) return;
    grad(root.id)[0] += Real(1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.needs_grad && n.has_grad && n.backward) n.backward(*this, i);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    const Tensor<Real>* external = nullptr;
    Tensor<Real>* external_grad = nullptr;
    bool needs_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  Var<Real> push(Node n) {
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Real>*, int> param_nodes_;
};

namespace ops {

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

template <class Real>
std::string dims(const Var<Real>& v) {
  return shape_string(v.value().shape());
}

template <class Real>
Real sigmoid(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  Real e = std::exp(x);
  return e / (Real(1) + e);
}

template <class Real>
Real softplus(Real x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace detail

// out[t] = x[t] * W + b
template <class Real>
Var<Real> affine(Var<Real> x, Var<Real> w, Var<Real> b = {}) {
  Graph<Real>& g = *x.graph;
  const auto& xv = x.value();
  const auto& wv = w.value();
  detail::require(wv.rank() == 2, "affine: weight must be rank 2, got " + detail::dims(w));
  detail::require(xv.cols() == wv.rows(),
                  "affine: input " + detail::dims(x) + " does not conform to weight " + detail::dims(w));
  Tensor<Real> out = Tensor<Real>::matrix(xv.rows(), wv.cols());
  out.mat().noalias() = xv.mat() * wv.mat();
  if (b.valid()) {
    detail::require(static_cast<int>(b.value().size()) == wv.cols(),
                    "affine: bias " + detail::dims(b) + " does not match weight " + detail::dims(w));
    out.mat().rowwise() += b.value().mat().row(0);
  }
  return g.record(std::move(out), {x, w, b}, [x, w, b](Graph<Real>& g, int self) {
    const auto gy = g.grad(self).mat();
    if (g.needs_grad(x)) g.grad(x.id).mat().noalias() += gy * w.value().mat().transpose();
    if (g.needs_grad(w)) g.grad(w.id).mat().noalias() += x.value().mat().transpose() * gy;
    if (g.needs_grad(b)) g.grad(b.id).mat().row(0) += gy.colwise().sum();
  });
}

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  detail::require(a.value().shape() == b.value().shape(),
                  "add: operand shapes " + detail::dims(a) + " and " + detail::dims(b) + " differ");
  Tensor<Real> out = a.value();
  out.mat() += b.value().mat();
  return a.graph->record(std::move(out), {a, b}, [a, b](Graph<Real>& g, int self) {
    const auto gy = g.grad(self).mat();
    if (g.needs_grad(a)) g.grad(a.id).mat() += gy;
    if (g.needs_grad(b)) g.grad(b.id).mat() += gy;
  });
}

template <class Real>
Var<Real> scale(Var<Real> x, Real s) {
  Tensor<Real> out = x.value();
  out.mat() *= s;
  return x.graph->record(std::move(out), {x}, [x, s](Graph<Real>& g, int self) {
    g.grad(x.id).mat() += s * g.grad(self).mat();
  });
}

template <class Real>
Var<Real> tanh(Var<Real> x) {
  Tensor<Real> out = x.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return x.graph->record(std::move(out), {x}, [x](Graph<Real>& g, int self) {
    const auto& y = g.value(self);
    const auto& gy = g.grad(self);
    auto& gx = g.grad(x.id);
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += gy[i] * (Real(1) - y[i] * y[i]);
  });
}

template <class Real>
Var<Real> sigmoid(Var<Real> x) {
  Tensor<Real> out = x.value();
  for (auto& v : out.values()) v = detail::sigmoid(v);
  return x.graph->record(std::move(out), {x}, [x](Graph<Real>& g, int self) {
    const auto& y = g.value(self);
    const auto& gy = g.grad(self);
    auto& gx = g.grad(x.id);
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += gy[i] * y[i] * (Real(1) - y[i]);
  });
}

template <class Real>
Var<Real> relu(Var<Real> x) {
  Tensor<Real> out = x.value();
  for (auto& v : out.values()) v = v > 0 ? v : Real(0);
  return x.graph->record(std::move(out), {x}, [x](Graph<Real>& g, int self) {
    const auto& y = g.value(self);
    const auto& gy = g.grad(self);
    auto& gx = g.grad(x.id);
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] > 0) gx[i] += gy[i];
  });
}

template <class Real>
Var<Real> concat_cols(const std::vector<Var<Real>>& parts) {
  detail::require(!parts.empty(), "concat_cols: no operands");
  const int rows = parts.front().rows();
  int cols = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == rows, "concat_cols: row counts differ (" + detail::dims(parts.front()) + " vs " +
                                          detail::dims(p) + ")");
    cols += p.cols();
  }
  Tensor<Real> out = Tensor<Real>::matrix(rows, cols);
  int offset = 0;
  for (const auto& p : parts) {
    out.mat().middleCols(offset, p.cols()) = p.value().mat();
    offset += p.cols();
  }
  return parts.front().graph->record(std::move(out), std::span<const Var<Real>>(parts),
                                     [parts](Graph<Real>& g, int self) {
                                       const auto gy = g.grad(self).mat();
                                       int offset = 0;
                                       for (const auto& p : parts) {
                                         if (g.needs_grad(p)) g.grad(p.id).mat() += gy.middleCols(offset, p.cols());
                                         offset += p.cols();
                                       }
                                     });
}

template <class Real>
Var<Real> concat_rows(const std::vector<Var<Real>>& parts) {
  detail::require(!parts.empty(), "concat_rows: no operands");
  const int cols = parts.front().cols();
  int rows = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == cols, "concat_rows: column counts differ (" + detail::dims(parts.front()) + " vs " +
                                          detail::dims(p) + ")");
    rows += p.rows();
  }
  Tensor<Real> out = Tensor<Real>::matrix(rows, cols);
  int offset = 0;
  for (const auto& p : parts) {
    out.mat().middleRows(offset, p.rows()) = p.value().mat();
    offset += p.rows();
  }
  return parts.front().graph->record(std::move(out), std::span<const Var<Real>>(parts),
                                     [parts](Graph<Real>& g, int self) {
                                       const auto gy = g.grad(self).mat();
                                       int offset = 0;
                                       for (const auto& p : parts) {
                                         if (g.needs_grad(p)) g.grad(p.id).mat() += gy.middleRows(offset, p.rows());
                                         offset += p.rows();
                                       }
                                     });
}

// out[i] = x[indices[i]]; gradients scatter-add back. Doubles as embedding lookup.
template <class Real>
Var<Real> gather_rows(Var<Real> x, std::vector<int> indices) {
  const auto& xv = x.value();
  const int cols = xv.cols();
  Tensor<Real> out = Tensor<Real>::matrix(static_cast<int>(indices.size()), cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int r = indices[i];
    detail::require(r >= 0 && r < xv.rows(), "gather_rows: index " + std::to_string(r) + " out of range for " +
                                                 detail::dims(x));
    out.mat().row(static_cast<Eigen::Index>(i)) = xv.mat().row(r);
  }
  return x.graph->record(std::move(out), {x}, [x, idx = std::move(indices)](Graph<Real>& g, int self) {
    const auto gy = g.grad(self).mat();
    auto gx = g.grad(x.id).mat();
    for (std::size_t i = 0; i < idx.size(); ++i) gx.row(idx[i]) += gy.row(static_cast<Eigen::Index>(i));
  });
}

template <class Real>
Var<Real> embedding(Var<Real> table, std::vector<int> indices) {
  return gather_rows(table, std::move(indices));
}

template <class Real>
Var<Real> reshape(Var<Real> x, std::vector<int> shape) {
  Tensor<Real> out = x.value();
  out.reshape(std::move(shape));
  return x.graph->record(std::move(out), {x}, [x](Graph<Real>& g, int self) {
    const auto& gy = g.grad(self);
    auto& gx = g.grad(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

// Multiplies elementwise by a fixed mask (no gradient through the mask).
template <class Real>
Var<Real> apply_mask(Var<Real> x, Tensor<Real> mask) {
  detail::require(mask.size() == x.value().size(), "apply_mask: mask size differs from " + detail::dims(x));
  Tensor<Real> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return x.graph->record(std::move(out), {x}, [x, m = std::move(mask)](Graph<Real>& g, int self) {
    const auto& gy = g.grad(self);
    auto& gx = g.grad(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * m[i];
  });
}

// Inverted dropout: kept units are scaled by 1/(1-p).
template <class Real>
Var<Real> dropout(Var<Real> x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw DomainError("dropout: rate must be < 1 for inverted dropout");
  std::bernoulli_distribution keep(1.0 - p);
  const Real s = static_cast<Real>(1.0 / (1.0 - p));
  Tensor<Real> mask(x.value().shape());
  for (auto& m : mask.values()) m = keep(rng) ? s : Real(0);
  return apply_mask(x, std::move(mask));
}

// Zeroes whole column blocks of width `block` per row. Kept blocks are scaled
// by 1/(1-p) so inference sees the same expected drive without rescaling.
template <class Real>
Var<Real> block_dropout(Var<Real> x, int block, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  const int rows = x.rows();
  const int cols = x.cols();
  detail::require(block > 0 && cols % block == 0,
                  "block_dropout: block width " + std::to_string(block) + " does not divide " + detail::dims(x));
  std::bernoulli_distribution drop(std::min(p, 1.0));
  const Real keep = p < 1.0 ? static_cast<Real>(1.0 / (1.0 - p)) : Real(0);
  Tensor<Real> mask(x.value().shape(), keep);
  for (int r = 0; r < rows; ++r)
    for (int b = 0; b < cols / block; ++b)
      if (drop(rng))
        for (int c = 0; c < block; ++c) mask.at(r, b * block + c) = Real(0);
  return apply_mask(x, std::move(mask));
}

template <class Real>
struct GruVars {
  Var<Real> w_z, w_r, w_h;  // input weights [D x H]
  Var<Real> u_z, u_r, u_h;  // recurrent weights [H x H]
  Var<Real> b_z, b_r, b_h;  // biases [H]
};

// GRU over a [T x D] sequence:
//   z = sig(x Wz + h Uz + bz), r = sig(x Wr + h Ur + br)
//   n = tanh(x Wh + (r*h) Uh + bh), h' = (1-z)*h + z*n
// `reverse` consumes frames T-1..0 and writes each output at its own frame index.
template <class Real>
Var<Real> gru(Var<Real> x, const GruVars<Real>& p, bool reverse, Var<Real> h0 = {}) {
  using Mat = RowMatrix<Real>;
  using RowVec = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
  Graph<Real>& g = *x.graph;
  const auto& xv = x.value();
  const int T = xv.rows();
  const int H = p.u_z.value().rows();
  detail::require(T >= 1, "gru: empty sequence");
  for (const auto* w : {&p.w_z, &p.w_r, &p.w_h})
    detail::require(w->value().rank() == 2 && w->value().rows() == xv.cols() && w->value().cols() == H,
                    "gru: input weight " + detail::dims(*w) + " does not conform to input " + detail::dims(x));
  for (const auto* u : {&p.u_z, &p.u_r, &p.u_h})
    detail::require(u->value().rows() == H && u->value().cols() == H, "gru: recurrent weight " + detail::dims(*u));
  for (const auto* b : {&p.b_z, &p.b_r, &p.b_h})
    detail::require(static_cast<int>(b->value().size()) == H, "gru: bias " + detail::dims(*b));
  RowVec h_init = RowVec::Zero(H);
  if (h0.valid()) {
    detail::require(static_cast<int>(h0.value().size()) == H, "gru: initial state " + detail::dims(h0));
    h_init = h0.value().mat().row(0);
  }

  Mat az = xv.mat() * p.w_z.value().mat();
  Mat ar = xv.mat() * p.w_r.value().mat();
  Mat an = xv.mat() * p.w_h.value().mat();
  az.rowwise() += p.b_z.value().mat().row(0);
  ar.rowwise() += p.b_r.value().mat().row(0);
  an.rowwise() += p.b_h.value().mat().row(0);

  const auto uz = p.u_z.value().mat();
  const auto ur = p.u_r.value().mat();
  const auto uh = p.u_h.value().mat();

  Mat z(T, H), r(T, H), n(T, H), hprev(T, H);
  Tensor<Real> out = Tensor<Real>::matrix(T, H);
  auto om = out.mat();
  RowVec h = h_init;
  for (int s = 0; s < T; ++s) {
    const int t = reverse ? T - 1 - s : s;
    hprev.row(t) = h;
    RowVec zt = az.row(t) + h * uz;
    RowVec rt = ar.row(t) + h * ur;
    for (int j = 0; j < H; ++j) {
      zt[j] = detail::sigmoid(zt[j]);
      rt[j] = detail::sigmoid(rt[j]);
    }
    RowVec nt = an.row(t) + rt.cwiseProduct(h) * uh;
    for (int j = 0; j < H; ++j) nt[j] = std::tanh(nt[j]);
    h = (RowVec::Ones(H) - zt).cwiseProduct(h) + zt.cwiseProduct(nt);
    z.row(t) = zt;
    r.row(t) = rt;
    n.row(t) = nt;
    om.row(t) = h;
  }

  return g.record(std::move(out), {x, p.w_z, p.w_r, p.w_h, p.u_z, p.u_r, p.u_h, p.b_z, p.b_r, p.b_h, h0},
                  [x, p, reverse, h0, z = std::move(z), r = std::move(r), n = std::move(n),
                   hprev = std::move(hprev)](Graph<Real>& g, int self) {
                    const int T = static_cast<int>(z.rows());
                    const int H = static_cast<int>(z.cols());
                    const auto gy = g.grad(self).mat();
                    const auto uz = p.u_z.value().mat();
                    const auto ur = p.u_r.value().mat();
                    const auto uh = p.u_h.value().mat();
                    Mat daz(T, H), dar(T, H), dan(T, H);
                    RowVec carry = RowVec::Zero(H);
                    for (int s = T - 1; s >= 0; --s) {
                      const int t = reverse ? T - 1 - s : s;
                      const RowVec dh = gy.row(t) + carry;
                      const auto zt = z.row(t);
                      const auto rt = r.row(t);
                      const auto nt = n.row(t);
                      const auto hp = hprev.row(t);
                      RowVec dn = dh.cwiseProduct(zt);
                      RowVec dz = dh.cwiseProduct(nt - hp);
                      RowVec dhp = dh.cwiseProduct(RowVec::Ones(H) - zt);
                      RowVec a_n = dn.cwiseProduct(RowVec::Ones(H) - nt.cwiseProduct(nt));
                      RowVec a_z = dz.cwiseProduct(zt.cwiseProduct(RowVec::Ones(H) - zt));
                      RowVec drh = a_n * uh.transpose();
                      RowVec a_r = drh.cwiseProduct(hp).cwiseProduct(rt.cwiseProduct(RowVec::Ones(H) - rt));
                      dhp += drh.cwiseProduct(rt);
                      dhp.noalias() += a_z * uz.transpose() + a_r * ur.transpose();
                      daz.row(t) = a_z;
                      dar.row(t) = a_r;
                      dan.row(t) = a_n;
                      carry = dhp;
                    }
                    const auto xm = x.value().mat();
                    if (g.needs_grad(x))
                      g.grad(x.id).mat().noalias() += daz * p.w_z.value().mat().transpose() +
                                                      dar * p.w_r.value().mat().transpose() +
                                                      dan * p.w_h.value().mat().transpose();
                    if (g.needs_grad(p.w_z)) g.grad(p.w_z.id).mat().noalias() += xm.transpose() * daz;
                    if (g.needs_grad(p.w_r)) g.grad(p.w_r.id).mat().noalias() += xm.transpose() * dar;
                    if (g.needs_grad(p.w_h)) g.grad(p.w_h.id).mat().noalias() += xm.transpose() * dan;
                    if (g.needs_grad(p.u_z)) g.grad(p.u_z.id).mat().noalias() += hprev.transpose() * daz;
                    if (g.needs_grad(p.u_r)) g.grad(p.u_r.id).mat().noalias() += hprev.transpose() * dar;
                    if (g.needs_grad(p.u_h))
                      g.grad(p.u_h.id).mat().noalias() += r.cwiseProduct(hprev).transpose() * dan;
                    if (g.needs_grad(p.b_z)) g.grad(p.b_z.id).mat().row(0) += daz.colwise().sum();
                    if (g.needs_grad(p.b_r)) g.grad(p.b_r.id).mat().row(0) += dar.colwise().sum();
                    if (g.needs_grad(p.b_h)) g.grad(p.b_h.id).mat().row(0) += dan.colwise().sum();
                    if (g.needs_grad(h0)) g.grad(h0.id).mat().row(0) += carry;
                  });
}

// Causal 1-D convolution applied independently to consecutive segments of
// `segment_len` rows: out[t] = sum_i x[t-k+1+i] * kernel[i] (+ bias), reading
// zeros before each segment start. kernel has shape [k x C_in x C_out].
template <class Real>
Var<Real> conv1d_causal(Var<Real> x, Var<Real> kernel, Var<Real> bias, int segment_len) {
  using Mat = RowMatrix<Real>;
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  detail::require(kv.rank() == 3, "conv1d: kernel must be [k x C_in x C_out], got " + detail::dims(kernel));
  const int k = kv.dim(0), cin = kv.dim(1), cout = kv.dim(2);
  const int N = xv.rows();
  detail::require(xv.cols() == cin, "conv1d: input " + detail::dims(x) + " does not match kernel " +
                                        detail::dims(kernel));
  detail::require(segment_len > 0 && N % segment_len == 0,
                  "conv1d: segment length " + std::to_string(segment_len) + " does not divide " + detail::dims(x));
  auto tap = [&kv, cin, cout](int i) {
    return Eigen::Map<const Mat>(kv.data() + static_cast<std::size_t>(i) * cin * cout, cin, cout);
  };
  Tensor<Real> out = Tensor<Real>::matrix(N, cout);
  auto om = out.mat();
  for (int i = 0; i < k; ++i) {
    const int shift = k - 1 - i;
    Mat y = xv.mat() * tap(i);
    for (int row = 0; row < N; ++row)
      if (row % segment_len >= shift) om.row(row) += y.row(row - shift);
  }
  if (bias.valid()) {
    detail::require(static_cast<int>(bias.value().size()) == cout, "conv1d: bias " + detail::dims(bias));
    om.rowwise() += bias.value().mat().row(0);
  }
  return x.graph->record(std::move(out), {x, kernel, bias},
                         [x, kernel, bias, segment_len](Graph<Real>& g, int self) {
                           const auto& kv = kernel.value();
                           const int k = kv.dim(0), cin = kv.dim(1), cout = kv.dim(2);
                           const auto gy = g.grad(self).mat();
                           const int N = static_cast<int>(gy.rows());
                           for (int i = 0; i < k; ++i) {
                             const int shift = k - 1 - i;
                             Mat gshift = Mat::Zero(N, cout);
                             for (int row = 0; row < N; ++row)
                               if (row % segment_len >= shift) gshift.row(row - shift) = gy.row(row);
                             if (g.needs_grad(x)) {
                               Eigen::Map<const Mat> w(kv.data() + static_cast<std::size_t>(i) * cin * cout, cin, cout);
                               g.grad(x.id).mat().noalias() += gshift * w.transpose();
                             }
                             if (g.needs_grad(kernel)) {
                               auto& gk = g.grad(kernel.id);
                               Eigen::Map<Mat> gw(gk.data() + static_cast<std::size_t>(i) * cin * cout, cin, cout);
                               gw.noalias() += x.value().mat().transpose() * gshift;
                             }
                           }
                           if (g.needs_grad(bias)) g.grad(bias.id).mat().row(0) += gy.colwise().sum();
                         });
}

template <class Real>
struct BatchNormState {
  Parameter<Real>* running_mean = nullptr;
  Parameter<Real>* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel normalisation over rows. Training mode uses batch statistics and
// updates the running estimates; inference mode uses the stored estimates.
template <class Real>
Var<Real> batch_norm(Var<Real> x, Var<Real> gamma, Var<Real> beta, const BatchNormState<Real>& state, bool training) {
  const auto& xv = x.value();
  const int N = xv.rows(), C = xv.cols();
  detail::require(static_cast<int>(gamma.value().size()) == C && static_cast<int>(beta.value().size()) == C,
                  "batch_norm: scale/shift do not match " + detail::dims(x));
  std::vector<Real> mean(static_cast<std::size_t>(C)), inv_std(static_cast<std::size_t>(C));
  if (training) {
    if (N < 2) throw DomainError("batch_norm: training mode needs at least 2 rows");
    for (int c = 0; c < C; ++c) {
      double m = 0, v = 0;
      for (int r = 0; r < N; ++r) m += xv.at(r, c);
      m /= N;
      for (int r = 0; r < N; ++r) v += (xv.at(r, c) - m) * (xv.at(r, c) - m);
      v /= N;
      mean[c] = static_cast<Real>(m);
      inv_std[c] = static_cast<Real>(1.0 / std::sqrt(v + state.eps));
      if (state.running_mean && state.running_var) {
        auto& rm = state.running_mean->value[static_cast<std::size_t>(c)];
        auto& rv = state.running_var->value[static_cast<std::size_t>(c)];
        rm = static_cast<Real>((1 - state.momentum) * rm + state.momentum * m);
        rv = static_cast<Real>((1 - state.momentum) * rv + state.momentum * v * N / (N - 1));
      }
    }
  } else {
    detail::require(state.running_mean && state.running_var, "batch_norm: inference needs running statistics");
    for (int c = 0; c < C; ++c) {
      mean[c] = state.running_mean->value[static_cast<std::size_t>(c)];
      inv_std[c] = static_cast<Real>(1.0 / std::sqrt(double(state.running_var->value[static_cast<std::size_t>(c)]) +
                                                     state.eps));
    }
  }
  Tensor<Real> xhat = Tensor<Real>::matrix(N, C);
  Tensor<Real> out = Tensor<Real>::matrix(N, C);
  for (int r = 0; r < N; ++r)
    for (int c = 0; c < C; ++c) {
      xhat.at(r, c) = (xv.at(r, c) - mean[c]) * inv_std[c];
      out.at(r, c) = gamma.value()[c] * xhat.at(r, c) + beta.value()[c];
    }
  return x.graph->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<Real>& g, int self) {
        const auto& gy = g.grad(self);
        const int N = gy.rows(), C = gy.cols();
        for (int c = 0; c < C; ++c) {
          Real sum_g = 0, sum_gx = 0;
          for (int r = 0; r < N; ++r) {
            sum_g += gy.at(r, c);
            sum_gx += gy.at(r, c) * xhat.at(r, c);
          }
          if (g.needs_grad(gamma)) g.grad(gamma.id)[c] += sum_gx;
          if (g.needs_grad(beta)) g.grad(beta.id)[c] += sum_g;
          if (!g.needs_grad(x)) continue;
          auto& gx = g.grad(x.id);
          const Real gm = gamma.value()[c];
          if (training) {
            for (int r = 0; r < N; ++r)
              gx.at(r, c) += gm * inv_std[c] / N * (N * gy.at(r, c) - sum_g - xhat.at(r, c) * sum_gx);
          } else {
            for (int r = 0; r < N; ++r) gx.at(r, c) += gm * inv_std[c] * gy.at(r, c);
          }
        }
      });
}

// Additive mask with -inf strictly above the diagonal.
template <class Real>
Tensor<Real> causal_mask(int length) {
  if (length < 1) throw DimensionError("causal_mask: length must be >= 1");
  Tensor<Real> m = Tensor<Real>::matrix(length, length);
  for (int i = 0; i < length; ++i)
    for (int j = i + 1; j < length; ++j) m.at(i, j) = -std::numeric_limits<Real>::infinity();
  return m;
}

// softmax(Q K^T / sqrt(d_k) + mask) V per head, applied independently to each
// consecutive group of `group_len` rows. Heads split the columns evenly.
template <class Real>
Var<Real> scaled_dot_attention(Var<Real> q, Var<Real> k, Var<Real> v, const Tensor<Real>& mask, int heads,
                               int group_len) {
  using Mat = RowMatrix<Real>;
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  const int N = qv.rows();
  detail::require(kv.rows() == N && vv.rows() == N && qv.cols() == kv.cols(),
                  "attention: Q " + detail::dims(q) + ", K " + detail::dims(k) + ", V " + detail::dims(v) +
                      " do not conform");
  detail::require(heads >= 1 && qv.cols() % heads == 0 && vv.cols() % heads == 0,
                  "attention: " + std::to_string(heads) + " heads do not divide the projection width");
  detail::require(group_len >= 1 && N % group_len == 0, "attention: group length does not divide row count");
  detail::require(mask.empty() || (mask.rows() == group_len && mask.cols() == group_len),
                  "attention: mask " + shape_string(mask.shape()) + " does not match group length " +
                      std::to_string(group_len));
  const int L = group_len;
  const int dk = qv.cols() / heads;
  const int dv = vv.cols() / heads;
  const Real inv_scale = Real(1) / std::sqrt(static_cast<Real>(dk));
  const int groups = N / L;

  // probabilities stored as [groups*heads] blocks of L x L
  std::vector<Mat> probs(static_cast<std::size_t>(groups * heads));
  Tensor<Real> out = Tensor<Real>::matrix(N, vv.cols());
  for (int b = 0; b < groups; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto qh = qv.mat().block(b * L, h * dk, L, dk);
      auto kh = kv.mat().block(b * L, h * dk, L, dk);
      auto vh = vv.mat().block(b * L, h * dv, L, dv);
      Mat s = (qh * kh.transpose()) * inv_scale;
      for (int i = 0; i < L; ++i) {
        Real mx = -std::numeric_limits<Real>::infinity();
        for (int j = 0; j < L; ++j) {
          if (!mask.empty()) s(i, j) += mask.at(i, j);
          mx = std::max(mx, s(i, j));
        }
        if (!std::isfinite(mx)) throw DomainError("attention: row " + std::to_string(i) + " is fully masked");
        Real denom = 0;
        for (int j = 0; j < L; ++j) {
          s(i, j) = std::isinf(s(i, j)) ? Real(0) : std::exp(s(i, j) - mx);
          denom += s(i, j);
        }
        s.row(i) /= denom;
      }
      out.mat().block(b * L, h * dv, L, dv).noalias() = s * vh;
      probs[static_cast<std::size_t>(b * heads + h)] = std::move(s);
    }
  }
  return q.graph->record(
      std::move(out), {q, k, v},
      [q, k, v, heads, L, dk, dv, inv_scale, probs = std::move(probs)](Graph<Real>& g, int self) {
        const auto gy = g.grad(self).mat();
        const int groups = static_cast<int>(gy.rows()) / L;
        const bool gq = g.needs_grad(q), gk = g.needs_grad(k), gv = g.needs_grad(v);
        for (int b = 0; b < groups; ++b) {
          for (int h = 0; h < heads; ++h) {
            const Mat& p = probs[static_cast<std::size_t>(b * heads + h)];
            auto qh = q.value().mat().block(b * L, h * dk, L, dk);
            auto kh = k.value().mat().block(b * L, h * dk, L, dk);
            auto vh = v.value().mat().block(b * L, h * dv, L, dv);
            auto go = gy.block(b * L, h * dv, L, dv);
            if (gv) g.grad(v.id).mat().block(b * L, h * dv, L, dv).noalias() += p.transpose() * go;
            if (!gq && !gk) continue;
            Mat dp = go * vh.transpose();
            Mat ds(L, L);
            for (int i = 0; i < L; ++i) {
              const Real dot = p.row(i).dot(dp.row(i));
              for (int j = 0; j < L; ++j) ds(i, j) = p(i, j) * (dp(i, j) - dot);
            }
            ds *= inv_scale;
            if (gq) g.grad(q.id).mat().block(b * L, h * dk, L, dk).noalias() += ds * kh;
            if (gk) g.grad(k.id).mat().block(b * L, h * dk, L, dk).noalias() += ds.transpose() * qh;
          }
        }
      });
}

template <class Real>
Var<Real> scaled_dot_attention(Var<Real> q, Var<Real> k, Var<Real> v, const Tensor<Real>& mask) {
  return scaled_dot_attention(q, k, v, mask, 1, q.rows());
}

// Two-level output: column 0 is the logit of P(class 0), columns 1.. are
// softmax logits over the remaining classes.
template <class Real>
std::vector<double> hsoftmax_posterior(std::span<const Real> logits) {
  if (logits.size() < 2) throw DimensionError("hsoftmax: need a gate logit and at least one class logit");
  std::vector<double> post(logits.size());
  const double gate = detail::sigmoid(static_cast<double>(logits[0]));
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double denom = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) denom += std::exp(static_cast<double>(logits[i]) - mx);
  post[0] = gate;
  for (std::size_t i = 1; i < logits.size(); ++i)
    post[i] = (1.0 - gate) * std::exp(static_cast<double>(logits[i]) - mx) / denom;
  return post;
}

// Mean negative log-likelihood of the two-level output over rows.
template <class Real>
Var<Real> hsoftmax_nll(Var<Real> logits, std::vector<int> targets) {
  const auto& lv = logits.value();
  const int T = lv.rows(), C = lv.cols();
  detail::require(static_cast<int>(targets.size()) == T,
                  "hsoftmax_nll: " + std::to_string(targets.size()) + " targets for " + detail::dims(logits));
  detail::require(C >= 2, "hsoftmax_nll: need at least 2 columns");
  Tensor<Real> dl = Tensor<Real>::matrix(T, C);
  double total = 0;
  for (int t = 0; t < T; ++t) {
    const int y = targets[static_cast<std::size_t>(t)];
    detail::require(y >= 0 && y < C, "hsoftmax_nll: target class " + std::to_string(y) + " out of range");
    const Real a = lv.at(t, 0);
    const Real gate = detail::sigmoid(a);
    if (y == 0) {
      total += detail::softplus(-a);
      dl.at(t, 0) = gate - Real(1);
      continue;
    }
    Real mx = -std::numeric_limits<Real>::infinity();
    for (int c = 1; c < C; ++c) mx = std::max(mx, lv.at(t, c));
    Real denom = 0;
    for (int c = 1; c < C; ++c) denom += std::exp(lv.at(t, c) - mx);
    const Real lse = mx + std::log(denom);
    total += detail::softplus(a) + (lse - lv.at(t, y));
    dl.at(t, 0) = gate;
    for (int c = 1; c < C; ++c) dl.at(t, c) = std::exp(lv.at(t, c) - lse);
    dl.at(t, y) -= Real(1);
  }
  dl.mat() /= static_cast<Real>(T);
  Tensor<Real> out({1}, static_cast<Real>(total / T));
  return logits.graph->record(std::move(out), {logits}, [logits, dl = std::move(dl)](Graph<Real>& g, int self) {
    g.grad(logits.id).mat() += g.grad(self)[0] * dl.mat();
  });
}

// Mean squared error against a fixed target.
template <class Real>
Var<Real> mse(Var<Real> pred, const Tensor<Real>& target) {
  detail::require(pred.value().size() == target.size(),
                  "mse: prediction " + detail::dims(pred) + " vs target " + shape_string(target.shape()));
  const auto& pv = pred.value();
  const std::size_t n = pv.size();
  Tensor<Real> diff(pv.shape());
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = pv[i] - target[i];
    total += double(diff[i]) * diff[i];
  }
  Tensor<Real> out({1}, static_cast<Real>(total / n));
  return pred.graph->record(std::move(out), {pred}, [pred, diff = std::move(diff)](Graph<Real>& g, int self) {
    const Real s = g.grad(self)[0] * Real(2) / static_cast<Real>(diff.size());
    auto& gp = g.grad(pred.id);
    for (std::size_t i = 0; i < diff.size(); ++i) gp[i] += s * diff[i];
  });
}

template <class Real>
Var<Real> weighted_sum(Var<Real> x, Tensor<Real> weights) {
  detail::require(weights.size() == x.value().size(), "weighted_sum: weights do not match " + detail::dims(x));
  double total = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) total += double(x.value()[i]) * weights[i];
  Tensor<Real> out({1}, static_cast<Real>(total));
  return x.graph->record(std::move(out), {x}, [x, w = std::move(weights)](Graph<Real>& g, int self) {
    const Real s = g.grad(self)[0];
    auto& gx = g.grad(x.id);
    for (std::size_t i = 0; i < w.size(); ++i) gx[i] += s * w[i];
  });
}

}  // namespace ops
}  // namespace darsvs
