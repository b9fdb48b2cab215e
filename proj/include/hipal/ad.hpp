// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// A BasicTape records every operation of one forward pass. Values are
// matrices; sequences are stored channel-major with one column per time
// step. Parameters live outside the tape and are registered as leaves; after
// backward() their gradients are read back with param_grad().
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hipal {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Real = double;
using Matrix = MatrixT<Real>;
using Vector = VectorT<Real>;

/// A trainable tensor together with its optimizer state.
template <typename Scalar>
struct BasicParameter {
  MatrixT<Scalar> value;
  MatrixT<Scalar> grad;
  MatrixT<Scalar> adam_m;
  MatrixT<Scalar> adam_v;

  BasicParameter() = default;
  explicit BasicParameter(MatrixT<Scalar> v) : value(std::move(v)) {}

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
  Eigen::Index size() const { return value.size(); }

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using Parameter = BasicParameter<Real>;

/// Name + pointer pair used to enumerate the parameters of a model.
struct NamedParameter {
  std::string name;
  Parameter* param;
};

namespace ad {

template <typename Scalar>
class BasicTape;

template <typename Scalar>
struct BasicVar {
  BasicTape<Scalar>* tape = nullptr;
  int id = -1;

  const MatrixT<Scalar>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar scalar() const { return value()(0, 0); }
};

template <typename Scalar>
class BasicTape {
 public:
  using Mat = MatrixT<Scalar>;
  using Var = BasicVar<Scalar>;
  using Backward = std::function<void(BasicTape&, int)>;

  Var constant(Mat v) { return push(std::move(v), {}, false); }

  /// Registers a parameter as a leaf; repeated calls return the same leaf.
  Var param(const BasicParameter<Scalar>& p) {
    auto it = leaves_.find(&p);
    if (it != leaves_.end()) return Var{this, it->second};
    Var v = push(p.value, {}, true);
    leaves_.emplace(&p, v.id);
    return v;
  }

  Var push(Mat value, Backward backward, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), Mat(), std::move(backward), needs_grad});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }
  const Mat& grad(int id) const { return nodes_[id].grad; }

  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Mutable gradient block for scatter-style accumulation.
  Mat& grad_ref(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void backward(Var root, Scalar seed = Scalar(1)) {
    if (root.value().size() != 1) throw std::logic_error("backward: root must be a scalar");
    grad_ref(root.id)(0, 0) += seed;
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, id);
    }
  }

  /// Gradient accumulated on a parameter leaf, or nullptr if the parameter
  /// did not take part in the pass.
  const Mat* param_grad(const BasicParameter<Scalar>& p) const {
    auto it = leaves_.find(&p);
    if (it == leaves_.end() || nodes_[it->second].grad.size() == 0) return nullptr;
    return &nodes_[it->second].grad;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward backward;
    bool needs_grad;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const BasicParameter<Scalar>*, int> leaves_;
};

using Tape = BasicTape<Real>;
using Var = BasicVar<Real>;

namespace detail {
template <typename Scalar>
bool any_grad(BasicTape<Scalar>& t, std::initializer_list<int> ids) {
  for (int id : ids)
    if (t.needs_grad(id)) return true;
  return false;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename S>
BasicVar<S> matmul(BasicVar<S> a, BasicVar<S> b) {
  auto& t = *a.tape;
  const int ia = a.id, ib = b.id;
  MatrixT<S> out = a.value() * b.value();
  return t.push(std::move(out),
                [ia, ib](BasicTape<S>& t, int self) {
                  const auto& g = t.grad(self);
                  if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
                  if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
                },
                detail::any_grad(t, {ia, ib}));
}

template <typename S>
BasicVar<S> add(BasicVar<S> a, BasicVar<S> b) {
  auto& t = *a.tape;
  const int ia = a.id, ib = b.id;
  return t.push(a.value() + b.value(),
                [ia, ib](BasicTape<S>& t, int self) {
                  t.accumulate(ia, t.grad(self));
                  t.accumulate(ib, t.grad(self));
                },
                detail::any_grad(t, {ia, ib}));
}

template <typename S>
BasicVar<S> sub(BasicVar<S> a, BasicVar<S> b) {
  auto& t = *a.tape;
  const int ia = a.id, ib = b.id;
  return t.push(a.value() - b.value(),
                [ia, ib](BasicTape<S>& t, int self) {
                  t.accumulate(ia, t.grad(self));
                  if (t.needs_grad(ib)) t.accumulate(ib, -t.grad(self));
                },
                detail::any_grad(t, {ia, ib}));
}

/// Element-wise product.
template <typename S>
BasicVar<S> mul(BasicVar<S> a, BasicVar<S> b) {
  auto& t = *a.tape;
  const int ia = a.id, ib = b.id;
  MatrixT<S> out = a.value().cwiseProduct(b.value());
  return t.push(std::move(out),
                [ia, ib](BasicTape<S>& t, int self) {
                  const auto& g = t.grad(self);
                  if (t.needs_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                  if (t.needs_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                },
                detail::any_grad(t, {ia, ib}));
}

template <typename S>
BasicVar<S> scale(BasicVar<S> a, S s) {
  auto& t = *a.tape;
  const int ia = a.id;
  return t.push(a.value() * s,
                [ia, s](BasicTape<S>& t, int self) { t.accumulate(ia, t.grad(self) * s); },
                t.needs_grad(ia));
}

/// x (r x T) plus a column vector b (r x 1) broadcast over columns.
template <typename S>
BasicVar<S> add_bias(BasicVar<S> x, BasicVar<S> b) {
  auto& t = *x.tape;
  const int ix = x.id, ib = b.id;
  MatrixT<S> out = x.value().colwise() + b.value().col(0);
  return t.push(std::move(out),
                [ix, ib](BasicTape<S>& t, int self) {
                  const auto& g = t.grad(self);
                  t.accumulate(ix, g);
                  if (t.needs_grad(ib)) t.accumulate(ib, g.rowwise().sum());
                },
                detail::any_grad(t, {ix, ib}));
}

// ---------------------------------------------------------------------------
// Element-wise nonlinearities
// ---------------------------------------------------------------------------

template <typename S>
BasicVar<S> tanh(BasicVar<S> x) {
  auto& t = *x.tape;
  const int ix = x.id;
  MatrixT<S> out = x.value().array().tanh().matrix();
  return t.push(std::move(out),
                [ix](BasicTape<S>& t, int self) {
                  const auto& y = t.value(self);
                  t.accumulate(ix, (t.grad(self).array() * (S(1) - y.array().square())).matrix());
                },
                t.needs_grad(ix));
}

template <typename S>
BasicVar<S> sigmoid(BasicVar<S> x) {
  auto& t = *x.tape;
  const int ix = x.id;
  MatrixT<S> out = (S(1) / (S(1) + (-x.value().array()).exp())).matrix();
  return t.push(std::move(out),
                [ix](BasicTape<S>& t, int self) {
                  const auto& y = t.value(self);
                  t.accumulate(ix, (t.grad(self).array() * y.array() * (S(1) - y.array())).matrix());
                },
                t.needs_grad(ix));
}

template <typename S>
BasicVar<S> relu(BasicVar<S> x) {
  auto& t = *x.tape;
  const int ix = x.id;
  MatrixT<S> out = x.value().cwiseMax(S(0));
  return t.push(std::move(out),
                [ix](BasicTape<S>& t, int self) {
                  const auto& xv = t.value(ix);
                  t.accumulate(ix, (xv.array() > S(0)).select(t.grad(self), S(0)));
                },
                t.needs_grad(ix));
}

template <typename S>
BasicVar<S> sin(BasicVar<S> x) {
  auto& t = *x.tape;
  const int ix = x.id;
  MatrixT<S> out = x.value().array().sin().matrix();
  return t.push(std::move(out),
                [ix](BasicTape<S>& t, int self) {
                  t.accumulate(ix, (t.grad(self).array() * t.value(ix).array().cos()).matrix());
                },
                t.needs_grad(ix));
}

/// Multiplies by a constant mask (dropout, padding masks).
template <typename S>
BasicVar<S> mask(BasicVar<S> x, MatrixT<S> m) {
  auto& t = *x.tape;
  const int ix = x.id;
  MatrixT<S> out = x.value().cwiseProduct(m);
  return t.push(std::move(out),
                [ix, m = std::move(m)](BasicTape<S>& t, int self) {
                  t.accumulate(ix, t.grad(self).cwiseProduct(m));
                },
                t.needs_grad(ix));
}

/// Inverted dropout; identity when rate is zero or the rng is null.
template <typename S, typename Rng>
BasicVar<S> dropout(BasicVar<S> x, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  MatrixT<S> m(x.rows(), x.cols());
  const S s = S(1.0 / (1.0 - rate));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = keep(*rng) ? s : S(0);
  return mask(x, std::move(m));
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <typename S>
BasicVar<S> concat_rows(std::span<const BasicVar<S>> parts) {
  auto& t = *parts.front().tape;
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  bool ng = false;
  std::vector<int> ids;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
    ng = ng || t.needs_grad(p.id);
    ids.push_back(p.id);
  }
  MatrixT<S> out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t.push(std::move(out),
                [ids](BasicTape<S>& t, int self) {
                  const auto& g = t.grad(self);
                  Eigen::Index r = 0;
                  for (int id : ids) {
                    const Eigen::Index n = t.value(id).rows();
                    if (t.needs_grad(id)) t.accumulate(id, g.middleRows(r, n));
                    r += n;
                  }
                },
                ng);
}

template <typename S>
BasicVar<S> concat_rows(std::initializer_list<BasicVar<S>> parts) {
  std::vector<BasicVar<S>> v(parts);
  return concat_rows(std::span<const BasicVar<S>>(v));
}

template <typename S>
BasicVar<S> concat_cols(std::span<const BasicVar<S>> parts) {
  auto& t = *parts.front().tape;
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  bool ng = false;
  std::vector<int> ids;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
    ng = ng || t.needs_grad(p.id);
    ids.push_back(p.id);
  }
  MatrixT<S> out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t.push(std::move(out),
                [ids](BasicTape<S>& t, int self) {
                  const auto& g = t.grad(self);
                  Eigen::Index c = 0;
                  for (int id : ids) {
                    const Eigen::Index n = t.value(id).cols();
                    if (t.needs_grad(id)) t.accumulate(id, g.middleCols(c, n));
                    c += n;
                  }
                },
                ng);
}

template <typename S>
BasicVar<S> slice_rows(BasicVar<S> x, Eigen::Index start, Eigen::Index n) {
  auto& t = *x.tape;
  const int ix = x.id;
  MatrixT<S> out = x.value().middleRows(start, n);
  return t.push(std::move(out),
                [ix, start, n](BasicTape<S>& t, int self) {
                  t.grad_ref(ix).middleRows(start, n) += t.grad(self);
                },
                t.needs_grad(ix));
}

template <typename S>
BasicVar<S> slice_cols(BasicVar<S> x, Eigen::Index start, Eigen::Index n) {
  auto& t = *x.tape;
  const int ix = x.id;
  MatrixT<S> out = x.value().middleCols(start, n);
  return t.push(std::move(out),
                [ix, start, n](BasicTape<S>& t, int self) {
                  t.grad_ref(ix).middleCols(start, n) += t.grad(self);
                },
                t.needs_grad(ix));
}

/// Column-major reshape.
template <typename S>
BasicVar<S> reshape(BasicVar<S> x, Eigen::Index rows, Eigen::Index cols) {
  auto& t = *x.tape;
  const int ix = x.id;
  const Eigen::Index r0 = x.rows(), c0 = x.cols();
  MatrixT<S> out = Eigen::Map<const MatrixT<S>>(x.value().data(), rows, cols);
  return t.push(std::move(out),
                [ix, r0, c0](BasicTape<S>& t, int self) {
                  const auto& g = t.grad(self);
                  t.accumulate(ix, Eigen::Map<const MatrixT<S>>(g.data(), r0, c0));
                },
                t.needs_grad(ix));
}

/// Mean over columns: (r x T) -> (r x 1).
template <typename S>
BasicVar<S> mean_cols(BasicVar<S> x) {
  auto& t = *x.tape;
  const int ix = x.id;
  const Eigen::Index n = x.cols();
  MatrixT<S> out = x.value().rowwise().mean();
  return t.push(std::move(out),
                [ix, n](BasicTape<S>& t, int self) {
                  MatrixT<S> g = t.grad(self).col(0).replicate(1, n) / S(n);
                  t.accumulate(ix, g);
                },
                t.needs_grad(ix));
}

template <typename S>
BasicVar<S> sum(BasicVar<S> x) {
  auto& t = *x.tape;
  const int ix = x.id;
  MatrixT<S> out(1, 1);
  out(0, 0) = x.value().sum();
  return t.push(std::move(out),
                [ix](BasicTape<S>& t, int self) {
                  const S g = t.grad(self)(0, 0);
                  const auto& xv = t.value(ix);
                  t.accumulate(ix, MatrixT<S>::Constant(xv.rows(), xv.cols(), g));
                },
                t.needs_grad(ix));
}

/// Repeats a column vector over n columns.
template <typename S>
BasicVar<S> repeat_cols(BasicVar<S> x, Eigen::Index n) {
  auto& t = *x.tape;
  const int ix = x.id;
  MatrixT<S> out = x.value().col(0).replicate(1, n);
  return t.push(std::move(out),
                [ix](BasicTape<S>& t, int self) { t.accumulate(ix, t.grad(self).rowwise().sum()); },
                t.needs_grad(ix));
}

/// Columns W[:, codes[j]] for every j.
template <typename S>
BasicVar<S> gather_cols(BasicVar<S> w, std::vector<int> codes) {
  auto& t = *w.tape;
  const int iw = w.id;
  const auto& wv = w.value();
  MatrixT<S> out(wv.rows(), static_cast<Eigen::Index>(codes.size()));
  for (std::size_t j = 0; j < codes.size(); ++j) out.col(j) = wv.col(codes[j]);
  return t.push(std::move(out),
                [iw, codes = std::move(codes)](BasicTape<S>& t, int self) {
                  const auto& g = t.grad(self);
                  auto& gw = t.grad_ref(iw);
                  for (std::size_t j = 0; j < codes.size(); ++j) gw.col(codes[j]) += g.col(j);
                },
                t.needs_grad(iw));
}

// ---------------------------------------------------------------------------
// Sequence operators
// ---------------------------------------------------------------------------

/// One-dimensional convolution over columns.
///
/// weight is Cout x (kernel * Cin); block i multiplies x_{t - dilation*i + shift}
/// where shift = 0 for causal mode and floor((kernel-1)*dilation/2) for
/// centered ("same") mode. Out-of-range steps read zero.
template <typename S>
BasicVar<S> conv1d(BasicVar<S> x, BasicVar<S> weight, BasicVar<S> bias, int kernel, int dilation,
                   bool centered = false) {
  auto& t = *x.tape;
  const int ix = x.id, iw = weight.id, ib = bias.id;
  const Eigen::Index cin = x.rows(), steps = x.cols();
  if (weight.cols() != cin * kernel) throw std::invalid_argument("conv1d: weight/input mismatch");
  const int shift = centered ? ((kernel - 1) * dilation) / 2 : 0;
  const auto& xv = x.value();
  const auto& wv = weight.value();
  MatrixT<S> out = bias.value().col(0).replicate(1, steps);
  for (int i = 0; i < kernel; ++i) {
    const Eigen::Index s = static_cast<Eigen::Index>(dilation) * i - shift;
    const Eigen::Index len = steps - (s >= 0 ? s : -s);
    if (len <= 0) continue;
    const auto wi = wv.middleCols(i * cin, cin);
    if (s >= 0)
      out.rightCols(len).noalias() += wi * xv.leftCols(len);
    else
      out.leftCols(len).noalias() += wi * xv.rightCols(len);
  }
  return t.push(
      std::move(out),
      [ix, iw, ib, kernel, dilation, shift, cin, steps](BasicTape<S>& t, int self) {
        const auto& g = t.grad(self);
        const auto& xv = t.value(ix);
        const auto& wv = t.value(iw);
        const bool gx = t.needs_grad(ix), gw = t.needs_grad(iw);
        if (t.needs_grad(ib)) t.accumulate(ib, g.rowwise().sum());
        for (int i = 0; i < kernel; ++i) {
          const Eigen::Index s = static_cast<Eigen::Index>(dilation) * i - shift;
          const Eigen::Index len = steps - (s >= 0 ? s : -s);
          if (len <= 0) continue;
          const auto wi = wv.middleCols(i * cin, cin);
          if (s >= 0) {
            if (gx) t.grad_ref(ix).leftCols(len).noalias() += wi.transpose() * g.rightCols(len);
            if (gw)
              t.grad_ref(iw).middleCols(i * cin, cin).noalias() +=
                  g.rightCols(len) * xv.leftCols(len).transpose();
          } else {
            if (gx) t.grad_ref(ix).rightCols(len).noalias() += wi.transpose() * g.leftCols(len);
            if (gw)
              t.grad_ref(iw).middleCols(i * cin, cin).noalias() +=
                  g.leftCols(len) * xv.rightCols(len).transpose();
          }
        }
      },
      detail::any_grad(t, {ix, iw, ib}));
}

/// Max pooling with window 2 and stride 2; a trailing odd step pools alone.
template <typename S>
BasicVar<S> max_pool2(BasicVar<S> x) {
  auto& t = *x.tape;
  const int ix = x.id;
  const auto& xv = x.value();
  const Eigen::Index n = (xv.cols() + 1) / 2;
  MatrixT<S> out(xv.rows(), n);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(xv.rows() * n));
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index a = 2 * j, b = 2 * j + 1;
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      Eigen::Index best = a;
      if (b < xv.cols() && xv(r, b) > xv(r, a)) best = b;
      out(r, j) = xv(r, best);
      arg[static_cast<std::size_t>(j * xv.rows() + r)] = best;
    }
  }
  return t.push(std::move(out),
                [ix, arg = std::move(arg)](BasicTape<S>& t, int self) {
                  const auto& g = t.grad(self);
                  auto& gx = t.grad_ref(ix);
                  for (Eigen::Index j = 0; j < g.cols(); ++j)
                    for (Eigen::Index r = 0; r < g.rows(); ++r)
                      gx(r, arg[static_cast<std::size_t>(j * g.rows() + r)]) += g(r, j);
                },
                t.needs_grad(ix));
}

/// Nearest-neighbour upsampling by 2, cropped to `length` (<= 2 * cols).
template <typename S>
BasicVar<S> upsample2(BasicVar<S> x, Eigen::Index length) {
  auto& t = *x.tape;
  const int ix = x.id;
  const auto& xv = x.value();
  if (length > 2 * xv.cols()) throw std::invalid_argument("upsample2: target too long");
  MatrixT<S> out(xv.rows(), length);
  for (Eigen::Index j = 0; j < length; ++j) out.col(j) = xv.col(j / 2);
  return t.push(std::move(out),
                [ix](BasicTape<S>& t, int self) {
                  const auto& g = t.grad(self);
                  auto& gx = t.grad_ref(ix);
                  for (Eigen::Index j = 0; j < g.cols(); ++j) gx.col(j / 2) += g.col(j);
                },
                t.needs_grad(ix));
}

/// Weight normalisation per output row: W_r = g_r * v_r / ||v_r||.
template <typename S>
BasicVar<S> weight_norm(BasicVar<S> v, BasicVar<S> g) {
  auto& t = *v.tape;
  const int iv = v.id, ig = g.id;
  const auto& vv = v.value();
  VectorT<S> norms = vv.rowwise().norm();
  MatrixT<S> out(vv.rows(), vv.cols());
  for (Eigen::Index r = 0; r < vv.rows(); ++r) out.row(r) = vv.row(r) * (g.value()(r, 0) / norms(r));
  return t.push(std::move(out),
                [iv, ig, norms](BasicTape<S>& t, int self) {
                  const auto& gw = t.grad(self);
                  const auto& vv = t.value(iv);
                  const auto& gv = t.value(ig);
                  MatrixT<S> dg(vv.rows(), 1);
                  MatrixT<S> dv(vv.rows(), vv.cols());
                  for (Eigen::Index r = 0; r < vv.rows(); ++r) {
                    const auto u = (vv.row(r) / norms(r)).eval();
                    const S proj = gw.row(r).dot(u);
                    dg(r, 0) = proj;
                    dv.row(r) = (gv(r, 0) / norms(r)) * (gw.row(r) - proj * u);
                  }
                  if (t.needs_grad(ig)) t.accumulate(ig, dg);
                  if (t.needs_grad(iv)) t.accumulate(iv, dv);
                },
                detail::any_grad(t, {iv, ig}));
}

/// Per-channel normalisation over the time axis followed by an affine map.
template <typename S>
BasicVar<S> channel_norm(BasicVar<S> x, BasicVar<S> gamma, BasicVar<S> beta, S eps = S(1e-5)) {
  auto& t = *x.tape;
  const int ix = x.id, igm = gamma.id, ibt = beta.id;
  const auto& xv = x.value();
  const Eigen::Index n = xv.cols();
  VectorT<S> mean = xv.rowwise().mean();
  MatrixT<S> centered = xv.colwise() - mean;
  VectorT<S> inv_std = ((centered.array().square().rowwise().sum() / S(n)) + eps).rsqrt().matrix();
  MatrixT<S> xhat = inv_std.asDiagonal() * centered;
  MatrixT<S> out = (gamma.value().col(0).asDiagonal() * xhat).colwise() + beta.value().col(0);
  return t.push(std::move(out),
                [ix, igm, ibt, xhat = std::move(xhat), inv_std, n](BasicTape<S>& t, int self) {
                  const auto& g = t.grad(self);
                  if (t.needs_grad(ibt)) t.accumulate(ibt, g.rowwise().sum());
                  if (t.needs_grad(igm)) t.accumulate(igm, g.cwiseProduct(xhat).rowwise().sum());
                  if (t.needs_grad(ix)) {
                    MatrixT<S> gxh = t.value(igm).col(0).asDiagonal() * g;
                    VectorT<S> s1 = gxh.rowwise().sum();
                    VectorT<S> s2 = gxh.cwiseProduct(xhat).rowwise().sum();
                    MatrixT<S> gx = ((gxh * S(n)).colwise() - s1 - (xhat.array().colwise() * s2.array()).matrix())
                                        .eval();
                    gx = (inv_std / S(n)).asDiagonal() * gx;
                    t.accumulate(ix, gx);
                  }
                },
                detail::any_grad(t, {ix, igm, ibt}));
}

/// Learnable sinusoidal time features: z = omega * t * time_scale + phi;
/// row 0 is returned as is, every other row through sin().
template <typename S>
BasicVar<S> time2vec(BasicVar<S> omega, BasicVar<S> phi, MatrixT<S> times, S time_scale) {
  auto& t = *omega.tape;
  const int io = omega.id, ip = phi.id;
  MatrixT<S> scaled = times * time_scale;  // 1 x n
  MatrixT<S> z = (omega.value().col(0) * scaled).colwise() + phi.value().col(0);
  MatrixT<S> out = z;
  if (out.rows() > 1) out.bottomRows(out.rows() - 1) = z.bottomRows(z.rows() - 1).array().sin().matrix();
  return t.push(std::move(out),
                [io, ip, scaled = std::move(scaled), z = std::move(z)](BasicTape<S>& t, int self) {
                  MatrixT<S> gz = t.grad(self);
                  if (gz.rows() > 1)
                    gz.bottomRows(gz.rows() - 1).array() *= z.bottomRows(z.rows() - 1).array().cos();
                  if (t.needs_grad(ip)) t.accumulate(ip, gz.rowwise().sum());
                  if (t.needs_grad(io)) t.accumulate(io, gz * scaled.transpose());
                },
                detail::any_grad(t, {io, ip}));
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Weighted negative log-likelihood of softmax over each column:
/// sum_t w_t * (logsumexp(z_t) - z_t[y_t]). Returns a 1 x 1 node.
template <typename S>
BasicVar<S> softmax_nll(BasicVar<S> logits, std::vector<int> targets, std::vector<S> weights) {
  auto& t = *logits.tape;
  const int il = logits.id;
  const auto& z = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != z.cols() || targets.size() != weights.size())
    throw std::invalid_argument("softmax_nll: target count mismatch");
  MatrixT<S> prob(z.rows(), z.cols());
  S total = 0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const S mx = z.col(j).maxCoeff();
    const auto e = (z.col(j).array() - mx).exp();
    const S se = e.sum();
    prob.col(j) = (e / se).matrix();
    total += weights[j] * (mx + std::log(se) - z(targets[j], j));
  }
  MatrixT<S> out(1, 1);
  out(0, 0) = total;
  return t.push(std::move(out),
                [il, prob = std::move(prob), targets = std::move(targets),
                 weights = std::move(weights)](BasicTape<S>& t, int self) {
                  const S g = t.grad(self)(0, 0);
                  MatrixT<S> gz = prob;
                  for (Eigen::Index j = 0; j < gz.cols(); ++j) {
                    gz(targets[j], j) -= S(1);
                    gz.col(j) *= g * weights[j];
                  }
                  t.accumulate(il, gz);
                },
                t.needs_grad(il));
}

}  // namespace ad

// Non-differentiable helpers on plain matrices.

/// Column-wise softmax.
template <typename Derived>
MatrixT<typename Derived::Scalar> softmax_cols(const Eigen::MatrixBase<Derived>& z) {
  using S = typename Derived::Scalar;
  MatrixT<S> out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const S mx = z.col(j).maxCoeff();
    const auto e = (z.col(j).array() - mx).exp();
    out.col(j) = (e / e.sum()).matrix();
  }
  return out;
}

/// Column-wise log-softmax.
template <typename Derived>
MatrixT<typename Derived::Scalar> log_softmax_cols(const Eigen::MatrixBase<Derived>& z) {
  using S = typename Derived::Scalar;
  MatrixT<S> out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const S mx = z.col(j).maxCoeff();
    const S lse = mx + std::log((z.col(j).array() - mx).exp().sum());
    out.col(j) = (z.col(j).array() - lse).matrix();
  }
  return out;
}

}  // namespace hipal
