#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "umfl/tensor.hpp"

namespace umfl {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  Tape<Scalar>* tape_ptr() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<Scalar>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  Scalar item() const { return value().item(); }
  const typename Tensor<Scalar>::Array& grad() const { return tape_->grad(*this); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of executed primitives. backward() walks the record in
/// exact reverse execution order and accumulates gradients into every node
/// that depends on a variable.
template <typename Scalar>
class Tape {
 public:
  using Array = typename Tensor<Scalar>::Array;
  /// Receives the node's upstream gradient; accumulates into input gradients.
  using Backward = std::function<void(Tape&, const Array&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Tensor<Scalar> value) { return push("constant", std::move(value), false, {}); }
  Var<Scalar> variable(Tensor<Scalar> value) { return push("variable", std::move(value), true, {}); }

  /// Records a primitive. The backward closure runs only when some input needs
  /// a gradient.
  Var<Scalar> record(const char* op, Tensor<Scalar> value, std::initializer_list<Var<Scalar>> inputs,
                     Backward backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      if (in.tape_ptr() != this) throw PreconditionError(std::string(op) + ": input from another tape");
      needs = needs || nodes_[in.id()].requires_grad;
    }
    if (!value.all_finite()) throw NumericError(std::string("non-finite output in op '") + op + "'");
    return push(op, std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Tensor<Scalar>& value(const Var<Scalar>& v) const { return nodes_.at(v.id()).value; }

  const Array& grad(const Var<Scalar>& v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad.size() != n.value.size()) throw PreconditionError("grad requested before backward()");
    return n.grad;
  }

  /// Gradient accumulator of an input; only valid inside a backward closure.
  Array& grad_slot(const Var<Scalar>& v) { return nodes_[v.id()].grad; }
  bool requires_grad(const Var<Scalar>& v) const { return nodes_[v.id()].requires_grad; }

  /// Seeds d(root)/d(root) = 1 for a single-element root and propagates.
  void backward(const Var<Scalar>& root) {
    if (value(root).size() != 1) throw PreconditionError("backward: root must hold one element");
    for (auto& n : nodes_) {
      n.grad = n.requires_grad ? Array::Zero(n.value.size()) : Array();
    }
    if (!nodes_[root.id()].requires_grad) return;
    nodes_[root.id()].grad.setOnes();
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward) continue;
      if (!n.grad.allFinite()) throw NumericError(std::string("non-finite gradient at op '") + n.op + "'");
      const Array upstream = n.grad;
      n.backward(*this, upstream);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const char* op_name(std::size_t id) const { return nodes_.at(id).op; }
  const Tensor<Scalar>& value_at(std::size_t id) const { return nodes_.at(id).value; }

 private:
  struct Node {
    const char* op;
    Tensor<Scalar> value;
    bool requires_grad;
    Backward backward;
    Array grad;
  };

  Var<Scalar> push(const char* op, Tensor<Scalar> value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{op, std::move(value), requires_grad, std::move(backward), Array()});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

namespace detail {

template <typename Scalar>
void require_same_shape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw PreconditionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
  }
}

template <typename Scalar>
void require_rank(const char* op, const Var<Scalar>& a, Index rank) {
  if (a.value().rank() != rank) {
    throw PreconditionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                            shape_string(a.shape()));
  }
}

template <typename Scalar>
void accumulate(Tape<Scalar>& t, const Var<Scalar>& v, const typename Tensor<Scalar>::Array& g) {
  if (t.requires_grad(v)) t.grad_slot(v) += g;
}

/// Elementwise unary op given f(x) and f'(x, f(x)).
template <typename Scalar, typename F, typename DF>
Var<Scalar> unary(const char* op, const Var<Scalar>& x, F f, DF df) {
  Tape<Scalar>& t = x.tape();
  Tensor<Scalar> out(x.shape(), x.value().values().unaryExpr(f).eval());
  const Var<Scalar> xin = x;
  const std::size_t out_id = t.size();
  return t.record(op, std::move(out), {x}, [xin, out_id, df](Tape<Scalar>& tp, const auto& up) {
    const auto& xv = xin.value().values();
    const auto& yv = tp.value(Var<Scalar>(&tp, out_id)).values();
    typename Tensor<Scalar>::Array g(xv.size());
    for (Index i = 0; i < xv.size(); ++i) g[i] = up[i] * df(xv[i], yv[i]);
    accumulate(tp, xin, g);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("add", a, b);
  Tensor<Scalar> out(a.shape(), (a.value().values() + b.value().values()).eval());
  return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const auto& up) {
    detail::accumulate(t, a, up);
    detail::accumulate(t, b, up);
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("sub", a, b);
  Tensor<Scalar> out(a.shape(), (a.value().values() - b.value().values()).eval());
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const auto& up) {
    detail::accumulate(t, a, up);
    detail::accumulate(t, b, (-up).eval());
  });
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("mul", a, b);
  Tensor<Scalar> out(a.shape(), (a.value().values() * b.value().values()).eval());
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const auto& up) {
    detail::accumulate(t, a, (up * b.value().values()).eval());
    detail::accumulate(t, b, (up * a.value().values()).eval());
  });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, Scalar c) {
  return detail::unary("add_scalar", a, [c](Scalar x) { return x + c; }, [](Scalar, Scalar) { return Scalar(1); });
}

template <typename Scalar>
Var<Scalar> operator+(Scalar c, const Var<Scalar>& a) {
  return a + c;
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, Scalar c) {
  return a + (-c);
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, Scalar c) {
  return detail::unary("mul_scalar", a, [c](Scalar x) { return x * c; }, [c](Scalar, Scalar) { return c; });
}

template <typename Scalar>
Var<Scalar> operator*(Scalar c, const Var<Scalar>& a) {
  return a * c;
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a) {
  return a * Scalar(-1);
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& x) {
  return detail::unary("exp", x, [](Scalar v) { return std::exp(v); }, [](Scalar, Scalar y) { return y; });
}

template <typename Scalar>
Var<Scalar> log(const Var<Scalar>& x) {
  if ((x.value().values() <= Scalar(0)).any()) throw NumericError("log: non-positive input");
  return detail::unary("log", x, [](Scalar v) { return std::log(v); }, [](Scalar v, Scalar) { return Scalar(1) / v; });
}

template <typename Scalar>
Var<Scalar> sqrt(const Var<Scalar>& x) {
  if ((x.value().values() < Scalar(0)).any()) throw NumericError("sqrt: negative input");
  return detail::unary("sqrt", x, [](Scalar v) { return std::sqrt(v); },
                       [](Scalar, Scalar y) { return Scalar(0.5) / y; });
}

/// Elementwise max(x, c). Ties route the gradient to c (i.e. nowhere).
template <typename Scalar>
Var<Scalar> max(const Var<Scalar>& x, Scalar c) {
  return detail::unary("max_scalar", x, [c](Scalar v) { return v > c ? v : c; },
                       [c](Scalar v, Scalar) { return v > c ? Scalar(1) : Scalar(0); });
}

/// Elementwise max(a, b). Ties route the gradient to a.
template <typename Scalar>
Var<Scalar> max(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("max", a, b);
  const auto& av = a.value().values();
  const auto& bv = b.value().values();
  Tensor<Scalar> out(a.shape(), (av >= bv).select(av, bv).eval());
  return a.tape().record("max", std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const auto& up) {
    const auto mask = (a.value().values() >= b.value().values());
    detail::accumulate(t, a, mask.select(up, Scalar(0)).eval());
    detail::accumulate(t, b, mask.select(Scalar(0), up).eval());
  });
}

/// max(x, 0); the subgradient at 0 is 0.
template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  return detail::unary("relu", x, [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); },
                       [](Scalar v, Scalar) { return v > Scalar(0) ? Scalar(1) : Scalar(0); });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

template <typename Scalar>
Var<Scalar> reduce_sum(const Var<Scalar>& x) {
  const Index n = x.value().size();
  return x.tape().record("reduce_sum", Tensor<Scalar>::scalar(x.value().values().sum()), {x},
                         [x, n](Tape<Scalar>& t, const auto& up) {
                           detail::accumulate(t, x, Tensor<Scalar>::Array::Constant(n, up[0]).eval());
                         });
}

template <typename Scalar>
Var<Scalar> reduce_mean(const Var<Scalar>& x) {
  const Index n = x.value().size();
  if (n == 0) throw PreconditionError("reduce_mean: empty input");
  return x.tape().record("reduce_mean", Tensor<Scalar>::scalar(x.value().values().mean()), {x},
                         [x, n](Tape<Scalar>& t, const auto& up) {
                           detail::accumulate(t, x, Tensor<Scalar>::Array::Constant(n, up[0] / Scalar(n)).eval());
                         });
}

/// (N, ...) -> (N, prod(...)).
template <typename Scalar>
Var<Scalar> flatten(const Var<Scalar>& x) {
  if (x.value().rank() < 1) throw PreconditionError("flatten: rank-0 input");
  const Index n = x.shape()[0];
  Tensor<Scalar> out(Shape{n, n ? x.value().size() / n : 0}, x.value().values());
  return x.tape().record("flatten", std::move(out), {x},
                         [x](Tape<Scalar>& t, const auto& up) { detail::accumulate(t, x, up); });
}

/// Concatenation along the leading axis.
template <typename Scalar>
Var<Scalar> concat_rows(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.empty() || sa.size() != sb.size() || !std::equal(sa.begin() + 1, sa.end(), sb.begin() + 1)) {
    throw PreconditionError("concat_rows: shape mismatch " + shape_string(sa) + " vs " + shape_string(sb));
  }
  Shape out_shape = sa;
  out_shape[0] += sb[0];
  typename Tensor<Scalar>::Array values(a.value().size() + b.value().size());
  values << a.value().values(), b.value().values();
  const Index na = a.value().size();
  const Index nb = b.value().size();
  return a.tape().record("concat_rows", Tensor<Scalar>(out_shape, std::move(values)), {a, b},
                         [a, b, na, nb](Tape<Scalar>& t, const auto& up) {
                           detail::accumulate(t, a, up.head(na).eval());
                           detail::accumulate(t, b, up.tail(nb).eval());
                         });
}

/// Picks flat entries of x into a vector of shape (indices.size()).
template <typename Scalar>
Var<Scalar> gather(const Var<Scalar>& x, std::vector<Index> indices) {
  const Index n = x.value().size();
  typename Tensor<Scalar>::Array values(static_cast<Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= n) throw PreconditionError("gather: index out of range");
    values[static_cast<Index>(i)] = x.value().values()[indices[i]];
  }
  Tensor<Scalar> out(Shape{static_cast<Index>(indices.size())}, std::move(values));
  return x.tape().record("gather", std::move(out), {x},
                         [x, n, idx = std::move(indices)](Tape<Scalar>& t, const auto& up) {
                           typename Tensor<Scalar>::Array g = Tensor<Scalar>::Array::Zero(n);
                           for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += up[static_cast<Index>(i)];
                           detail::accumulate(t, x, g);
                         });
}

// ---------------------------------------------------------------------------
// Dense layers

/// (N x K) * (K x M).
template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_rank("matmul", a, 2);
  detail::require_rank("matmul", b, 2);
  if (a.shape()[1] != b.shape()[0]) {
    throw PreconditionError("matmul: shape mismatch " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor<Scalar> out(Shape{a.shape()[0], b.shape()[1]});
  out.matrix().noalias() = a.value().matrix() * b.value().matrix();
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const auto& up) {
    const auto upm = Eigen::Map<const RowMatrix<Scalar>>(up.data(), a.shape()[0], b.shape()[1]);
    if (t.requires_grad(a)) {
      Eigen::Map<RowMatrix<Scalar>>(t.grad_slot(a).data(), a.shape()[0], a.shape()[1]).noalias() +=
          upm * b.value().matrix().transpose();
    }
    if (t.requires_grad(b)) {
      Eigen::Map<RowMatrix<Scalar>>(t.grad_slot(b).data(), b.shape()[0], b.shape()[1]).noalias() +=
          a.value().matrix().transpose() * upm;
    }
  });
}

/// Adds a length-M bias along the last axis of x (any rank >= 1).
template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar>& x, const Var<Scalar>& bias) {
  detail::require_rank("add_bias", bias, 1);
  const Index m = bias.shape()[0];
  if (x.value().rank() < 1 || x.shape().back() != m) {
    throw PreconditionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                            shape_string(x.shape()));
  }
  const Index rows = x.value().size() / m;
  Tensor<Scalar> out = x.value();
  Eigen::Map<RowMatrix<Scalar>>(out.values().data(), rows, m).rowwise() += bias.value().values().matrix().transpose();
  return x.tape().record("add_bias", std::move(out), {x, bias}, [x, bias, rows, m](Tape<Scalar>& t, const auto& up) {
    detail::accumulate(t, x, up);
    if (t.requires_grad(bias)) {
      t.grad_slot(bias) += Eigen::Map<const RowMatrix<Scalar>>(up.data(), rows, m).colwise().sum().transpose().array();
    }
  });
}

namespace detail {

// Patch matrix of one NHWC image for a 3x3 stride-1 pad-1 convolution:
// row (y*W + x), column ((ky*3 + kx)*C + c).
template <typename Scalar>
void im2col3x3(const Scalar* image, Index h, Index w, Index c, RowMatrix<Scalar>& cols) {
  cols.setZero(h * w, 9 * c);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      Scalar* row = cols.data() + (y * w + x) * 9 * c;
      for (Index ky = 0; ky < 3; ++ky) {
        const Index sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (Index kx = 0; kx < 3; ++kx) {
          const Index sx = x + kx - 1;
          if (sx < 0 || sx >= w) continue;
          std::copy_n(image + (sy * w + sx) * c, c, row + (ky * 3 + kx) * c);
        }
      }
    }
  }
}

template <typename Scalar>
void col2im3x3(const RowMatrix<Scalar>& cols, Index h, Index w, Index c, Scalar* image_grad) {
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const Scalar* row = cols.data() + (y * w + x) * 9 * c;
      for (Index ky = 0; ky < 3; ++ky) {
        const Index sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (Index kx = 0; kx < 3; ++kx) {
          const Index sx = x + kx - 1;
          if (sx < 0 || sx >= w) continue;
          Scalar* dst = image_grad + (sy * w + sx) * c;
          const Scalar* src = row + (ky * 3 + kx) * c;
          for (Index ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

}  // namespace detail

/// 3x3 convolution, stride 1, zero padding 1. x is (N, H, W, Cin) and the
/// kernel is (3, 3, Cin, Cout); output is (N, H, W, Cout). No bias.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& kernel) {
  detail::require_rank("conv2d", x, 4);
  detail::require_rank("conv2d", kernel, 4);
  const Index n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], cin = x.shape()[3];
  const Shape& ks = kernel.shape();
  if (ks[0] != 3 || ks[1] != 3 || ks[2] != cin) {
    throw PreconditionError("conv2d: kernel " + shape_string(ks) + " incompatible with input " + shape_string(x.shape()));
  }
  const Index cout = ks[3];
  Tensor<Scalar> out(Shape{n, h, w, cout});
  const auto kmat = Eigen::Map<const RowMatrix<Scalar>>(kernel.value().values().data(), 9 * cin, cout);
  RowMatrix<Scalar> cols;
  for (Index i = 0; i < n; ++i) {
    detail::im2col3x3(x.value().values().data() + i * h * w * cin, h, w, cin, cols);
    Eigen::Map<RowMatrix<Scalar>>(out.values().data() + i * h * w * cout, h * w, cout).noalias() = cols * kmat;
  }
  return x.tape().record("conv2d", std::move(out), {x, kernel},
                         [x, kernel, n, h, w, cin, cout](Tape<Scalar>& t, const auto& up) {
    const auto kmat = Eigen::Map<const RowMatrix<Scalar>>(kernel.value().values().data(), 9 * cin, cout);
    const bool want_x = t.requires_grad(x);
    const bool want_k = t.requires_grad(kernel);
    RowMatrix<Scalar> cols;
    RowMatrix<Scalar> dcols;
    for (Index i = 0; i < n; ++i) {
      const auto dout = Eigen::Map<const RowMatrix<Scalar>>(up.data() + i * h * w * cout, h * w, cout);
      if (want_k) {
        detail::im2col3x3(x.value().values().data() + i * h * w * cin, h, w, cin, cols);
        Eigen::Map<RowMatrix<Scalar>>(t.grad_slot(kernel).data(), 9 * cin, cout).noalias() += cols.transpose() * dout;
      }
      if (want_x) {
        dcols.noalias() = dout * kmat.transpose();
        detail::col2im3x3(dcols, h, w, cin, t.grad_slot(x).data() + i * h * w * cin);
      }
    }
  });
}

/// 2x2 average pooling with stride 2 on (N, H, W, C); odd trailing rows/columns are dropped.
template <typename Scalar>
Var<Scalar> avgpool2d(const Var<Scalar>& x) {
  detail::require_rank("avgpool2d", x, 4);
  const Index n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
  const Index oh = h / 2, ow = w / 2;
  if (oh < 1 || ow < 1) throw PreconditionError("avgpool2d: input smaller than 2x2 " + shape_string(x.shape()));
  Tensor<Scalar> out(Shape{n, oh, ow, c});
  const auto& xv = x.value().values();
  auto& ov = out.values();
  for (Index i = 0; i < n; ++i)
    for (Index y = 0; y < oh; ++y)
      for (Index xx = 0; xx < ow; ++xx)
        for (Index ch = 0; ch < c; ++ch) {
          Scalar s = 0;
          for (Index dy = 0; dy < 2; ++dy)
            for (Index dx = 0; dx < 2; ++dx) s += xv[((i * h + 2 * y + dy) * w + 2 * xx + dx) * c + ch];
          ov[((i * oh + y) * ow + xx) * c + ch] = s / Scalar(4);
        }
  return x.tape().record("avgpool2d", std::move(out), {x}, [x, n, h, w, c, oh, ow](Tape<Scalar>& t, const auto& up) {
    typename Tensor<Scalar>::Array g = Tensor<Scalar>::Array::Zero(x.value().size());
    for (Index i = 0; i < n; ++i)
      for (Index y = 0; y < oh; ++y)
        for (Index xx = 0; xx < ow; ++xx)
          for (Index ch = 0; ch < c; ++ch) {
            const Scalar q = up[((i * oh + y) * ow + xx) * c + ch] / Scalar(4);
            for (Index dy = 0; dy < 2; ++dy)
              for (Index dx = 0; dx < 2; ++dx) g[((i * h + 2 * y + dy) * w + 2 * xx + dx) * c + ch] += q;
          }
    detail::accumulate(t, x, g);
  });
}

/// Mean softmax cross-entropy of (N x C) logits against integer labels.
template <typename Scalar>
Var<Scalar> softmax_cross_entropy(const Var<Scalar>& logits, std::span<const int> labels) {
  detail::require_rank("softmax_cross_entropy", logits, 2);
  const Index n = logits.shape()[0], c = logits.shape()[1];
  if (static_cast<Index>(labels.size()) != n || n == 0) {
    throw PreconditionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(n) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= c) {
      throw PreconditionError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(c) + ")");
    }
  }
  RowMatrix<Scalar> probs(n, c);
  Scalar total = 0;
  const auto z = logits.value().matrix();
  for (Index i = 0; i < n; ++i) {
    const Scalar top = z.row(i).maxCoeff();
    const auto shifted = (z.row(i).array() - top).eval();
    const Scalar lse = std::log(shifted.exp().sum());
    probs.row(i) = (shifted - lse).exp().matrix();
    total += lse - shifted[labels[static_cast<std::size_t>(i)]];
  }
  std::vector<int> y(labels.begin(), labels.end());
  return logits.tape().record("softmax_cross_entropy", Tensor<Scalar>::scalar(total / Scalar(n)), {logits},
                              [logits, probs = std::move(probs), y = std::move(y), n, c](Tape<Scalar>& t, const auto& up) {
    RowMatrix<Scalar> g = probs;
    for (Index i = 0; i < n; ++i) g(i, y[static_cast<std::size_t>(i)]) -= Scalar(1);
    g *= up[0] / Scalar(n);
    detail::accumulate(t, logits, Eigen::Map<const typename Tensor<Scalar>::Array>(g.data(), n * c).eval());
  });
}

}  // namespace umfl
