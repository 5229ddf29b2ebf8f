#include "fluidsformer/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

namespace fluidsformer {

std::string shape_string(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t k = 0; k < shape.size(); ++k) os << (k ? ", " : "") << shape[k];
  os << ']';
  return os.str();
}

namespace ad {

namespace {

[[noreturn]] void shape_fail(const char *op, const std::string &detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

template <typename T>
void require_rank(const char *op, const Var<T> &a, Index rank) {
  if (a.value().rank() != rank)
    shape_fail(op, "expected rank " + std::to_string(rank) + ", got " +
                       shape_string(a.shape()));
}

template <typename T>
void require_same(const char *op, const Var<T> &a, const Var<T> &b) {
  if (a.shape() != b.shape())
    shape_fail(op, "shapes differ: " + shape_string(a.shape()) + " vs " +
                       shape_string(b.shape()));
}

template <typename T, typename Expr>
void accumulate(Tape<T> &tape, int id, const Expr &expr) {
  if (tape.requires_grad(id)) tape.grad_buffer(id).data() += expr;
}

template <typename T> Tape<T> &tape_of(const Var<T> &a) { return *a.tape(); }

template <typename T> void check_finite(const char *op, const Tensor<T> &t) {
#ifndef NDEBUG
  if (!t.all_finite())
    throw NumericalError(std::string(op) + ": produced a non-finite value");
#else
  (void)op;
  (void)t;
#endif
}

} // namespace

template <typename T> Var<T> matmul(const Var<T> &a, const Var<T> &b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0))
    shape_fail("matmul", "inner dimensions differ: " + shape_string(a.shape()) +
                             " x " + shape_string(b.shape()));
  Tensor<T> out({a.dim(0), b.dim(1)});
  out.matrix().noalias() = a.value().matrix() * b.value().matrix();
  check_finite("matmul", out);
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(
      std::move(out), {a, b}, [ia, ib](Tape<T> &t, const Tensor<T> &g) {
        if (t.requires_grad(ia))
          t.grad_buffer(ia).matrix().noalias() +=
              g.matrix() * t.value(ib).matrix().transpose();
        if (t.requires_grad(ib))
          t.grad_buffer(ib).matrix().noalias() +=
              t.value(ia).matrix().transpose() * g.matrix();
      });
}

template <typename T> Var<T> transpose(const Var<T> &a) {
  require_rank("transpose", a, 2);
  Tensor<T> out({a.dim(1), a.dim(0)});
  out.matrix() = a.value().matrix().transpose();
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a},
                           [ia](Tape<T> &t, const Tensor<T> &g) {
                             if (t.requires_grad(ia))
                               t.grad_buffer(ia).matrix() += g.matrix().transpose();
                           });
}

template <typename T> Var<T> add(const Var<T> &a, const Var<T> &b) {
  require_same("add", a, b);
  Tensor<T> out(a.shape(), a.value().data() + b.value().data());
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b},
                           [ia, ib](Tape<T> &t, const Tensor<T> &g) {
                             accumulate(t, ia, g.data());
                             accumulate(t, ib, g.data());
                           });
}

template <typename T> Var<T> sub(const Var<T> &a, const Var<T> &b) {
  require_same("sub", a, b);
  Tensor<T> out(a.shape(), a.value().data() - b.value().data());
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b},
                           [ia, ib](Tape<T> &t, const Tensor<T> &g) {
                             accumulate(t, ia, g.data());
                             accumulate(t, ib, -g.data());
                           });
}

template <typename T> Var<T> mul(const Var<T> &a, const Var<T> &b) {
  require_same("mul", a, b);
  Tensor<T> out(a.shape(), a.value().data().cwiseProduct(b.value().data()));
  check_finite("mul", out);
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(
      std::move(out), {a, b}, [ia, ib](Tape<T> &t, const Tensor<T> &g) {
        accumulate(t, ia, g.data().cwiseProduct(t.value(ib).data()));
        accumulate(t, ib, g.data().cwiseProduct(t.value(ia).data()));
      });
}

template <typename T> Var<T> scale(const Var<T> &a, T factor) {
  Tensor<T> out(a.shape(), a.value().data() * factor);
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a},
                           [ia, factor](Tape<T> &t, const Tensor<T> &g) {
                             accumulate(t, ia, g.data() * factor);
                           });
}

template <typename T> Var<T> add_scalar(const Var<T> &a, T offset) {
  Tensor<T> out(a.shape(), a.value().data().array() + offset);
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a},
                           [ia](Tape<T> &t, const Tensor<T> &g) {
                             accumulate(t, ia, g.data());
                           });
}

template <typename T> Var<T> add_bias(const Var<T> &a, const Var<T> &bias) {
  require_rank("add_bias", a, 2);
  require_rank("add_bias", bias, 1);
  if (bias.dim(0) != a.dim(1))
    shape_fail("add_bias", "bias " + shape_string(bias.shape()) +
                               " does not match " + shape_string(a.shape()));
  Tensor<T> out = a.value();
  out.matrix().rowwise() += bias.value().matrix().row(0);
  const int ia = a.id(), ib = bias.id();
  return tape_of(a).record(
      std::move(out), {a, bias}, [ia, ib](Tape<T> &t, const Tensor<T> &g) {
        accumulate(t, ia, g.data());
        if (t.requires_grad(ib))
          t.grad_buffer(ib).matrix().row(0) += g.matrix().colwise().sum();
      });
}

template <typename T>
Var<T> add_channel_bias(const Var<T> &x, const Var<T> &bias) {
  require_rank("add_channel_bias", x, 3);
  require_rank("add_channel_bias", bias, 1);
  if (bias.dim(0) != x.dim(0))
    shape_fail("add_channel_bias", "bias " + shape_string(bias.shape()) +
                                       " does not match " +
                                       shape_string(x.shape()));
  const Index c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor<T> out = x.value();
  Eigen::Map<typename Tensor<T>::Matrix>(out.ptr(), c, hw).colwise() +=
      bias.value().data();
  const int ix = x.id(), ib = bias.id();
  return tape_of(x).record(
      std::move(out), {x, bias}, [ix, ib, c, hw](Tape<T> &t, const Tensor<T> &g) {
        accumulate(t, ix, g.data());
        if (t.requires_grad(ib))
          t.grad_buffer(ib).data() +=
              Eigen::Map<const typename Tensor<T>::Matrix>(g.ptr(), c, hw)
                  .rowwise()
                  .sum();
      });
}

template <typename T> Var<T> relu(const Var<T> &a) {
  Tensor<T> out(a.shape(), a.value().data().cwiseMax(T(0)));
  const int ia = a.id();
  return tape_of(a).record(
      std::move(out), {a}, [ia](Tape<T> &t, const Tensor<T> &g) {
        accumulate(t, ia,
                   (t.value(ia).data().array() > T(0))
                       .select(g.data().array(), T(0))
                       .matrix());
      });
}

template <typename T> Var<T> tanh(const Var<T> &a) {
  Tensor<T> out(a.shape(), a.value().data().array().tanh().matrix());
  const int ia = a.id();
  auto y = std::make_shared<typename Tensor<T>::Vector>(out.data());
  return tape_of(a).record(
      std::move(out), {a}, [ia, y](Tape<T> &t, const Tensor<T> &g) {
        accumulate(t, ia,
                   (g.data().array() * (T(1) - y->array().square())).matrix());
      });
}

template <typename T> Var<T> softplus(const Var<T> &a) {
  const auto &x = a.value().data().array();
  // log(1 + e^x) = max(x, 0) + log1p(e^-|x|)
  Tensor<T> out(a.shape(),
                (x.max(T(0)) + (-x.abs()).exp().log1p()).matrix());
  check_finite("softplus", out);
  const int ia = a.id();
  return tape_of(a).record(
      std::move(out), {a}, [ia](Tape<T> &t, const Tensor<T> &g) {
        const auto &xv = t.value(ia).data().array();
        const auto sig = (T(1) / (T(1) + (-xv).exp()));
        accumulate(t, ia, (g.data().array() * sig).matrix());
      });
}

template <typename T> Var<T> abs(const Var<T> &a) {
  Tensor<T> out(a.shape(), a.value().data().cwiseAbs());
  const int ia = a.id();
  return tape_of(a).record(
      std::move(out), {a}, [ia](Tape<T> &t, const Tensor<T> &g) {
        const auto &xv = t.value(ia).data().array();
        accumulate(t, ia,
                   (g.data().array() *
                    ((xv > T(0)).template cast<T>() - (xv < T(0)).template cast<T>()))
                       .matrix());
      });
}

template <typename T> Var<T> softmax(const Var<T> &a) {
  if (a.value().rank() < 1) shape_fail("softmax", "needs rank >= 1");
  Tensor<T> out = a.value();
  auto m = out.matrix();
  for (Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  const int ia = a.id();
  auto y = std::make_shared<Tensor<T>>(out);
  return tape_of(a).record(
      std::move(out), {a}, [ia, y](Tape<T> &t, const Tensor<T> &g) {
        if (!t.requires_grad(ia)) return;
        const auto ym = y->matrix();
        const auto gm = g.matrix();
        auto dx = t.grad_buffer(ia).matrix();
        for (Index r = 0; r < ym.rows(); ++r) {
          const T dot = gm.row(r).dot(ym.row(r));
          dx.row(r).array() +=
              ym.row(r).array() * (gm.row(r).array() - dot);
        }
      });
}

template <typename T> Var<T> log_softmax(const Var<T> &a) {
  if (a.value().rank() < 1) shape_fail("log_softmax", "needs rank >= 1");
  Tensor<T> out = a.value();
  auto m = out.matrix();
  for (Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const T mx = row.maxCoeff();
    const T lse = mx + std::log((row.array() - mx).exp().sum());
    row.array() -= lse;
  }
  const int ia = a.id();
  auto y = std::make_shared<Tensor<T>>(out);
  return tape_of(a).record(
      std::move(out), {a}, [ia, y](Tape<T> &t, const Tensor<T> &g) {
        if (!t.requires_grad(ia)) return;
        const auto ym = y->matrix();
        const auto gm = g.matrix();
        auto dx = t.grad_buffer(ia).matrix();
        for (Index r = 0; r < ym.rows(); ++r)
          dx.row(r).array() +=
              gm.row(r).array() - ym.row(r).array().exp() * gm.row(r).sum();
      });
}

template <typename T>
Var<T> layer_norm(const Var<T> &x, const Var<T> &gain, const Var<T> &shift,
                  T eps) {
  require_rank("layer_norm", x, 2);
  if (gain.shape() != Shape{x.dim(1)} || shift.shape() != Shape{x.dim(1)})
    shape_fail("layer_norm", "gain/shift must be [" + std::to_string(x.dim(1)) +
                                 "], input " + shape_string(x.shape()));
  const Index m = x.dim(0), n = x.dim(1);
  auto xhat = std::make_shared<Tensor<T>>(x.value());
  auto inv_std = std::make_shared<typename Tensor<T>::Vector>(m);
  auto xm = xhat->matrix();
  for (Index r = 0; r < m; ++r) {
    const T mu = xm.row(r).mean();
    xm.row(r).array() -= mu;
    const T var = xm.row(r).squaredNorm() / T(n);
    (*inv_std)[r] = T(1) / std::sqrt(var + eps);
    xm.row(r) *= (*inv_std)[r];
  }
  Tensor<T> out = *xhat;
  out.matrix().array().rowwise() *= gain.value().matrix().row(0).array();
  out.matrix().rowwise() += shift.value().matrix().row(0);
  const int ix = x.id(), ig = gain.id(), is = shift.id();
  return tape_of(x).record(
      std::move(out), {x, gain, shift},
      [ix, ig, is, xhat, inv_std, n](Tape<T> &t, const Tensor<T> &g) {
        const auto gm = g.matrix();
        const auto xh = xhat->matrix();
        if (t.requires_grad(ig))
          t.grad_buffer(ig).matrix().row(0) +=
              gm.cwiseProduct(xh).colwise().sum();
        if (t.requires_grad(is))
          t.grad_buffer(is).matrix().row(0) += gm.colwise().sum();
        if (t.requires_grad(ix)) {
          auto dx = t.grad_buffer(ix).matrix();
          const auto gain_row = t.value(ig).matrix().row(0).array();
          for (Index r = 0; r < gm.rows(); ++r) {
            const auto dxh = (gm.row(r).array() * gain_row).eval();
            const T mean_d = dxh.sum() / T(n);
            const T mean_dx = (dxh * xh.row(r).array()).sum() / T(n);
            dx.row(r).array() +=
                (*inv_std)[r] * (dxh - mean_d - xh.row(r).array() * mean_dx);
          }
        }
      });
}

namespace {

struct AxisSplit {
  Index outer, extent, inner;
};

AxisSplit split_axis(const Shape &shape, Index axis) {
  AxisSplit s{1, shape[axis], 1};
  for (Index k = 0; k < axis; ++k) s.outer *= shape[k];
  for (Index k = axis + 1; k < static_cast<Index>(shape.size()); ++k)
    s.inner *= shape[k];
  return s;
}

} // namespace

template <typename T>
Var<T> concat(const std::vector<Var<T>> &parts, Index axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const Shape &first = parts.front().shape();
  if (axis < 0 || axis >= static_cast<Index>(first.size()))
    shape_fail("concat", "axis out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto &p : parts) {
    Shape s = p.shape();
    if (s.size() != first.size())
      shape_fail("concat", "rank mismatch " + shape_string(s) + " vs " +
                               shape_string(first));
    out_shape[axis] += s[axis];
    s[axis] = first[axis];
    if (s != first)
      shape_fail("concat", "incompatible " + shape_string(p.shape()) + " vs " +
                               shape_string(first));
  }
  Tensor<T> out(out_shape);
  const AxisSplit total = split_axis(out_shape, axis);
  std::vector<int> ids;
  std::vector<Index> extents;
  Index offset = 0;
  for (const auto &p : parts) {
    const Index e = p.shape()[axis];
    const T *src = p.value().ptr();
    for (Index o = 0; o < total.outer; ++o)
      std::copy_n(src + o * e * total.inner, e * total.inner,
                  out.ptr() + (o * total.extent + offset) * total.inner);
    offset += e;
    ids.push_back(p.id());
    extents.push_back(e);
  }
  return tape_of(parts.front())
      .record(std::move(out), parts,
              [ids, extents, total](Tape<T> &t, const Tensor<T> &g) {
                Index off = 0;
                for (std::size_t k = 0; k < ids.size(); ++k) {
                  const Index e = extents[k];
                  if (t.requires_grad(ids[k])) {
                    T *dst = t.grad_buffer(ids[k]).ptr();
                    for (Index o = 0; o < total.outer; ++o) {
                      const T *src = g.ptr() + (o * total.extent + off) * total.inner;
                      T *d = dst + o * e * total.inner;
                      for (Index q = 0; q < e * total.inner; ++q) d[q] += src[q];
                    }
                  }
                  off += e;
                }
              });
}

template <typename T>
Var<T> slice(const Var<T> &a, Index axis, Index start, Index length) {
  const Shape &shape = a.shape();
  if (axis < 0 || axis >= static_cast<Index>(shape.size()) || start < 0 ||
      length < 0 || start + length > shape[axis])
    shape_fail("slice", "range [" + std::to_string(start) + ", " +
                            std::to_string(start + length) + ") on axis " +
                            std::to_string(axis) + " of " + shape_string(shape));
  const AxisSplit s = split_axis(shape, axis);
  Shape out_shape = shape;
  out_shape[axis] = length;
  Tensor<T> out(out_shape);
  const T *src = a.value().ptr();
  for (Index o = 0; o < s.outer; ++o)
    std::copy_n(src + (o * s.extent + start) * s.inner, length * s.inner,
                out.ptr() + o * length * s.inner);
  const int ia = a.id();
  return tape_of(a).record(
      std::move(out), {a}, [ia, s, start, length](Tape<T> &t, const Tensor<T> &g) {
        if (!t.requires_grad(ia)) return;
        T *dst = t.grad_buffer(ia).ptr();
        for (Index o = 0; o < s.outer; ++o) {
          T *d = dst + (o * s.extent + start) * s.inner;
          const T *src2 = g.ptr() + o * length * s.inner;
          for (Index q = 0; q < length * s.inner; ++q) d[q] += src2[q];
        }
      });
}

template <typename T> Var<T> reshape(const Var<T> &a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a},
                           [ia](Tape<T> &t, const Tensor<T> &g) {
                             accumulate(t, ia, g.data());
                           });
}

template <typename T> Var<T> sum(const Var<T> &a) {
  Tensor<T> out = Tensor<T>::scalar(a.value().data().sum());
  const int ia = a.id();
  return tape_of(a).record(
      std::move(out), {a}, [ia](Tape<T> &t, const Tensor<T> &g) {
        if (t.requires_grad(ia))
          t.grad_buffer(ia).data().array() += g.item();
      });
}

template <typename T> Var<T> mean(const Var<T> &a) {
  const T n = static_cast<T>(a.size());
  Tensor<T> out = Tensor<T>::scalar(a.value().data().sum() / n);
  const int ia = a.id();
  return tape_of(a).record(
      std::move(out), {a}, [ia, n](Tape<T> &t, const Tensor<T> &g) {
        if (t.requires_grad(ia))
          t.grad_buffer(ia).data().array() += g.item() / n;
      });
}

template <typename T> Var<T> mean_rows(const Var<T> &a) {
  require_rank("mean_rows", a, 2);
  const Index m = a.dim(0);
  Tensor<T> out({a.dim(1)});
  out.matrix().row(0) = a.value().matrix().colwise().mean();
  const int ia = a.id();
  return tape_of(a).record(
      std::move(out), {a}, [ia, m](Tape<T> &t, const Tensor<T> &g) {
        if (t.requires_grad(ia))
          t.grad_buffer(ia).matrix().rowwise() += g.matrix().row(0) / T(m);
      });
}

template <typename T>
Var<T> embedding_lookup(const Var<T> &table, const std::vector<int> &ids) {
  require_rank("embedding_lookup", table, 2);
  const Index vocab = table.dim(0), d = table.dim(1);
  Tensor<T> out({static_cast<Index>(ids.size()), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= vocab)
      shape_fail("embedding_lookup", "id " + std::to_string(ids[r]) +
                                         " outside table " +
                                         shape_string(table.shape()));
    out.matrix().row(r) = table.value().matrix().row(ids[r]);
  }
  const int it = table.id();
  return tape_of(table).record(
      std::move(out), {table}, [it, ids](Tape<T> &t, const Tensor<T> &g) {
        if (!t.requires_grad(it)) return;
        auto dt = t.grad_buffer(it).matrix();
        for (std::size_t r = 0; r < ids.size(); ++r)
          dt.row(ids[r]) += g.matrix().row(r);
      });
}

template <typename T>
Var<T> gather(const Var<T> &a, const std::vector<Index> &indices, Shape shape) {
  if (static_cast<Index>(indices.size()) != shape_size(shape))
    shape_fail("gather", "index count " + std::to_string(indices.size()) +
                             " does not match shape " + shape_string(shape));
  Tensor<T> out(std::move(shape));
  const T *src = a.value().ptr();
  const Index n = a.size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0 || indices[k] >= n)
      shape_fail("gather", "index out of range for " + shape_string(a.shape()));
    out[k] = src[indices[k]];
  }
  const int ia = a.id();
  auto idx = std::make_shared<std::vector<Index>>(indices);
  return tape_of(a).record(
      std::move(out), {a}, [ia, idx](Tape<T> &t, const Tensor<T> &g) {
        if (!t.requires_grad(ia)) return;
        T *dst = t.grad_buffer(ia).ptr();
        for (std::size_t k = 0; k < idx->size(); ++k) dst[(*idx)[k]] += g[k];
      });
}

template <typename T>
Var<T> conv2d(const Var<T> &x, const Var<T> &weight, const Var<T> &bias,
              int stride, int padding) {
  using Matrix = typename Tensor<T>::Matrix;
  require_rank("conv2d", x, 3);
  require_rank("conv2d", weight, 4);
  require_rank("conv2d", bias, 1);
  const Index cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const Index cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin || weight.dim(3) != k || bias.dim(0) != cout)
    shape_fail("conv2d", "input " + shape_string(x.shape()) + " weight " +
                             shape_string(weight.shape()) + " bias " +
                             shape_string(bias.shape()));
  if (stride < 1 || padding < 0 || h + 2 * padding < k || w + 2 * padding < k)
    shape_fail("conv2d", "invalid stride/padding for input " +
                             shape_string(x.shape()));
  const Index ho = (h + 2 * padding - k) / stride + 1;
  const Index wo = (w + 2 * padding - k) / stride + 1;
  const Index patch = cin * k * k, npix = ho * wo;

  auto cols = std::make_shared<Matrix>(Matrix::Zero(patch, npix));
  const T *xs = x.value().ptr();
  for (Index c = 0; c < cin; ++c)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        T *row = cols->data() + ((c * k + ky) * k + kx) * npix;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * stride - padding + kx;
            if (ix >= 0 && ix < w) row[oy * wo + ox] = xs[(c * h + iy) * w + ix];
          }
        }
      }

  Tensor<T> out({cout, ho, wo});
  Eigen::Map<Matrix> om(out.ptr(), cout, npix);
  Eigen::Map<const Matrix> wm(weight.value().ptr(), cout, patch);
  om.noalias() = wm * (*cols);
  om.colwise() += bias.value().data();
  check_finite("conv2d", out);

  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  return tape_of(x).record(
      std::move(out), {x, weight, bias},
      [=](Tape<T> &t, const Tensor<T> &g) {
        Eigen::Map<const Matrix> gm(g.ptr(), cout, npix);
        if (t.requires_grad(iw)) {
          Eigen::Map<Matrix> dw(t.grad_buffer(iw).ptr(), cout, patch);
          dw.noalias() += gm * cols->transpose();
        }
        if (t.requires_grad(ib)) t.grad_buffer(ib).data() += gm.rowwise().sum();
        if (t.requires_grad(ix)) {
          Eigen::Map<const Matrix> wmat(t.value(iw).ptr(), cout, patch);
          Matrix dcols = wmat.transpose() * gm;
          T *dx = t.grad_buffer(ix).ptr();
          for (Index c = 0; c < cin; ++c)
            for (Index ky = 0; ky < k; ++ky)
              for (Index kx = 0; kx < k; ++kx) {
                const T *row = dcols.data() + ((c * k + ky) * k + kx) * npix;
                for (Index oy = 0; oy < ho; ++oy) {
                  const Index iy = oy * stride - padding + ky;
                  if (iy < 0 || iy >= h) continue;
                  for (Index ox = 0; ox < wo; ++ox) {
                    const Index ixx = ox * stride - padding + kx;
                    if (ixx >= 0 && ixx < w)
                      dx[(c * h + iy) * w + ixx] += row[oy * wo + ox];
                  }
                }
              }
        }
      });
}

template <typename T>
Var<T> max_pool2d(const Var<T> &x, int kernel, int stride, int padding) {
  require_rank("max_pool2d", x, 3);
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (kernel < 1 || stride < 1 || padding < 0 || padding >= kernel ||
      h + 2 * padding < kernel || w + 2 * padding < kernel)
    shape_fail("max_pool2d", "invalid window for input " + shape_string(x.shape()));
  const Index ho = (h + 2 * padding - kernel) / stride + 1;
  const Index wo = (w + 2 * padding - kernel) / stride + 1;
  Tensor<T> out({c, ho, wo});
  auto argmax = std::make_shared<std::vector<Index>>(out.size());
  const T *xs = x.value().ptr();
  for (Index ch = 0; ch < c; ++ch)
    for (Index oy = 0; oy < ho; ++oy)
      for (Index ox = 0; ox < wo; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        Index best_at = -1;
        for (Index ky = 0; ky < kernel; ++ky) {
          const Index iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (Index kx = 0; kx < kernel; ++kx) {
            const Index ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= w) continue;
            const Index at = (ch * h + iy) * w + ix;
            if (best_at < 0 || xs[at] > best) {
              best = xs[at];
              best_at = at;
            }
          }
        }
        const Index o = (ch * ho + oy) * wo + ox;
        out[o] = best;
        (*argmax)[o] = best_at;
      }
  const int ix = x.id();
  return tape_of(x).record(
      std::move(out), {x}, [ix, argmax](Tape<T> &t, const Tensor<T> &g) {
        if (!t.requires_grad(ix)) return;
        T *dx = t.grad_buffer(ix).ptr();
        for (std::size_t o = 0; o < argmax->size(); ++o) dx[(*argmax)[o]] += g[o];
      });
}

template <typename T>
Var<T> upsample_nearest(const Var<T> &x, Index height, Index width) {
  require_rank("upsample_nearest", x, 3);
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (height < 1 || width < 1)
    shape_fail("upsample_nearest", "target size must be positive");
  std::vector<Index> idx;
  idx.reserve(c * height * width);
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < height; ++y)
      for (Index xx = 0; xx < width; ++xx)
        idx.push_back((ch * h + y * h / height) * w + xx * w / width);
  return gather(x, idx, {c, height, width});
}

template <typename T>
Var<T> huber(const Var<T> &pred, const Var<T> &target, T delta) {
  require_same("huber", pred, target);
  if (!(delta > T(0))) shape_fail("huber", "delta must be > 0");
  const auto r = (target.value().data() - pred.value().data()).array().eval();
  const T n = static_cast<T>(r.size());
  const auto ar = r.abs();
  const T total =
      (ar <= delta).select(T(0.5) * r.square(), delta * ar - T(0.5) * delta * delta).sum();
  Tensor<T> out = Tensor<T>::scalar(total / n);
  auto slope = std::make_shared<typename Tensor<T>::Vector>(
      r.max(-delta).min(delta).matrix() / n);
  const int ip = pred.id(), it = target.id();
  return tape_of(pred).record(
      std::move(out), {pred, target}, [ip, it, slope](Tape<T> &t, const Tensor<T> &g) {
        accumulate(t, ip, -g.item() * (*slope));
        accumulate(t, it, g.item() * (*slope));
      });
}

#define FLUIDSFORMER_INSTANTIATE(T)                                             \
  template Var<T> matmul(const Var<T> &, const Var<T> &);                       \
  template Var<T> transpose(const Var<T> &);                                    \
  template Var<T> add(const Var<T> &, const Var<T> &);                          \
  template Var<T> sub(const Var<T> &, const Var<T> &);                          \
  template Var<T> mul(const Var<T> &, const Var<T> &);                          \
  template Var<T> scale(const Var<T> &, T);                                     \
  template Var<T> add_scalar(const Var<T> &, T);                                \
  template Var<T> add_bias(const Var<T> &, const Var<T> &);                     \
  template Var<T> add_channel_bias(const Var<T> &, const Var<T> &);             \
  template Var<T> relu(const Var<T> &);                                         \
  template Var<T> tanh(const Var<T> &);                                         \
  template Var<T> softplus(const Var<T> &);                                     \
  template Var<T> abs(const Var<T> &);                                          \
  template Var<T> softmax(const Var<T> &);                                      \
  template Var<T> log_softmax(const Var<T> &);                                  \
  template Var<T> layer_norm(const Var<T> &, const Var<T> &, const Var<T> &, T);\
  template Var<T> concat(const std::vector<Var<T>> &, Index);                   \
  template Var<T> slice(const Var<T> &, Index, Index, Index);                   \
  template Var<T> reshape(const Var<T> &, Shape);                               \
  template Var<T> sum(const Var<T> &);                                          \
  template Var<T> mean(const Var<T> &);                                         \
  template Var<T> mean_rows(const Var<T> &);                                    \
  template Var<T> embedding_lookup(const Var<T> &, const std::vector<int> &);   \
  template Var<T> gather(const Var<T> &, const std::vector<Index> &, Shape);    \
  template Var<T> conv2d(const Var<T> &, const Var<T> &, const Var<T> &, int,   \
                         int);                                                  \
  template Var<T> max_pool2d(const Var<T> &, int, int, int);                    \
  template Var<T> upsample_nearest(const Var<T> &, Index, Index);               \
  template Var<T> huber(const Var<T> &, const Var<T> &, T);

FLUIDSFORMER_INSTANTIATE(float)
FLUIDSFORMER_INSTANTIATE(double)

#undef FLUIDSFORMER_INSTANTIATE

} // namespace ad
} // namespace fluidsformer
