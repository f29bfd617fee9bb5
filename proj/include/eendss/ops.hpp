// Copyright (c) 2026 eendss contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Differentiable primitives. Forward results are recorded on the active
// tape whenever recording is on and any input requires gradients.
// GEMM-shaped work (matmul, im2col'd convolutions) is dispatched to BLAS,
// pinned to one thread so training stays deterministic.

#ifndef EENDSS_OPS_HPP_
#define EENDSS_OPS_HPP_

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <string>
#include <vector>

#include "eendss/tensor.hpp"

extern "C" void openblas_set_num_threads(int);

namespace eendss {

namespace detail {

inline void pin_blas_threads() {
  static std::once_flag flag;
  std::call_once(flag, [] { openblas_set_num_threads(1); });
}

inline void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, float alpha,
                 const float* a, int64_t lda, const float* b, int64_t ldb, float beta,
                 float* c, int64_t ldc) {
  pin_blas_threads();
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

inline void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, double alpha,
                 const double* a, int64_t lda, const double* b, int64_t ldb, double beta,
                 double* c, int64_t ldc) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

template <class T>
bool recording_any(std::initializer_list<const TensorT<T>*> ins) {
  if (!TapeT<T>::active().recording()) return false;
  for (const auto* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

template <class T>
TensorT<T> make_out(Shape s, bool rg) {
  auto t = TensorT<T>::zeros(std::move(s));
  if (rg) t.set_requires_grad();
  return t;
}

inline Shape pad_rank(const Shape& s, size_t rank) {
  Shape out(rank, 1);
  std::copy(s.begin(), s.end(), out.begin() + static_cast<int64_t>(rank - s.size()));
  return out;
}

inline Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  size_t r = std::max(a.size(), b.size());
  Shape pa = pad_rank(a, r), pb = pad_rank(b, r), out(r);
  for (size_t i = 0; i < r; ++i) {
    if (pa[i] == pb[i]) out[i] = pa[i];
    else if (pa[i] == 1) out[i] = pb[i];
    else if (pb[i] == 1) out[i] = pa[i];
    else
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
  }
  return out;
}

// Calls f(io, ia, ib) for every output element of a broadcast binary op.
template <class F>
void bcast_zip(const Shape& so, const Shape& sa, const Shape& sb, F&& f) {
  size_t r = so.size();
  Shape pa = pad_rank(sa, r), pb = pad_rank(sb, r);
  std::vector<int64_t> stra(r), strb(r);
  int64_t acca = 1, accb = 1;
  for (size_t i = r; i-- > 0;) {
    stra[i] = (pa[i] == 1 && so[i] != 1) ? 0 : acca;
    strb[i] = (pb[i] == 1 && so[i] != 1) ? 0 : accb;
    acca *= pa[i];
    accb *= pb[i];
  }
  int64_t total = numel_of(so);
  std::vector<int64_t> idx(r, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t io = 0; io < total; ++io) {
    f(io, ia, ib);
    for (size_t i = r; i-- > 0;) {
      ++idx[i];
      ia += stra[i];
      ib += strb[i];
      if (idx[i] < so[i]) break;
      ia -= stra[i] * so[i];
      ib -= strb[i] * so[i];
      idx[i] = 0;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with numpy-style broadcasting. The shapes that
// occur in hot paths (same-shape, scalar, per-row and per-column affine)
// run tight loops; anything else goes through the generic odometer.
// ---------------------------------------------------------------------------

namespace detail {

enum class BcKind { kSame, kScalarA, kScalarB, kRowB, kColB, kGeneric };

inline BcKind classify(const Shape& sa, const Shape& sb) {
  if (sa == sb) return BcKind::kSame;
  if (numel_of(sb) == 1) return BcKind::kScalarB;
  if (numel_of(sa) == 1) return BcKind::kScalarA;
  if (sa.size() == 2 && sb.size() == 2 && sa[0] == sb[0] && sb[1] == 1) return BcKind::kRowB;
  if (sa.size() == 2 && sb.size() == 2 && sb[0] == 1 && sa[1] == sb[1]) return BcKind::kColB;
  return BcKind::kGeneric;
}

// Calls zip(io, ia, ib) over the output of a broadcast binary op using the
// fast layout when available.
template <class F>
void bcast_dispatch(BcKind kind, const Shape& so, const Shape& sa, const Shape& sb, F&& zip) {
  switch (kind) {
    case BcKind::kSame: {
      const int64_t n = numel_of(so);
      for (int64_t i = 0; i < n; ++i) zip(i, i, i);
      return;
    }
    case BcKind::kScalarB: {
      const int64_t n = numel_of(so);
      for (int64_t i = 0; i < n; ++i) zip(i, i, 0);
      return;
    }
    case BcKind::kScalarA: {
      const int64_t n = numel_of(so);
      for (int64_t i = 0; i < n; ++i) zip(i, 0, i);
      return;
    }
    case BcKind::kRowB: {
      const int64_t rows = so[0], cols = so[1];
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) zip(r * cols + c, r * cols + c, r);
      return;
    }
    case BcKind::kColB: {
      const int64_t rows = so[0], cols = so[1];
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) zip(r * cols + c, r * cols + c, c);
      return;
    }
    case BcKind::kGeneric:
      bcast_zip(so, sa, sb, std::forward<F>(zip));
      return;
  }
}

}  // namespace detail

template <class T, class FwdF, class GradF>
TensorT<T> binary_op(const char* name, const TensorT<T>& a, const TensorT<T>& b, FwdF fwd,
                     GradF grad) {
  Shape so = detail::broadcast_shape(name, a.shape(), b.shape());
  const auto kind = detail::classify(a.shape(), b.shape());
  bool rg = detail::recording_any<T>({&a, &b});
  auto out = detail::make_out<T>(so, rg);
  const T* av = a.value().data();
  const T* bv = b.value().data();
  T* ov = out.value().data();
  detail::bcast_dispatch(kind, so, a.shape(), b.shape(),
                         [&](int64_t io, int64_t ia, int64_t ib) { ov[io] = fwd(av[ia], bv[ib]); });
  if (rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    Shape sa = a.shape(), sb = b.shape();
    TapeT<T>::active().record({an, bn, on}, [an, bn, on, sa, sb, so, kind, grad]() {
      const bool ga = an->rg, gb = bn->rg;
      detail::bcast_dispatch(kind, so, sa, sb, [&](int64_t io, int64_t ia, int64_t ib) {
        T da, db;
        grad(an->v[ia], bn->v[ib], on->v[io], on->g[io], da, db);
        if (ga) an->g[ia] += da;
        if (gb) bn->g[ib] += db;
      });
    });
  }
  return out;
}

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  return binary_op<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](T, T, T, T go, T& da, T& db) { da = go; db = go; });
}

template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  return binary_op<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](T, T, T, T go, T& da, T& db) { da = go; db = -go; });
}

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  return binary_op<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](T x, T y, T, T go, T& da, T& db) { da = go * y; db = go * x; });
}

template <class T>
TensorT<T> div(const TensorT<T>& a, const TensorT<T>& b) {
  return binary_op<T>(
      "div", a, b, [](T x, T y) { return x / y; },
      [](T x, T y, T, T go, T& da, T& db) {
        da = go / y;
        db = -go * x / (y * y);
      });
}

// ---------------------------------------------------------------------------
// Unary ops.
// ---------------------------------------------------------------------------

template <class T, class FwdF, class GradF>
TensorT<T> unary_op(const TensorT<T>& x, FwdF fwd, GradF grad) {
  bool rg = detail::recording_any<T>({&x});
  auto out = detail::make_out<T>(x.shape(), rg);
  const auto& xv = x.value();
  auto& ov = out.value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(xv[i]);
  if (rg) {
    auto xn = x.node(), on = out.node();
    TapeT<T>::active().record({xn, on}, [xn, on, grad]() {
      for (size_t i = 0; i < on->g.size(); ++i) xn->g[i] += grad(xn->v[i], on->v[i]) * on->g[i];
    });
  }
  return out;
}

template <class T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
TensorT<T> relu(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
TensorT<T> tanh_op(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
TensorT<T> exp_op(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
TensorT<T> log_op(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
TensorT<T> sqrt_op(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(1) / (T(2) * y); });
}

template <class T>
TensorT<T> clamp(const TensorT<T>& x, T lo, T hi) {
  return unary_op(
      x, [lo, hi](T v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); });
}

template <class T>
TensorT<T> scale(const TensorT<T>& x, T c) {
  return unary_op(
      x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <class T>
TensorT<T> add_scalar(const TensorT<T>& x, T c) {
  return unary_op(
      x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <class T>
TensorT<T> neg(const TensorT<T>& x) {
  return scale(x, T(-1));
}

// Channel-shared PReLU; `slope` is a single-element learnable tensor.
template <class T>
TensorT<T> prelu(const TensorT<T>& x, const TensorT<T>& slope) {
  if (slope.numel() != 1) throw ShapeError("prelu: slope must be a single element");
  bool rg = detail::recording_any<T>({&x, &slope});
  auto out = detail::make_out<T>(x.shape(), rg);
  const T s = slope.item();
  const auto& xv = x.value();
  auto& ov = out.value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] >= T(0) ? xv[i] : s * xv[i];
  if (rg) {
    auto xn = x.node(), sn = slope.node(), on = out.node();
    TapeT<T>::active().record({xn, sn, on}, [xn, sn, on]() {
      const T sv = sn->v[0];
      double ds = 0.0;
      for (size_t i = 0; i < on->g.size(); ++i) {
        const T go = on->g[i];
        if (xn->rg) xn->g[i] += go * (xn->v[i] >= T(0) ? T(1) : sv);
        if (xn->v[i] < T(0)) ds += static_cast<double>(go) * xn->v[i];
      }
      if (sn->rg) sn->g[0] += static_cast<T>(ds);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops.
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> reshape(const TensorT<T>& x, Shape s) {
  if (numel_of(s) != x.numel())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(s));
  bool rg = detail::recording_any<T>({&x});
  auto out = detail::make_out<T>(std::move(s), rg);
  out.value() = x.value();
  if (rg) {
    auto xn = x.node(), on = out.node();
    TapeT<T>::active().record({xn, on}, [xn, on]() {
      for (size_t i = 0; i < on->g.size(); ++i) xn->g[i] += on->g[i];
    });
  }
  return out;
}

template <class T>
TensorT<T> transpose(const TensorT<T>& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expected 2-D, got " + shape_str(x.shape()));
  const int64_t r = x.dim(0), c = x.dim(1);
  bool rg = detail::recording_any<T>({&x});
  auto out = detail::make_out<T>({c, r}, rg);
  const auto& xv = x.value();
  auto& ov = out.value();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) ov[j * r + i] = xv[i * c + j];
  if (rg) {
    auto xn = x.node(), on = out.node();
    TapeT<T>::active().record({xn, on}, [xn, on, r, c]() {
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) xn->g[i * c + j] += on->g[j * r + i];
    });
  }
  return out;
}

template <class T>
TensorT<T> slice(const TensorT<T>& x, int axis, int64_t start, int64_t len) {
  const auto& s = x.shape();
  if (axis < 0 || axis >= x.rank()) throw ShapeError("slice: bad axis");
  if (start < 0 || len <= 0 || start + len > s[static_cast<size_t>(axis)])
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of " + shape_str(s));
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (int i = axis + 1; i < x.rank(); ++i) inner *= s[static_cast<size_t>(i)];
  const int64_t ax = s[static_cast<size_t>(axis)];
  Shape so = s;
  so[static_cast<size_t>(axis)] = len;
  bool rg = detail::recording_any<T>({&x});
  auto out = detail::make_out<T>(so, rg);
  const auto& xv = x.value();
  auto& ov = out.value();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(&ov[static_cast<size_t>(o * len * inner)],
                &xv[static_cast<size_t>((o * ax + start) * inner)],
                static_cast<size_t>(len * inner) * sizeof(T));
  if (rg) {
    auto xn = x.node(), on = out.node();
    TapeT<T>::active().record({xn, on}, [xn, on, outer, inner, ax, start, len]() {
      for (int64_t o = 0; o < outer; ++o) {
        const T* src = &on->g[static_cast<size_t>(o * len * inner)];
        T* dst = &xn->g[static_cast<size_t>((o * ax + start) * inner)];
        for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

template <class T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) throw ShapeError("concat: bad axis");
  Shape so = parts[0].shape();
  int64_t ax_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != axis && p.dim(i) != so[static_cast<size_t>(i)])
        throw ShapeError("concat: " + shape_str(p.shape()) + " vs " + shape_str(so) +
                         " on axis " + std::to_string(axis));
    ax_total += p.dim(axis);
  }
  so[static_cast<size_t>(axis)] = ax_total;
  bool rg = false;
  if (TapeT<T>::active().recording())
    for (const auto& p : parts) rg = rg || p.requires_grad();
  auto out = detail::make_out<T>(so, rg);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= so[static_cast<size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= so[static_cast<size_t>(i)];
  auto& ov = out.value();
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t ax = p.dim(axis);
    const auto& pv = p.value();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(&ov[static_cast<size_t>((o * ax_total + off) * inner)],
                  &pv[static_cast<size_t>(o * ax * inner)],
                  static_cast<size_t>(ax * inner) * sizeof(T));
    off += ax;
  }
  if (rg) {
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    std::vector<int64_t> axes;
    for (const auto& p : parts) {
      nodes.push_back(p.node());
      axes.push_back(p.dim(axis));
    }
    auto on = out.node();
    auto all = nodes;
    all.push_back(on);
    TapeT<T>::active().record(all, [nodes, axes, on, outer, inner, ax_total]() {
      int64_t off = 0;
      for (size_t pi = 0; pi < nodes.size(); ++pi) {
        const int64_t ax = axes[pi];
        if (nodes[pi]->rg) {
          for (int64_t o = 0; o < outer; ++o) {
            const T* src = &on->g[static_cast<size_t>((o * ax_total + off) * inner)];
            T* dst = &nodes[pi]->g[static_cast<size_t>(o * ax * inner)];
            for (int64_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
          }
        }
        off += ax;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix multiply.
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: " + shape_str(a.shape()) + " @ " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  bool rg = detail::recording_any<T>({&a, &b});
  auto out = detail::make_out<T>({m, n}, rg);
  detail::gemm(false, false, m, n, k, T(1), a.value().data(), k, b.value().data(), n, T(0),
               out.value().data(), n);
  if (rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    TapeT<T>::active().record({an, bn, on}, [an, bn, on, m, n, k]() {
      if (an->rg)
        detail::gemm(false, true, m, k, n, T(1), on->g.data(), n, bn->v.data(), n, T(1),
                     an->g.data(), k);
      if (bn->rg)
        detail::gemm(true, false, k, n, m, T(1), an->v.data(), k, on->g.data(), n, T(1),
                     bn->g.data(), n);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Row-wise softmax and layer normalization (2-D, last dim).
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> softmax_rows(const TensorT<T>& x) {
  if (x.rank() != 2) throw ShapeError("softmax: expected 2-D, got " + shape_str(x.shape()));
  const int64_t r = x.dim(0), c = x.dim(1);
  bool rg = detail::recording_any<T>({&x});
  auto out = detail::make_out<T>(x.shape(), rg);
  const auto& xv = x.value();
  auto& ov = out.value();
  for (int64_t i = 0; i < r; ++i) {
    const T* xi = &xv[static_cast<size_t>(i * c)];
    T* oi = &ov[static_cast<size_t>(i * c)];
    T mx = xi[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      oi[j] = std::exp(xi[j] - mx);
      sum += oi[j];
    }
    const T inv = static_cast<T>(1.0 / sum);
    for (int64_t j = 0; j < c; ++j) oi[j] *= inv;
  }
  if (rg) {
    auto xn = x.node(), on = out.node();
    TapeT<T>::active().record({xn, on}, [xn, on, r, c]() {
      for (int64_t i = 0; i < r; ++i) {
        const T* y = &on->v[static_cast<size_t>(i * c)];
        const T* gy = &on->g[static_cast<size_t>(i * c)];
        T* gx = &xn->g[static_cast<size_t>(i * c)];
        double dot = 0.0;
        for (int64_t j = 0; j < c; ++j) dot += static_cast<double>(gy[j]) * y[j];
        for (int64_t j = 0; j < c; ++j) gx[j] += y[j] * (gy[j] - static_cast<T>(dot));
      }
    });
  }
  return out;
}

// Global layer norm: zero mean / unit variance over every (channel, time)
// position, then per-channel affine. x: (C, L); gamma, beta: (C, 1).
template <class T>
TensorT<T> global_layer_norm(const TensorT<T>& x, const TensorT<T>& gamma,
                             const TensorT<T>& beta, T eps = T(1e-5)) {
  if (x.rank() != 2 || gamma.numel() != x.dim(0) || beta.numel() != x.dim(0))
    throw ShapeError("global_layer_norm: x " + shape_str(x.shape()) + " with affine " +
                     shape_str(gamma.shape()));
  const int64_t channels = x.dim(0), len = x.dim(1), n = channels * len;
  bool rg = detail::recording_any<T>({&x, &gamma, &beta});
  auto out = detail::make_out<T>(x.shape(), rg);
  const T* xd = x.value().data();
  double mu = 0.0;
  for (int64_t i = 0; i < n; ++i) mu += xd[i];
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = xd[i] - mu;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
  T* od = out.value().data();
  const T* gd = gamma.value().data();
  const T* bd = beta.value().data();
  for (int64_t c = 0; c < channels; ++c) {
    const T g = gd[c], bb = bd[c];
    for (int64_t l = 0; l < len; ++l) {
      const int64_t i = c * len + l;
      od[i] = static_cast<T>(g * ((xd[i] - mu) * is) + bb);
    }
  }
  if (rg) {
    auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
    TapeT<T>::active().record({xn, gn, bn, on}, [xn, gn, bn, on, channels, len, mu, is]() {
      const int64_t n = channels * len;
      // dxhat = go * gamma_c; then the usual whole-tensor LN backward
      std::vector<double> dxhat(static_cast<size_t>(n));
      double mean_dx = 0.0, mean_dxx = 0.0;
      for (int64_t c = 0; c < channels; ++c) {
        const double g = gn->v[static_cast<size_t>(c)];
        double dg = 0.0, db = 0.0;
        for (int64_t l = 0; l < len; ++l) {
          const int64_t i = c * len + l;
          const double xh = (xn->v[static_cast<size_t>(i)] - mu) * is;
          const double go = on->g[static_cast<size_t>(i)];
          dxhat[static_cast<size_t>(i)] = go * g;
          mean_dx += go * g;
          mean_dxx += go * g * xh;
          dg += go * xh;
          db += go;
        }
        if (gn->rg) gn->g[static_cast<size_t>(c)] += static_cast<T>(dg);
        if (bn->rg) bn->g[static_cast<size_t>(c)] += static_cast<T>(db);
      }
      if (!xn->rg) return;
      mean_dx /= static_cast<double>(n);
      mean_dxx /= static_cast<double>(n);
      for (int64_t i = 0; i < n; ++i) {
        const double xh = (xn->v[static_cast<size_t>(i)] - mu) * is;
        xn->g[static_cast<size_t>(i)] +=
            static_cast<T>(is * (dxhat[static_cast<size_t>(i)] - mean_dx - xh * mean_dxx));
      }
    });
  }
  return out;
}

// Normalizes each row to zero mean / unit variance; affine transforms are
// composed outside with broadcast mul/add.
template <class T>
TensorT<T> layer_norm_rows(const TensorT<T>& x, T eps = T(1e-5)) {
  if (x.rank() != 2) throw ShapeError("layer_norm: expected 2-D, got " + shape_str(x.shape()));
  const int64_t r = x.dim(0), c = x.dim(1);
  bool rg = detail::recording_any<T>({&x});
  auto out = detail::make_out<T>(x.shape(), rg);
  const auto& xv = x.value();
  auto& ov = out.value();
  std::vector<T> inv_std(static_cast<size_t>(r));
  for (int64_t i = 0; i < r; ++i) {
    const T* xi = &xv[static_cast<size_t>(i * c)];
    double mu = 0.0;
    for (int64_t j = 0; j < c; ++j) mu += xi[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      const double d = xi[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_std[static_cast<size_t>(i)] = static_cast<T>(is);
    T* oi = &ov[static_cast<size_t>(i * c)];
    for (int64_t j = 0; j < c; ++j) oi[j] = static_cast<T>((xi[j] - mu) * is);
  }
  if (rg) {
    auto xn = x.node(), on = out.node();
    TapeT<T>::active().record({xn, on}, [xn, on, r, c, inv_std]() {
      for (int64_t i = 0; i < r; ++i) {
        const T* y = &on->v[static_cast<size_t>(i * c)];
        const T* gy = &on->g[static_cast<size_t>(i * c)];
        T* gx = &xn->g[static_cast<size_t>(i * c)];
        double mg = 0.0, mgy = 0.0;
        for (int64_t j = 0; j < c; ++j) {
          mg += gy[j];
          mgy += static_cast<double>(gy[j]) * y[j];
        }
        mg /= static_cast<double>(c);
        mgy /= static_cast<double>(c);
        const T is = inv_std[static_cast<size_t>(i)];
        for (int64_t j = 0; j < c; ++j)
          gx[j] += is * static_cast<T>(gy[j] - mg - y[j] * mgy);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions (64-bit accumulation).
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> sum_all(const TensorT<T>& x) {
  bool rg = detail::recording_any<T>({&x});
  double acc = 0.0;
  for (T v : x.value()) acc += v;
  auto out = detail::make_out<T>({1}, rg);
  out.value()[0] = static_cast<T>(acc);
  if (rg) {
    auto xn = x.node(), on = out.node();
    TapeT<T>::active().record({xn, on}, [xn, on]() {
      const T go = on->g[0];
      for (auto& g : xn->g) g += go;
    });
  }
  return out;
}

template <class T>
TensorT<T> mean_all(const TensorT<T>& x) {
  const T inv = static_cast<T>(1.0 / static_cast<double>(x.numel()));
  return scale(sum_all(x), inv);
}

// Binary cross entropy between probabilities p and constant 0/1 targets y.
// Probs are clamped to [1e-7, 1-1e-7] in double before the logs, so fp32
// saturation at exactly 0 or 1 cannot produce infinities.
enum class BceReduce { kSum, kMean };

template <class T>
TensorT<T> bce_loss(const TensorT<T>& p, const std::vector<T>& y, BceReduce reduce) {
  if (static_cast<int64_t>(y.size()) != p.numel())
    throw ShapeError("bce: " + std::to_string(y.size()) + " targets for " +
                     shape_str(p.shape()));
  constexpr double kEps = 1e-7;
  bool rg = detail::recording_any<T>({&p});
  const auto& pv = p.value();
  double acc = 0.0;
  for (size_t i = 0; i < pv.size(); ++i) {
    const double ph = std::min(std::max(static_cast<double>(pv[i]), kEps), 1.0 - kEps);
    acc -= y[i] * std::log(ph) + (1.0 - y[i]) * std::log(1.0 - ph);
  }
  const double norm = reduce == BceReduce::kMean ? 1.0 / static_cast<double>(pv.size()) : 1.0;
  auto out = detail::make_out<T>({1}, rg);
  out.value()[0] = static_cast<T>(acc * norm);
  if (rg) {
    auto pn = p.node(), on = out.node();
    TapeT<T>::active().record({pn, on}, [pn, on, y, norm]() {
      const double go = on->g[0] * norm;
      for (size_t i = 0; i < pn->v.size(); ++i) {
        const double pd = pn->v[i];
        if (pd <= kEps || pd >= 1.0 - kEps) continue;  // clamp region: zero slope
        pn->g[i] += static_cast<T>(go * (pd - y[i]) / (pd * (1.0 - pd)));
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// 1-D convolutions. x: (C_in, L); w: (C_out, C_in/groups, K); b: (C_out) or
// empty. Output length floor((L + 2*pad - dilation*(K-1) - 1)/stride) + 1.
// ---------------------------------------------------------------------------

namespace detail {

inline int64_t conv_out_len(const char* op, int64_t L, int64_t K, int64_t stride, int64_t dil,
                            int64_t pad) {
  const int64_t span = dil * (K - 1) + 1;
  const int64_t lout = (L + 2 * pad - span) / stride + 1;
  if (L + 2 * pad < span || lout < 1)
    throw ShapeError(std::string(op) + ": input length " + std::to_string(L) +
                     " too short for kernel " + std::to_string(K) + " (dilation " +
                     std::to_string(dil) + ")");
  return lout;
}

template <class T>
void im2col(const T* x, int64_t c0, int64_t cin_g, int64_t L, int64_t K, int64_t stride,
            int64_t dil, int64_t pad, int64_t lout, T* col) {
  for (int64_t ci = 0; ci < cin_g; ++ci) {
    const T* xc = x + (c0 + ci) * L;
    for (int64_t k = 0; k < K; ++k) {
      T* row = col + (ci * K + k) * lout;
      const int64_t off = k * dil - pad;
      for (int64_t t = 0; t < lout; ++t) {
        const int64_t src = t * stride + off;
        row[t] = (src >= 0 && src < L) ? xc[src] : T(0);
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, int64_t c0, int64_t cin_g, int64_t L, int64_t K, int64_t stride,
                int64_t dil, int64_t pad, int64_t lout, T* gx) {
  for (int64_t ci = 0; ci < cin_g; ++ci) {
    T* gc = gx + (c0 + ci) * L;
    for (int64_t k = 0; k < K; ++k) {
      const T* row = col + (ci * K + k) * lout;
      const int64_t off = k * dil - pad;
      for (int64_t t = 0; t < lout; ++t) {
        const int64_t dst = t * stride + off;
        if (dst >= 0 && dst < L) gc[dst] += row[t];
      }
    }
  }
}

}  // namespace detail

template <class T>
TensorT<T> conv1d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  int64_t stride = 1, int64_t dilation = 1, int64_t pad = 0,
                  int64_t groups = 1) {
  if (x.rank() != 2 || w.rank() != 3)
    throw ShapeError("conv1d: expected x (C_in,L) and w (C_out,C_in/g,K), got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  const int64_t cin = x.dim(0), L = x.dim(1);
  const int64_t cout = w.dim(0), cin_g = w.dim(1), K = w.dim(2);
  if (cin % groups != 0 || cout % groups != 0 || cin_g != cin / groups)
    throw ShapeError("conv1d: channel/group mismatch: x " + shape_str(x.shape()) + ", w " +
                     shape_str(w.shape()) + ", groups " + std::to_string(groups));
  const bool has_bias = b.defined();
  if (has_bias && b.numel() != cout) throw ShapeError("conv1d: bias size != C_out");
  const int64_t lout = detail::conv_out_len("conv1d", L, K, stride, dilation, pad);
  const int64_t cout_g = cout / groups;

  bool rg = has_bias ? detail::recording_any<T>({&x, &w, &b}) : detail::recording_any<T>({&x, &w});
  auto out = detail::make_out<T>({cout, lout}, rg);
  const T* xd = x.value().data();
  const T* wd = w.value().data();
  T* od = out.value().data();

  const bool pointwise = (K == 1 && stride == 1 && dilation == 1 && pad == 0 && groups == 1);
  const bool depthwise = (groups == cin && cout == cin && cin_g == 1);
  if (pointwise) {
    detail::gemm(false, false, cout, lout, cin, T(1), wd, cin, xd, L, T(0), od, lout);
  } else if (depthwise) {
    for (int64_t c = 0; c < cin; ++c) {
      const T* xc = xd + c * L;
      T* oc = od + c * lout;
      std::fill(oc, oc + lout, T(0));
      for (int64_t k = 0; k < K; ++k) {
        const T wk = wd[c * K + k];
        const int64_t off = k * dilation - pad;
        const int64_t t0 = std::max<int64_t>(0, (-off + stride - 1) / stride);
        for (int64_t t = t0; t < lout; ++t) {
          const int64_t src = t * stride + off;
          if (src >= L) break;
          oc[t] += wk * xc[src];
        }
      }
    }
  } else {
    std::vector<T> col(static_cast<size_t>(cin_g * K * lout));
    for (int64_t g = 0; g < groups; ++g) {
      detail::im2col(xd, g * cin_g, cin_g, L, K, stride, dilation, pad, lout, col.data());
      detail::gemm(false, false, cout_g, lout, cin_g * K, T(1), wd + g * cout_g * cin_g * K,
                   cin_g * K, col.data(), lout, T(0), od + g * cout_g * lout, lout);
    }
  }
  if (has_bias) {
    const T* bd = b.value().data();
    for (int64_t c = 0; c < cout; ++c) {
      T* oc = od + c * lout;
      for (int64_t t = 0; t < lout; ++t) oc[t] += bd[c];
    }
  }

  if (rg) {
    auto xn = x.node(), wn = w.node(), on = out.node();
    auto bn = has_bias ? b.node() : nullptr;
    std::vector<std::shared_ptr<TensorNode<T>>> nodes{xn, wn, on};
    if (bn) nodes.push_back(bn);
    TapeT<T>::active().record(nodes, [xn, wn, bn, on, cin, L, cout, cin_g, K, stride, dilation,
                                      pad, groups, lout, cout_g, pointwise, depthwise]() {
      const T* go = on->g.data();
      if (bn && bn->rg) {
        for (int64_t c = 0; c < cout; ++c) {
          double acc = 0.0;
          for (int64_t t = 0; t < lout; ++t) acc += go[c * lout + t];
          bn->g[static_cast<size_t>(c)] += static_cast<T>(acc);
        }
      }
      if (pointwise) {
        if (wn->rg)
          detail::gemm(false, true, cout, cin, lout, T(1), go, lout, xn->v.data(), L, T(1),
                       wn->g.data(), cin);
        if (xn->rg)
          detail::gemm(true, false, cin, lout, cout, T(1), wn->v.data(), cin, go, lout, T(1),
                       xn->g.data(), L);
        return;
      }
      if (depthwise) {
        for (int64_t c = 0; c < cin; ++c) {
          const T* xc = xn->v.data() + c * L;
          const T* gc = go + c * lout;
          for (int64_t k = 0; k < K; ++k) {
            const int64_t off = k * dilation - pad;
            const int64_t t0 = std::max<int64_t>(0, (-off + stride - 1) / stride);
            if (wn->rg) {
              double acc = 0.0;
              for (int64_t t = t0; t < lout; ++t) {
                const int64_t src = t * stride + off;
                if (src >= L) break;
                acc += static_cast<double>(gc[t]) * xc[src];
              }
              wn->g[static_cast<size_t>(c * K + k)] += static_cast<T>(acc);
            }
            if (xn->rg) {
              const T wk = wn->v[static_cast<size_t>(c * K + k)];
              T* gx = xn->g.data() + c * L;
              for (int64_t t = t0; t < lout; ++t) {
                const int64_t src = t * stride + off;
                if (src >= L) break;
                gx[src] += wk * gc[t];
              }
            }
          }
        }
        return;
      }
      std::vector<T> col(static_cast<size_t>(cin_g * K * lout));
      std::vector<T> gcol(static_cast<size_t>(cin_g * K * lout));
      for (int64_t g = 0; g < groups; ++g) {
        if (wn->rg) {
          detail::im2col(xn->v.data(), g * cin_g, cin_g, L, K, stride, dilation, pad, lout,
                         col.data());
          detail::gemm(false, true, cout_g, cin_g * K, lout, T(1), go + g * cout_g * lout, lout,
                       col.data(), lout, T(1), wn->g.data() + g * cout_g * cin_g * K, cin_g * K);
        }
        if (xn->rg) {
          detail::gemm(true, false, cin_g * K, lout, cout_g, T(1),
                       wn->v.data() + g * cout_g * cin_g * K, cin_g * K, go + g * cout_g * lout,
                       lout, T(0), gcol.data(), lout);
          detail::col2im_add(gcol.data(), g * cin_g, cin_g, L, K, stride, dilation, pad, lout,
                             xn->g.data());
        }
      }
    });
  }
  return out;
}

// Transposed 1-D convolution. x: (C_in, L); w: (C_in, C_out, K); output
// (C_out, (L-1)*stride + K).
template <class T>
TensorT<T> conv_transpose1d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                            int64_t stride = 1) {
  if (x.rank() != 2 || w.rank() != 3 || x.dim(0) != w.dim(0))
    throw ShapeError("conv_transpose1d: x " + shape_str(x.shape()) + " vs w " +
                     shape_str(w.shape()));
  const int64_t cin = x.dim(0), L = x.dim(1), cout = w.dim(1), K = w.dim(2);
  const bool has_bias = b.defined();
  if (has_bias && b.numel() != cout) throw ShapeError("conv_transpose1d: bias size != C_out");
  const int64_t lout = (L - 1) * stride + K;

  bool rg = has_bias ? detail::recording_any<T>({&x, &w, &b}) : detail::recording_any<T>({&x, &w});
  auto out = detail::make_out<T>({cout, lout}, rg);

  // Repack w as (C_out*K, C_in) so the forward is one GEMM plus scatter.
  std::vector<T> wr(static_cast<size_t>(cout * K * cin));
  const T* wd = w.value().data();
  for (int64_t ci = 0; ci < cin; ++ci)
    for (int64_t co = 0; co < cout; ++co)
      for (int64_t k = 0; k < K; ++k)
        wr[static_cast<size_t>((co * K + k) * cin + ci)] =
            wd[static_cast<size_t>(ci * cout * K + co * K + k)];

  std::vector<T> tmp(static_cast<size_t>(cout * K * L));
  detail::gemm(false, false, cout * K, L, cin, T(1), wr.data(), cin, x.value().data(), L, T(0),
               tmp.data(), L);
  T* od = out.value().data();
  for (int64_t co = 0; co < cout; ++co) {
    T* oc = od + co * lout;
    for (int64_t k = 0; k < K; ++k) {
      const T* row = tmp.data() + (co * K + k) * L;
      for (int64_t t = 0; t < L; ++t) oc[t * stride + k] += row[t];
    }
    if (has_bias) {
      const T bc = b.value()[static_cast<size_t>(co)];
      for (int64_t t = 0; t < lout; ++t) oc[t] += bc;
    }
  }

  if (rg) {
    auto xn = x.node(), wn = w.node(), on = out.node();
    auto bn = has_bias ? b.node() : nullptr;
    std::vector<std::shared_ptr<TensorNode<T>>> nodes{xn, wn, on};
    if (bn) nodes.push_back(bn);
    TapeT<T>::active().record(nodes, [xn, wn, bn, on, wr, cin, L, cout, K, stride, lout]() {
      const T* go = on->g.data();
      if (bn && bn->rg) {
        for (int64_t co = 0; co < cout; ++co) {
          double acc = 0.0;
          for (int64_t t = 0; t < lout; ++t) acc += go[co * lout + t];
          bn->g[static_cast<size_t>(co)] += static_cast<T>(acc);
        }
      }
      // dtmp[(co*K+k), t] = gout[co, t*stride + k]
      std::vector<T> gtmp(static_cast<size_t>(cout * K * L));
      for (int64_t co = 0; co < cout; ++co)
        for (int64_t k = 0; k < K; ++k) {
          T* row = gtmp.data() + (co * K + k) * L;
          const T* oc = go + co * lout;
          for (int64_t t = 0; t < L; ++t) row[t] = oc[t * stride + k];
        }
      if (xn->rg)
        detail::gemm(true, false, cin, L, cout * K, T(1), wr.data(), cin, gtmp.data(), L, T(1),
                     xn->g.data(), L);
      if (wn->rg) {
        std::vector<T> gwr(static_cast<size_t>(cout * K * cin));
        detail::gemm(false, true, cout * K, cin, L, T(1), gtmp.data(), L, xn->v.data(), L, T(0),
                     gwr.data(), cin);
        for (int64_t ci = 0; ci < cin; ++ci)
          for (int64_t co = 0; co < cout; ++co)
            for (int64_t k = 0; k < K; ++k)
              wn->g[static_cast<size_t>(ci * cout * K + co * K + k)] +=
                  gwr[static_cast<size_t>((co * K + k) * cin + ci)];
      }
    });
  }
  return out;
}

}  // namespace eendss

#endif  // EENDSS_OPS_HPP_
