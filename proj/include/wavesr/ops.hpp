#pragma once

// Differentiable operation library over Tensor<T>.
//
// Every vjp is expressed with ops from this file (or captures constants such
// as pooling indices), which keeps the op set closed under differentiation:
// gradients of gradients stay exact. Convolution needs its two adjoints
// (grad-input, grad-weight) as first-class ops for that closure property.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "wavesr/tensor.hpp"

namespace wavesr {

enum class Padding { Same, Valid };
enum class ResizeMode { Nearest, Bicubic };
enum class Activation { Relu, LeakyRelu, Sigmoid };

namespace ops {

template <typename T> Tensor<T> add(const Tensor<T>&, const Tensor<T>&);
template <typename T> Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);
template <typename T> Tensor<T> neg(const Tensor<T>&);
template <typename T> Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);
template <typename T> Tensor<T> div(const Tensor<T>&, const Tensor<T>&);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>&, T);
template <typename T> Tensor<T> add_scalar(const Tensor<T>&, T);
template <typename T> Tensor<T> square(const Tensor<T>&);
template <typename T> Tensor<T> sqrt_t(const Tensor<T>&);
template <typename T> Tensor<T> sigmoid(const Tensor<T>&);
template <typename T> Tensor<T> sum_all(const Tensor<T>&);
template <typename T> Tensor<T> broadcast_full(const Tensor<T>&, const Shape&);
template <typename T> Tensor<T> sum_chw(const Tensor<T>&);
template <typename T> Tensor<T> broadcast_chw(const Tensor<T>&, const Shape&);
template <typename T> Tensor<T> sum_lastdim(const Tensor<T>&);
template <typename T> Tensor<T> broadcast_lastdim(const Tensor<T>&, int);
template <typename T> Tensor<T> softmax_lastdim(const Tensor<T>&);
template <typename T> Tensor<T> reshape(const Tensor<T>&, const Shape&);
template <typename T> Tensor<T> transpose_last2(const Tensor<T>&);
template <typename T> Tensor<T> slice_ch(const Tensor<T>&, int, int);
template <typename T> Tensor<T> embed_ch(const Tensor<T>&, int, int);
template <typename T> Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);
template <typename T> Tensor<T> pad2d(const Tensor<T>&, int, int, int, int);
template <typename T> Tensor<T> crop2d(const Tensor<T>&, int, int, int, int);
template <typename T> Tensor<T> sum_over_nhw(const Tensor<T>&);
template <typename T> Tensor<T> broadcast_c(const Tensor<T>&, const Shape&);
template <typename T> Tensor<T> sum_rows(const Tensor<T>&);
template <typename T> Tensor<T> broadcast_rows(const Tensor<T>&, int);
template <typename T> Tensor<T> sum_ch_keep(const Tensor<T>&);
template <typename T> Tensor<T> bcast_ch(const Tensor<T>&, int);
template <typename T> Tensor<T> avg_hw(const Tensor<T>&);
template <typename T> Tensor<T> spread_hw(const Tensor<T>&, int, int);
template <typename T> struct TapPlan;
template <typename T>
Tensor<T> resize_with_plans(const Tensor<T>&, int, int, const std::shared_ptr<TapPlan<T>>&,
                            const std::shared_ptr<TapPlan<T>>&);
template <typename T> Tensor<T> haar_dwt2_op(const Tensor<T>&);
template <typename T> Tensor<T> haar_idwt2_op(const Tensor<T>&);

// --- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("add " + a.shape().str() + " vs " + b.shape().str());
  std::vector<T> v(a.numel());
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
  return Tensor<T>::make_op("add", a.shape(), std::move(v), {a, b},
                            {[](const Tensor<T>& g) { return g; },
                             [](const Tensor<T>& g) { return g; }});
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("sub " + a.shape().str() + " vs " + b.shape().str());
  std::vector<T> v(a.numel());
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
  return Tensor<T>::make_op("sub", a.shape(), std::move(v), {a, b},
                            {[](const Tensor<T>& g) { return g; },
                             [](const Tensor<T>& g) { return neg(g); }});
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -av[i];
  return Tensor<T>::make_op("neg", a.shape(), std::move(v), {a},
                            {[](const Tensor<T>& g) { return neg(g); }});
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("mul " + a.shape().str() + " vs " + b.shape().str());
  std::vector<T> v(a.numel());
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  return Tensor<T>::make_op("mul", a.shape(), std::move(v), {a, b},
                            {[b](const Tensor<T>& g) { return mul(g, b); },
                             [a](const Tensor<T>& g) { return mul(g, a); }});
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("div shapes differ");
  std::vector<T> v(a.numel());
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] / bv[i];
  return Tensor<T>::make_op("div", a.shape(), std::move(v), {a, b},
                            {[b](const Tensor<T>& g) { return div(g, b); },
                             [a, b](const Tensor<T>& g) {
                               return neg(div(mul(g, a), mul(b, b)));
                             }});
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * c;
  return Tensor<T>::make_op("mul_scalar", a.shape(), std::move(v), {a},
                            {[c](const Tensor<T>& g) { return mul_scalar(g, c); }});
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + c;
  return Tensor<T>::make_op("add_scalar", a.shape(), std::move(v), {a},
                            {[](const Tensor<T>& g) { return g; }});
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * av[i];
  return Tensor<T>::make_op("square", a.shape(), std::move(v), {a},
                            {[a](const Tensor<T>& g) { return mul_scalar(mul(g, a), T(2)); }});
}

template <typename T>
Tensor<T> sqrt_t(const Tensor<T>& a) {
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sqrt(av[i]);
  // vjp recomputes sqrt(a) as a fresh node so higher derivatives chain through a
  return Tensor<T>::make_op("sqrt", a.shape(), std::move(v), {a},
                            {[a](const Tensor<T>& g) {
                              return div(mul_scalar(g, T(0.5)), sqrt_t(a));
                            }});
}

// scale by a learned 1-element tensor
template <typename T>
Tensor<T> mul_by_scalar_tensor(const Tensor<T>& x, const Tensor<T>& s) {
  if (s.numel() != 1) throw ShapeMismatch("scalar tensor expected, got " + s.shape().str());
  T c = s.values()[0];
  std::vector<T> v(x.numel());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = xv[i] * c;
  return Tensor<T>::make_op("mul_by_scalar_tensor", x.shape(), std::move(v), {x, s},
                            {[s](const Tensor<T>& g) { return mul_by_scalar_tensor(g, s); },
                             [x](const Tensor<T>& g) { return sum_all(mul(g, x)); }});
}

// --- activations -------------------------------------------------------------

// g * (xref > 0 ? 1 : slope); xref enters as a constant mask (the second
// derivative of a piecewise-linear activation is zero a.e.)
template <typename T>
Tensor<T> slope_mask_mul(const Tensor<T>& g, const Tensor<T>& xref, T slope) {
  std::vector<T> v(g.numel());
  const auto &gv = g.values(), &xv = xref.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = xv[i] > T(0) ? gv[i] : gv[i] * slope;
  return Tensor<T>::make_op("slope_mask_mul", g.shape(), std::move(v), {g},
                            {[xref, slope](const Tensor<T>& v2) {
                              return slope_mask_mul(v2, xref, slope);
                            }});
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] > T(0) ? av[i] : T(0);
  return Tensor<T>::make_op("relu", a.shape(), std::move(v), {a},
                            {[a](const Tensor<T>& g) { return slope_mask_mul(g, a, T(0)); }});
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  if (!(slope > T(0) && slope < T(1))) throw ShapeMismatch("leaky_relu slope must be in (0,1)");
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] > T(0) ? av[i] : av[i] * slope;
  return Tensor<T>::make_op("leaky_relu", a.shape(), std::move(v), {a},
                            {[a, slope](const Tensor<T>& g) { return slope_mask_mul(g, a, slope); }});
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    T x = av[i];
    v[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
  }
  return Tensor<T>::make_op("sigmoid", a.shape(), std::move(v), {a},
                            {[a](const Tensor<T>& g) {
                              auto y = sigmoid(a);  // recompute in-graph
                              return mul(mul(g, y), add_scalar(neg(y), T(1)));
                            }});
}

// --- reductions and broadcasts ----------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T acc = 0;
  for (T x : a.values()) acc += x;
  Shape in = a.shape();
  return Tensor<T>::make_op("sum_all", Shape{1}, {acc}, {a},
                            {[in](const Tensor<T>& g) { return broadcast_full(g, in); }});
}

template <typename T>
Tensor<T> broadcast_full(const Tensor<T>& s, const Shape& target) {
  if (s.numel() != 1) throw ShapeMismatch("broadcast_full expects scalar");
  T c = s.values()[0];
  return Tensor<T>::make_op("broadcast_full", target, std::vector<T>(target.numel(), c), {s},
                            {[](const Tensor<T>& g) { return sum_all(g); }});
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return mul_scalar(sum_all(a), T(1) / static_cast<T>(a.numel()));
}

// (N,C,H,W) -> (N): per-sample sum over channels and space
template <typename T>
Tensor<T> sum_chw(const Tensor<T>& a) {
  if (a.shape().rank != 4) throw ShapeMismatch("sum_chw expects NCHW");
  int n = a.shape()[0];
  std::size_t per = a.numel() / n;
  std::vector<T> v(n, T(0));
  const auto& av = a.values();
  for (int i = 0; i < n; ++i) {
    T acc = 0;
    for (std::size_t j = 0; j < per; ++j) acc += av[i * per + j];
    v[i] = acc;
  }
  Shape in = a.shape();
  return Tensor<T>::make_op("sum_chw", Shape{n}, std::move(v), {a},
                            {[in](const Tensor<T>& g) { return broadcast_chw(g, in); }});
}

template <typename T>
Tensor<T> broadcast_chw(const Tensor<T>& s, const Shape& target) {
  if (target.rank != 4 || s.shape().rank != 1 || s.shape()[0] != target[0])
    throw ShapeMismatch("broadcast_chw shape mismatch");
  int n = target[0];
  std::size_t per = target.numel() / n;
  std::vector<T> v(target.numel());
  const auto& sv = s.values();
  for (int i = 0; i < n; ++i)
    for (std::size_t j = 0; j < per; ++j) v[i * per + j] = sv[i];
  return Tensor<T>::make_op("broadcast_chw", target, std::move(v), {s},
                            {[](const Tensor<T>& g) { return sum_chw(g); }});
}

// sum over the last dimension, keeping it as size 1
template <typename T>
Tensor<T> sum_lastdim(const Tensor<T>& a) {
  Shape s = a.shape();
  if (s.rank < 1) throw ShapeMismatch("sum_lastdim needs rank >= 1");
  int m = s[s.rank - 1];
  Shape out = s;
  out[out.rank - 1] = 1;
  std::size_t rows = a.numel() / m;
  std::vector<T> v(rows);
  const auto& av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (int j = 0; j < m; ++j) acc += av[r * m + j];
    v[r] = acc;
  }
  return Tensor<T>::make_op("sum_lastdim", out, std::move(v), {a},
                            {[m](const Tensor<T>& g) { return broadcast_lastdim(g, m); }});
}

template <typename T>
Tensor<T> broadcast_lastdim(const Tensor<T>& a, int m) {
  Shape s = a.shape();
  if (s[s.rank - 1] != 1) throw ShapeMismatch("broadcast_lastdim expects trailing dim 1");
  Shape out = s;
  out[out.rank - 1] = m;
  std::size_t rows = a.numel();
  std::vector<T> v(rows * m);
  const auto& av = a.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (int j = 0; j < m; ++j) v[r * m + j] = av[r];
  return Tensor<T>::make_op("broadcast_lastdim", out, std::move(v), {a},
                            {[](const Tensor<T>& g) { return sum_lastdim(g); }});
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& a) {
  Shape s = a.shape();
  int m = s[s.rank - 1];
  std::size_t rows = a.numel() / m;
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = av.data() + r * m;
    T* out = v.data() + r * m;
    T mx = in[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, in[j]);
    T sum = 0;
    for (int j = 0; j < m; ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    T inv = T(1) / sum;
    for (int j = 0; j < m; ++j) out[j] *= inv;
  }
  return Tensor<T>::make_op("softmax", s, std::move(v), {a},
                            {[a, m](const Tensor<T>& g) {
                              auto y = softmax_lastdim(a);  // recompute in-graph
                              auto dot = sum_lastdim(mul(g, y));
                              return mul(y, sub(g, broadcast_lastdim(dot, m)));
                            }});
}

// --- shape ops ---------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& target) {
  if (target.numel() != a.numel())
    throw ShapeMismatch("reshape " + a.shape().str() + " -> " + target.str());
  Shape in = a.shape();
  return Tensor<T>::make_op("reshape", target, a.values(), {a},
                            {[in](const Tensor<T>& g) { return reshape(g, in); }});
}

// swap the last two dims of a rank-2 or rank-3 tensor
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& a) {
  Shape s = a.shape();
  if (s.rank < 2) throw ShapeMismatch("transpose_last2 needs rank >= 2");
  int m = s[s.rank - 2], n = s[s.rank - 1];
  int b = static_cast<int>(a.numel()) / (m * n);
  Shape out = s;
  out[out.rank - 2] = n;
  out[out.rank - 1] = m;
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (int bi = 0; bi < b; ++bi) {
    const T* in = av.data() + static_cast<std::size_t>(bi) * m * n;
    T* o = v.data() + static_cast<std::size_t>(bi) * m * n;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) o[j * m + i] = in[i * n + j];
  }
  return Tensor<T>::make_op("transpose_last2", out, std::move(v), {a},
                            {[](const Tensor<T>& g) { return transpose_last2(g); }});
}

// concat along the channel axis of NCHW tensors
template <typename T>
Tensor<T> concat_ch(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_ch of nothing");
  Shape s0 = parts[0].shape();
  if (s0.rank != 4) throw ShapeMismatch("concat_ch expects NCHW");
  int n = s0[0], h = s0[2], w = s0[3];
  int ctot = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.rank != 4 || s[0] != n || s[2] != h || s[3] != w)
      throw ShapeMismatch("concat_ch incompatible part " + s.str());
    ctot += s[1];
  }
  Shape out{n, ctot, h, w};
  std::vector<T> v(out.numel());
  std::size_t plane = static_cast<std::size_t>(h) * w;
  int coff = 0;
  std::vector<int> offsets;
  for (const auto& p : parts) {
    offsets.push_back(coff);
    int c = p.shape()[1];
    const auto& pv = p.values();
    for (int ni = 0; ni < n; ++ni)
      std::copy(pv.begin() + static_cast<std::ptrdiff_t>(ni) * c * plane,
                pv.begin() + static_cast<std::ptrdiff_t>(ni + 1) * c * plane,
                v.begin() + (static_cast<std::size_t>(ni) * ctot + coff) * plane);
    coff += c;
  }
  std::vector<Tensor<T>> parents = parts;
  std::vector<typename Tensor<T>::Vjp> vjps;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    int c0 = offsets[i], cn = parts[i].shape()[1];
    vjps.push_back([c0, cn](const Tensor<T>& g) { return slice_ch(g, c0, cn); });
  }
  return Tensor<T>::make_op("concat_ch", out, std::move(v), std::move(parents), std::move(vjps));
}

template <typename T>
Tensor<T> slice_ch(const Tensor<T>& a, int c0, int cn) {
  Shape s = a.shape();
  if (s.rank != 4 || c0 < 0 || c0 + cn > s[1]) throw ShapeMismatch("slice_ch out of range");
  int n = s[0], c = s[1], h = s[2], w = s[3];
  Shape out{n, cn, h, w};
  std::vector<T> v(out.numel());
  std::size_t plane = static_cast<std::size_t>(h) * w;
  const auto& av = a.values();
  for (int ni = 0; ni < n; ++ni)
    std::copy(av.begin() + (static_cast<std::size_t>(ni) * c + c0) * plane,
              av.begin() + (static_cast<std::size_t>(ni) * c + c0 + cn) * plane,
              v.begin() + static_cast<std::size_t>(ni) * cn * plane);
  return Tensor<T>::make_op("slice_ch", out, std::move(v), {a},
                            {[c0, c](const Tensor<T>& g) { return embed_ch(g, c0, c); }});
}

template <typename T>
Tensor<T> embed_ch(const Tensor<T>& a, int c0, int ctot) {
  Shape s = a.shape();
  int n = s[0], cn = s[1], h = s[2], w = s[3];
  Shape out{n, ctot, h, w};
  std::vector<T> v(out.numel(), T(0));
  std::size_t plane = static_cast<std::size_t>(h) * w;
  const auto& av = a.values();
  for (int ni = 0; ni < n; ++ni)
    std::copy(av.begin() + static_cast<std::size_t>(ni) * cn * plane,
              av.begin() + static_cast<std::size_t>(ni + 1) * cn * plane,
              v.begin() + (static_cast<std::size_t>(ni) * ctot + c0) * plane);
  return Tensor<T>::make_op("embed_ch", out, std::move(v), {a},
                            {[c0, cn](const Tensor<T>& g) { return slice_ch(g, c0, cn); }});
}

// --- matmul -------------------------------------------------------------------

// (M,K)@(K,N) or batched (B,M,K)@(B,K,N)
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  Shape sa = a.shape(), sb = b.shape();
  if (sa.rank != sb.rank || (sa.rank != 2 && sa.rank != 3))
    throw ShapeMismatch("matmul ranks " + sa.str() + " vs " + sb.str());
  int batch = sa.rank == 3 ? sa[0] : 1;
  if (sa.rank == 3 && sb[0] != batch) throw ShapeMismatch("matmul batch mismatch");
  int m = sa[sa.rank - 2], k = sa[sa.rank - 1];
  int k2 = sb[sb.rank - 2], n = sb[sb.rank - 1];
  if (k != k2) throw ShapeMismatch("matmul inner dims " + sa.str() + " vs " + sb.str());
  Shape out = sa.rank == 3 ? Shape{batch, m, n} : Shape{m, n};
  std::vector<T> v(out.numel(), T(0));
  const auto &av = a.values(), &bv = b.values();
  for (int bi = 0; bi < batch; ++bi) {
    const T* A = av.data() + static_cast<std::size_t>(bi) * m * k;
    const T* B = bv.data() + static_cast<std::size_t>(bi) * k * n;
    T* C = v.data() + static_cast<std::size_t>(bi) * m * n;
    for (int i = 0; i < m; ++i)
      for (int kk = 0; kk < k; ++kk) {
        T aik = A[i * k + kk];
        const T* brow = B + kk * n;
        T* crow = C + i * n;
        for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
      }
  }
  return Tensor<T>::make_op("matmul", out, std::move(v), {a, b},
                            {[b](const Tensor<T>& g) { return matmul(g, transpose_last2(b)); },
                             [a](const Tensor<T>& g) { return matmul(transpose_last2(a), g); }});
}

// --- padding ------------------------------------------------------------------

template <typename T>
Tensor<T> pad2d(const Tensor<T>& x, int pt, int pb, int pl, int pr) {
  Shape s = x.shape();
  if (s.rank != 4) throw ShapeMismatch("pad2d expects NCHW");
  if (pt == 0 && pb == 0 && pl == 0 && pr == 0) return x;
  int n = s[0], c = s[1], h = s[2], w = s[3];
  Shape out{n, c, h + pt + pb, w + pl + pr};
  std::vector<T> v(out.numel(), T(0));
  const auto& xv = x.values();
  int oh = h + pt + pb, ow = w + pl + pr;
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h; ++y) {
        const T* src = xv.data() + ((static_cast<std::size_t>(ni) * c + ci) * h + y) * w;
        T* dst = v.data() + ((static_cast<std::size_t>(ni) * c + ci) * oh + y + pt) * ow + pl;
        std::copy(src, src + w, dst);
      }
  return Tensor<T>::make_op("pad2d", out, std::move(v), {x},
                            {[pt, pb, pl, pr](const Tensor<T>& g) {
                              return crop2d(g, pt, pb, pl, pr);
                            }});
}

template <typename T>
Tensor<T> crop2d(const Tensor<T>& x, int pt, int pb, int pl, int pr) {
  Shape s = x.shape();
  if (pt == 0 && pb == 0 && pl == 0 && pr == 0) return x;
  int n = s[0], c = s[1], h = s[2], w = s[3];
  int oh = h - pt - pb, ow = w - pl - pr;
  if (oh <= 0 || ow <= 0) throw ShapeMismatch("crop2d collapses tensor");
  Shape out{n, c, oh, ow};
  std::vector<T> v(out.numel());
  const auto& xv = x.values();
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < oh; ++y) {
        const T* src = xv.data() + ((static_cast<std::size_t>(ni) * c + ci) * h + y + pt) * w + pl;
        T* dst = v.data() + ((static_cast<std::size_t>(ni) * c + ci) * oh + y) * ow;
        std::copy(src, src + ow, dst);
      }
  return Tensor<T>::make_op("crop2d", out, std::move(v), {x},
                            {[pt, pb, pl, pr](const Tensor<T>& g) {
                              return pad2d(g, pt, pb, pl, pr);
                            }});
}

// --- convolution (valid, stride s) ---------------------------------------------

template <typename T>
Tensor<T> conv_grad_input(const Tensor<T>& g, const Tensor<T>& w, int stride, int in_h, int in_w);
template <typename T>
Tensor<T> conv_grad_weight(const Tensor<T>& x, const Tensor<T>& g, int stride, int kh, int kw);

// x: (N,Ci,H,W), w: (Co,Ci,kh,kw) -> (N,Co,Ho,Wo)
template <typename T>
Tensor<T> conv_valid(const Tensor<T>& x, const Tensor<T>& w, int stride) {
  Shape sx = x.shape(), sw = w.shape();
  if (sx.rank != 4 || sw.rank != 4) throw ShapeMismatch("conv expects NCHW x and OIkk w");
  if (sx[1] != sw[1])
    throw ChannelMismatch("input has " + std::to_string(sx[1]) + " channels, kernel expects " +
                          std::to_string(sw[1]));
  int n = sx[0], ci = sx[1], h = sx[2], wd = sx[3];
  int co = sw[0], kh = sw[2], kw = sw[3];
  if (h < kh || wd < kw) throw InputTooSmall("conv input " + sx.str() + " smaller than kernel");
  int ho = (h - kh) / stride + 1, wo = (wd - kw) / stride + 1;
  Shape out{n, co, ho, wo};
  std::vector<T> v(out.numel(), T(0));
  const auto &xv = x.values(), &wv = w.values();
  for (int ni = 0; ni < n; ++ni)
    for (int oc = 0; oc < co; ++oc) {
      T* ybase = v.data() + (static_cast<std::size_t>(ni) * co + oc) * ho * wo;
      for (int icc = 0; icc < ci; ++icc) {
        const T* xbase = xv.data() + (static_cast<std::size_t>(ni) * ci + icc) * h * wd;
        const T* wbase = wv.data() + (static_cast<std::size_t>(oc) * ci + icc) * kh * kw;
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            T wval = wbase[ky * kw + kx];
            for (int oy = 0; oy < ho; ++oy) {
              const T* xr = xbase + (oy * stride + ky) * wd + kx;
              T* yr = ybase + oy * wo;
              if (stride == 1) {
                for (int ox = 0; ox < wo; ++ox) yr[ox] += wval * xr[ox];
              } else {
                for (int ox = 0; ox < wo; ++ox) yr[ox] += wval * xr[ox * stride];
              }
            }
          }
      }
    }
  int in_h = h, in_w = wd;
  return Tensor<T>::make_op(
      "conv_valid", out, std::move(v), {x, w},
      {[w, stride, in_h, in_w](const Tensor<T>& g) {
         return conv_grad_input(g, w, stride, in_h, in_w);
       },
       [x, stride, kh, kw](const Tensor<T>& g) { return conv_grad_weight(x, g, stride, kh, kw); }});
}

// adjoint of conv_valid in its input: g: (N,Co,Ho,Wo) -> (N,Ci,H,W)
template <typename T>
Tensor<T> conv_grad_input(const Tensor<T>& g, const Tensor<T>& w, int stride, int in_h, int in_w) {
  Shape sg = g.shape(), sw = w.shape();
  int n = sg[0], co = sg[1], ho = sg[2], wo = sg[3];
  int ci = sw[1], kh = sw[2], kw = sw[3];
  if (sg[1] != sw[0]) throw ChannelMismatch("conv_grad_input channel mismatch");
  Shape out{n, ci, in_h, in_w};
  std::vector<T> v(out.numel(), T(0));
  const auto &gv = g.values(), &wv = w.values();
  for (int ni = 0; ni < n; ++ni)
    for (int oc = 0; oc < co; ++oc) {
      const T* gbase = gv.data() + (static_cast<std::size_t>(ni) * co + oc) * ho * wo;
      for (int icc = 0; icc < ci; ++icc) {
        T* xbase = v.data() + (static_cast<std::size_t>(ni) * ci + icc) * in_h * in_w;
        const T* wbase = wv.data() + (static_cast<std::size_t>(oc) * ci + icc) * kh * kw;
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            T wval = wbase[ky * kw + kx];
            for (int oy = 0; oy < ho; ++oy) {
              T* xr = xbase + (oy * stride + ky) * in_w + kx;
              const T* gr = gbase + oy * wo;
              if (stride == 1) {
                for (int ox = 0; ox < wo; ++ox) xr[ox] += wval * gr[ox];
              } else {
                for (int ox = 0; ox < wo; ++ox) xr[ox * stride] += wval * gr[ox];
              }
            }
          }
      }
    }
  return Tensor<T>::make_op(
      "conv_grad_input", out, std::move(v), {g, w},
      {[w, stride](const Tensor<T>& v2) { return conv_valid(v2, w, stride); },
       [g, stride, kh, kw](const Tensor<T>& v2) { return conv_grad_weight(v2, g, stride, kh, kw); }});
}

// adjoint of conv_valid in its weight: -> (Co,Ci,kh,kw)
template <typename T>
Tensor<T> conv_grad_weight(const Tensor<T>& x, const Tensor<T>& g, int stride, int kh, int kw) {
  Shape sx = x.shape(), sg = g.shape();
  int n = sx[0], ci = sx[1], h = sx[2], wd = sx[3];
  int co = sg[1], ho = sg[2], wo = sg[3];
  Shape out{co, ci, kh, kw};
  std::vector<T> v(out.numel(), T(0));
  const auto &xv = x.values(), &gv = g.values();
  for (int ni = 0; ni < n; ++ni)
    for (int oc = 0; oc < co; ++oc) {
      const T* gbase = gv.data() + (static_cast<std::size_t>(ni) * co + oc) * ho * wo;
      for (int icc = 0; icc < ci; ++icc) {
        const T* xbase = xv.data() + (static_cast<std::size_t>(ni) * ci + icc) * h * wd;
        T* wbase = v.data() + (static_cast<std::size_t>(oc) * ci + icc) * kh * kw;
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            T acc = 0;
            if (stride == 1 && wo >= 16) {
              // multi-lane accumulation keeps the row reduction vectorizable
              T lanes[8] = {};
              for (int oy = 0; oy < ho; ++oy) {
                const T* xr = xbase + (oy + ky) * wd + kx;
                const T* gr = gbase + oy * wo;
                int ox = 0;
                for (; ox + 8 <= wo; ox += 8)
                  for (int l = 0; l < 8; ++l) lanes[l] += gr[ox + l] * xr[ox + l];
                for (; ox < wo; ++ox) lanes[ox & 7] += gr[ox] * xr[ox];
              }
              for (int l = 0; l < 8; ++l) acc += lanes[l];
            } else {
              for (int oy = 0; oy < ho; ++oy) {
                const T* xr = xbase + (oy * stride + ky) * wd + kx;
                const T* gr = gbase + oy * wo;
                if (stride == 1) {
                  for (int ox = 0; ox < wo; ++ox) acc += gr[ox] * xr[ox];
                } else {
                  for (int ox = 0; ox < wo; ++ox) acc += gr[ox] * xr[ox * stride];
                }
              }
            }
            wbase[ky * kw + kx] += acc;
          }
      }
    }
  int in_h = h, in_w = wd;
  return Tensor<T>::make_op(
      "conv_grad_weight", out, std::move(v), {x, g},
      {[g, stride, in_h, in_w](const Tensor<T>& v2) {
         return conv_grad_input(g, v2, stride, in_h, in_w);
       },
       [x, stride](const Tensor<T>& v2) { return conv_valid(x, v2, stride); }});
}

// --- bias ---------------------------------------------------------------------

template <typename T>
Tensor<T> sum_over_nhw(const Tensor<T>& x) {
  Shape s = x.shape();
  if (s.rank != 4) throw ShapeMismatch("sum_over_nhw expects NCHW");
  int n = s[0], c = s[1];
  std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  std::vector<T> v(c, T(0));
  const auto& xv = x.values();
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const T* p = xv.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      v[ci] += acc;
    }
  Shape in = s;
  return Tensor<T>::make_op("sum_over_nhw", Shape{c}, std::move(v), {x},
                            {[in](const Tensor<T>& g) { return broadcast_c(g, in); }});
}

template <typename T>
Tensor<T> broadcast_c(const Tensor<T>& b, const Shape& target) {
  if (b.shape().rank != 1 || b.shape()[0] != target[1])
    throw ShapeMismatch("broadcast_c expects per-channel vector");
  int n = target[0], c = target[1];
  std::size_t plane = static_cast<std::size_t>(target[2]) * target[3];
  std::vector<T> v(target.numel());
  const auto& bv = b.values();
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      std::fill_n(v.begin() + (static_cast<std::size_t>(ni) * c + ci) * plane, plane, bv[ci]);
  return Tensor<T>::make_op("broadcast_c", target, std::move(v), {b},
                            {[](const Tensor<T>& g) { return sum_over_nhw(g); }});
}

template <typename T>
Tensor<T> bias_add(const Tensor<T>& y, const Tensor<T>& b) {
  Shape s = y.shape();
  if (b.shape().rank != 1 || b.shape()[0] != s[1]) throw ShapeMismatch("bias length != channels");
  std::vector<T> v(y.numel());
  const auto &yv = y.values(), &bv = b.values();
  int n = s[0], c = s[1];
  std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const T* src = yv.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
      T* dst = v.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
      T bb = bv[ci];
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] + bb;
    }
  return Tensor<T>::make_op("bias_add", s, std::move(v), {y, b},
                            {[](const Tensor<T>& g) { return g; },
                             [](const Tensor<T>& g) { return sum_over_nhw(g); }});
}

// rows: (N,F) + (F)
template <typename T>
Tensor<T> bias_add_rows(const Tensor<T>& y, const Tensor<T>& b) {
  Shape s = y.shape();
  if (s.rank != 2 || b.shape().rank != 1 || b.shape()[0] != s[1])
    throw ShapeMismatch("bias_add_rows shape mismatch");
  int n = s[0], f = s[1];
  std::vector<T> v(y.numel());
  const auto &yv = y.values(), &bv = b.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < f; ++j) v[i * f + j] = yv[i * f + j] + bv[j];
  return Tensor<T>::make_op("bias_add_rows", s, std::move(v), {y, b},
                            {[](const Tensor<T>& g) { return g; },
                             [](const Tensor<T>& g) { return sum_rows(g); }});
}

template <typename T>
Tensor<T> sum_rows(const Tensor<T>& x) {
  Shape s = x.shape();
  if (s.rank != 2) throw ShapeMismatch("sum_rows expects rank 2");
  int n = s[0], f = s[1];
  std::vector<T> v(f, T(0));
  const auto& xv = x.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < f; ++j) v[j] += xv[i * f + j];
  return Tensor<T>::make_op("sum_rows", Shape{f}, std::move(v), {x},
                            {[n](const Tensor<T>& g) { return broadcast_rows(g, n); }});
}

template <typename T>
Tensor<T> broadcast_rows(const Tensor<T>& b, int n) {
  int f = b.shape()[0];
  std::vector<T> v(static_cast<std::size_t>(n) * f);
  const auto& bv = b.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < f; ++j) v[i * f + j] = bv[j];
  return Tensor<T>::make_op("broadcast_rows", Shape{n, f}, std::move(v), {b},
                            {[](const Tensor<T>& g) { return sum_rows(g); }});
}

// --- pooling ------------------------------------------------------------------

template <typename T>
Tensor<T> scatter_pool(const Tensor<T>& g, const std::shared_ptr<std::vector<int>>& idx,
                       const Shape& in_shape);

template <typename T>
Tensor<T> gather_pool(const Tensor<T>& x, const std::shared_ptr<std::vector<int>>& idx,
                      const Shape& out_shape) {
  std::vector<T> v(out_shape.numel());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = xv[(*idx)[i]];
  Shape in = x.shape();
  return Tensor<T>::make_op("gather_pool", out_shape, std::move(v), {x},
                            {[idx, in](const Tensor<T>& g) { return scatter_pool(g, idx, in); }});
}

template <typename T>
Tensor<T> scatter_pool(const Tensor<T>& g, const std::shared_ptr<std::vector<int>>& idx,
                       const Shape& in_shape) {
  std::vector<T> v(in_shape.numel(), T(0));
  const auto& gv = g.values();
  for (std::size_t i = 0; i < gv.size(); ++i) v[(*idx)[i]] += gv[i];
  Shape out = g.shape();
  return Tensor<T>::make_op("scatter_pool", in_shape, std::move(v), {g},
                            {[idx, out](const Tensor<T>& v2) { return gather_pool(v2, idx, out); }});
}

// 2x2 max pooling, stride 2
template <typename T>
Tensor<T> max_pool2x2(const Tensor<T>& x) {
  Shape s = x.shape();
  if (s.rank != 4) throw ShapeMismatch("max_pool expects NCHW");
  int n = s[0], c = s[1], h = s[2], w = s[3];
  if (h % 2 != 0 || w % 2 != 0)
    throw OddDimension("max_pool2x2 on " + std::to_string(h) + "x" + std::to_string(w));
  int ho = h / 2, wo = w / 2;
  Shape out{n, c, ho, wo};
  std::vector<T> v(out.numel());
  auto idx = std::make_shared<std::vector<int>>(out.numel());
  const auto& xv = x.values();
  std::size_t o = 0;
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      std::size_t base = (static_cast<std::size_t>(ni) * c + ci) * h * w;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          int p00 = static_cast<int>(base) + (2 * oy) * w + 2 * ox;
          int best = p00;
          T bv = xv[p00];
          int cand[3] = {p00 + 1, p00 + w, p00 + w + 1};
          for (int k = 0; k < 3; ++k)
            if (xv[cand[k]] > bv) {
              bv = xv[cand[k]];
              best = cand[k];
            }
          v[o] = bv;
          (*idx)[o] = best;
          ++o;
        }
    }
  Shape in = s;
  return Tensor<T>::make_op("max_pool2x2", out, std::move(v), {x},
                            {[idx, in](const Tensor<T>& g) { return scatter_pool(g, idx, in); }});
}

// --- resize ---------------------------------------------------------------------

template <typename T>
struct TapPlan {
  int ntap = 1;
  std::vector<int> idx;  // out_size * ntap clamped source indices
  std::vector<T> w;      // same layout
};

template <typename T>
TapPlan<T> make_tap_plan(int in_size, int out_size, ResizeMode mode) {
  TapPlan<T> plan;
  double scale = static_cast<double>(in_size) / out_size;
  if (mode == ResizeMode::Nearest) {
    plan.ntap = 1;
    plan.idx.resize(out_size);
    plan.w.assign(out_size, T(1));
    for (int o = 0; o < out_size; ++o) {
      int s = static_cast<int>(std::floor((o + 0.5) * scale));
      plan.idx[o] = std::clamp(s, 0, in_size - 1);
    }
  } else {
    plan.ntap = 4;
    plan.idx.resize(static_cast<std::size_t>(out_size) * 4);
    plan.w.resize(static_cast<std::size_t>(out_size) * 4);
    for (int o = 0; o < out_size; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      double fl = std::floor(src);
      int base = static_cast<int>(fl);
      double t = src - fl;
      // Catmull-Rom (a = -0.5)
      double t2 = t * t, t3 = t2 * t;
      double w0 = -0.5 * t3 + t2 - 0.5 * t;
      double w1 = 1.5 * t3 - 2.5 * t2 + 1.0;
      double w2 = -1.5 * t3 + 2.0 * t2 + 0.5 * t;
      double w3 = 0.5 * t3 - 0.5 * t2;
      double ws[4] = {w0, w1, w2, w3};
      for (int k = 0; k < 4; ++k) {
        plan.idx[o * 4 + k] = std::clamp(base - 1 + k, 0, in_size - 1);
        plan.w[o * 4 + k] = static_cast<T>(ws[k]);
      }
    }
  }
  return plan;
}

template <typename T>
Tensor<T> resize_adjoint(const Tensor<T>& g, int in_h, int in_w,
                         const std::shared_ptr<TapPlan<T>>& py,
                         const std::shared_ptr<TapPlan<T>>& px);

// spatial resampling of NCHW to (out_h, out_w); linear in x
template <typename T>
Tensor<T> resize(const Tensor<T>& x, int out_h, int out_w, ResizeMode mode) {
  Shape s = x.shape();
  if (s.rank != 4) throw ShapeMismatch("resize expects NCHW");
  auto py = std::make_shared<TapPlan<T>>(make_tap_plan<T>(s[2], out_h, mode));
  auto px = std::make_shared<TapPlan<T>>(make_tap_plan<T>(s[3], out_w, mode));
  return resize_with_plans(x, out_h, out_w, py, px);
}

template <typename T>
Tensor<T> resize_with_plans(const Tensor<T>& x, int out_h, int out_w,
                            const std::shared_ptr<TapPlan<T>>& py,
                            const std::shared_ptr<TapPlan<T>>& px) {
  Shape s = x.shape();
  int n = s[0], c = s[1], h = s[2], w = s[3];
  Shape out{n, c, out_h, out_w};
  std::vector<T> v(out.numel(), T(0));
  const auto& xv = x.values();
  int nty = py->ntap, ntx = px->ntap;
  for (int nc = 0; nc < n * c; ++nc) {
    const T* src = xv.data() + static_cast<std::size_t>(nc) * h * w;
    T* dst = v.data() + static_cast<std::size_t>(nc) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy)
      for (int ky = 0; ky < nty; ++ky) {
        int sy = py->idx[oy * nty + ky];
        T wy = py->w[oy * nty + ky];
        const T* srow = src + sy * w;
        T* drow = dst + oy * out_w;
        for (int ox = 0; ox < out_w; ++ox) {
          T acc = 0;
          for (int kx = 0; kx < ntx; ++kx)
            acc += px->w[ox * ntx + kx] * srow[px->idx[ox * ntx + kx]];
          drow[ox] += wy * acc;
        }
      }
  }
  int in_h = h, in_w = w;
  return Tensor<T>::make_op("resize", out, std::move(v), {x},
                            {[in_h, in_w, py, px](const Tensor<T>& g) {
                              return resize_adjoint(g, in_h, in_w, py, px);
                            }});
}

template <typename T>
Tensor<T> resize_adjoint(const Tensor<T>& g, int in_h, int in_w,
                         const std::shared_ptr<TapPlan<T>>& py,
                         const std::shared_ptr<TapPlan<T>>& px) {
  Shape s = g.shape();
  int n = s[0], c = s[1], oh = s[2], ow = s[3];
  Shape out{n, c, in_h, in_w};
  std::vector<T> v(out.numel(), T(0));
  const auto& gv = g.values();
  int nty = py->ntap, ntx = px->ntap;
  for (int nc = 0; nc < n * c; ++nc) {
    const T* src = gv.data() + static_cast<std::size_t>(nc) * oh * ow;
    T* dst = v.data() + static_cast<std::size_t>(nc) * in_h * in_w;
    for (int oy = 0; oy < oh; ++oy)
      for (int ky = 0; ky < nty; ++ky) {
        int sy = py->idx[oy * nty + ky];
        T wy = py->w[oy * nty + ky];
        const T* srow = src + oy * ow;
        T* drow = dst + sy * in_w;
        for (int ox = 0; ox < ow; ++ox) {
          T gval = wy * srow[ox];
          for (int kx = 0; kx < ntx; ++kx)
            drow[px->idx[ox * ntx + kx]] += px->w[ox * ntx + kx] * gval;
        }
      }
  }
  int goh = oh, gow = ow;
  return Tensor<T>::make_op("resize_adjoint", out, std::move(v), {g},
                            {[goh, gow, py, px](const Tensor<T>& v2) {
                              return resize_with_plans(v2, goh, gow, py, px);
                            }});
}

// --- channel-broadcast multiply (attention masks) --------------------------------

template <typename T>
Tensor<T> sum_ch_keep(const Tensor<T>& x) {
  Shape s = x.shape();
  int n = s[0], c = s[1], h = s[2], w = s[3];
  Shape out{n, 1, h, w};
  std::vector<T> v(out.numel(), T(0));
  const auto& xv = x.values();
  std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const T* src = xv.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
      T* dst = v.data() + static_cast<std::size_t>(ni) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  return Tensor<T>::make_op("sum_ch_keep", out, std::move(v), {x},
                            {[c](const Tensor<T>& g) { return bcast_ch(g, c); }});
}

template <typename T>
Tensor<T> bcast_ch(const Tensor<T>& m, int c) {
  Shape s = m.shape();
  if (s[1] != 1) throw ShapeMismatch("bcast_ch expects single-channel mask");
  int n = s[0], h = s[2], w = s[3];
  Shape out{n, c, h, w};
  std::vector<T> v(out.numel());
  const auto& mv = m.values();
  std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      std::copy(mv.begin() + static_cast<std::size_t>(ni) * plane,
                mv.begin() + static_cast<std::size_t>(ni + 1) * plane,
                v.begin() + (static_cast<std::size_t>(ni) * c + ci) * plane);
  return Tensor<T>::make_op("bcast_ch", out, std::move(v), {m},
                            {[](const Tensor<T>& g) { return sum_ch_keep(g); }});
}

// x * mask with mask broadcast over channels
template <typename T>
Tensor<T> mul_bcast_ch(const Tensor<T>& x, const Tensor<T>& m) {
  Shape sx = x.shape(), sm = m.shape();
  if (sm[1] != 1 || sm[0] != sx[0] || sm[2] != sx[2] || sm[3] != sx[3])
    throw ShapeMismatch("mul_bcast_ch mask " + sm.str() + " vs " + sx.str());
  int n = sx[0], c = sx[1], h = sx[2], w = sx[3];
  std::vector<T> v(x.numel());
  const auto &xv = x.values(), &mv = m.values();
  std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const T* xs = xv.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
      const T* ms = mv.data() + static_cast<std::size_t>(ni) * plane;
      T* dst = v.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = xs[i] * ms[i];
    }
  return Tensor<T>::make_op("mul_bcast_ch", sx, std::move(v), {x, m},
                            {[m](const Tensor<T>& g) { return mul_bcast_ch(g, m); },
                             [x](const Tensor<T>& g) { return sum_ch_keep(mul(g, x)); }});
}

// (N,C,H,W) -> (N,C) spatial average
template <typename T>
Tensor<T> avg_hw(const Tensor<T>& x) {
  Shape s = x.shape();
  int n = s[0], c = s[1], h = s[2], w = s[3];
  std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<T> v(static_cast<std::size_t>(n) * c);
  const auto& xv = x.values();
  T inv = T(1) / static_cast<T>(plane);
  for (int i = 0; i < n * c; ++i) {
    const T* p = xv.data() + static_cast<std::size_t>(i) * plane;
    T acc = 0;
    for (std::size_t j = 0; j < plane; ++j) acc += p[j];
    v[i] = acc * inv;
  }
  return Tensor<T>::make_op("avg_hw", Shape{n, c}, std::move(v), {x},
                            {[h, w](const Tensor<T>& g) { return spread_hw(g, h, w); }});
}

// adjoint of avg_hw: (N,C) -> (N,C,H,W) with each value / (H*W)
template <typename T>
Tensor<T> spread_hw(const Tensor<T>& g, int h, int w) {
  Shape s = g.shape();
  int n = s[0], c = s[1];
  Shape out{n, c, h, w};
  std::size_t plane = static_cast<std::size_t>(h) * w;
  T inv = T(1) / static_cast<T>(plane);
  std::vector<T> v(out.numel());
  const auto& gv = g.values();
  for (int i = 0; i < n * c; ++i)
    std::fill_n(v.begin() + static_cast<std::size_t>(i) * plane, plane, gv[i] * inv);
  return Tensor<T>::make_op("spread_hw", out, std::move(v), {g},
                            {[](const Tensor<T>& v2) { return avg_hw(v2); }});
}

// --- Haar transform as graph ops --------------------------------------------------

template <typename T>
Tensor<T> haar_idwt2_op(const Tensor<T>& s);

// (N,1,H,W) -> (N,4,H/2,W/2) with channel order LL,LH,HL,HH and the 1/4
// forward normalization
template <typename T>
Tensor<T> haar_dwt2_op(const Tensor<T>& x) {
  Shape s = x.shape();
  if (s.rank != 4 || s[1] != 1) throw ShapeMismatch("haar_dwt2 expects (N,1,H,W)");
  int n = s[0], h = s[2], w = s[3];
  if (h % 2 != 0 || w % 2 != 0)
    throw OddDimension("haar_dwt2 on " + std::to_string(h) + "x" + std::to_string(w));
  int hh = h / 2, hw = w / 2;
  Shape out{n, 4, hh, hw};
  std::vector<T> v(out.numel());
  const auto& xv = x.values();
  std::size_t plane = static_cast<std::size_t>(hh) * hw;
  for (int ni = 0; ni < n; ++ni) {
    const T* im = xv.data() + static_cast<std::size_t>(ni) * h * w;
    T* ll = v.data() + static_cast<std::size_t>(ni) * 4 * plane;
    T* lh = ll + plane;
    T* hl = lh + plane;
    T* hhb = hl + plane;
    for (int y = 0; y < hh; ++y)
      for (int xw = 0; xw < hw; ++xw) {
        T a = im[(2 * y) * w + 2 * xw];
        T b = im[(2 * y) * w + 2 * xw + 1];
        T c = im[(2 * y + 1) * w + 2 * xw];
        T d = im[(2 * y + 1) * w + 2 * xw + 1];
        std::size_t o = static_cast<std::size_t>(y) * hw + xw;
        ll[o] = (a + b + c + d) * T(0.25);
        lh[o] = (a - b + c - d) * T(0.25);
        hl[o] = (a + b - c - d) * T(0.25);
        hhb[o] = (a - b - c + d) * T(0.25);
      }
  }
  return Tensor<T>::make_op("haar_dwt2", out, std::move(v), {x},
                            {[](const Tensor<T>& g) {
                              return mul_scalar(haar_idwt2_op(g), T(0.25));
                            }});
}

// (N,4,h,w) -> (N,1,2h,2w); unit-coefficient inverse
template <typename T>
Tensor<T> haar_idwt2_op(const Tensor<T>& sb) {
  Shape s = sb.shape();
  if (s.rank != 4 || s[1] != 4) throw ShapeMismatch("haar_idwt2 expects (N,4,h,w)");
  int n = s[0], hh = s[2], hw = s[3];
  Shape out{n, 1, hh * 2, hw * 2};
  std::vector<T> v(out.numel());
  const auto& sv = sb.values();
  std::size_t plane = static_cast<std::size_t>(hh) * hw;
  int w = hw * 2;
  for (int ni = 0; ni < n; ++ni) {
    const T* ll = sv.data() + static_cast<std::size_t>(ni) * 4 * plane;
    const T* lh = ll + plane;
    const T* hl = lh + plane;
    const T* hhb = hl + plane;
    T* im = v.data() + static_cast<std::size_t>(ni) * out.numel() / n;
    for (int y = 0; y < hh; ++y)
      for (int xw = 0; xw < hw; ++xw) {
        std::size_t o = static_cast<std::size_t>(y) * hw + xw;
        T a = ll[o], b = lh[o], c = hl[o], d = hhb[o];
        im[(2 * y) * w + 2 * xw] = a + b + c + d;
        im[(2 * y) * w + 2 * xw + 1] = a - b + c - d;
        im[(2 * y + 1) * w + 2 * xw] = a + b - c - d;
        im[(2 * y + 1) * w + 2 * xw + 1] = a - b - c + d;
      }
  }
  return Tensor<T>::make_op("haar_idwt2", out, std::move(v), {sb},
                            {[](const Tensor<T>& g) { return mul_scalar(haar_dwt2_op(g), T(4)); }});
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Spec-facing wrappers
// ---------------------------------------------------------------------------

// cross-correlation with bias; Same keeps ceil(H/stride), Valid shrinks
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 Padding padding) {
  Shape sw = w.shape();
  if (sw.rank != 4) throw ShapeMismatch("kernel must be (Co,Ci,kh,kw)");
  int kh = sw[2], kw = sw[3];
  if (kh % 2 == 0 || kw % 2 == 0)
    throw NonOddKernel("kernel " + std::to_string(kh) + "x" + std::to_string(kw));
  Tensor<T> xin = x;
  bool squeeze = false;
  if (x.shape().rank == 3) {  // single feature map -> batch of one
    Shape s = x.shape();
    xin = ops::reshape(x, Shape{1, s[0], s[1], s[2]});
    squeeze = true;
  }
  Shape sx = xin.shape();
  if (sx[1] != sw[1])
    throw ChannelMismatch("input has " + std::to_string(sx[1]) + " channels, kernel expects " +
                          std::to_string(sw[1]));
  Tensor<T> y;
  if (padding == Padding::Same) {
    int ho = (sx[2] + stride - 1) / stride;
    int wo = (sx[3] + stride - 1) / stride;
    int pad_h = std::max(0, (ho - 1) * stride + kh - sx[2]);
    int pad_w = std::max(0, (wo - 1) * stride + kw - sx[3]);
    y = ops::conv_valid(ops::pad2d(xin, pad_h / 2, pad_h - pad_h / 2, pad_w / 2, pad_w - pad_w / 2),
                        w, stride);
  } else {
    y = ops::conv_valid(xin, w, stride);
  }
  if (b.defined()) y = ops::bias_add(y, b);
  if (squeeze) {
    Shape s = y.shape();
    y = ops::reshape(y, Shape{s[1], s[2], s[3]});
  }
  return y;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, Padding padding) {
  return conv2d(x, w, Tensor<T>(), stride, padding);
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation mode, T slope = T(0.2)) {
  switch (mode) {
    case Activation::Relu:
      return ops::relu(x);
    case Activation::LeakyRelu:
      return ops::leaky_relu(x, slope);
    case Activation::Sigmoid:
      return ops::sigmoid(x);
  }
  throw ShapeMismatch("unknown activation");
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x) {
  if (x.shape().rank == 3) {
    Shape s = x.shape();
    auto y = ops::max_pool2x2(ops::reshape(x, Shape{1, s[0], s[1], s[2]}));
    Shape so = y.shape();
    return ops::reshape(y, Shape{so[1], so[2], so[3]});
  }
  return ops::max_pool2x2(x);
}

// factor = num/den; both axes must land on integral sizes
template <typename T>
Tensor<T> interpolate(const Tensor<T>& x, int num, int den, ResizeMode mode) {
  if (num <= 0 || den <= 0) throw NonIntegralOutput("factor must be positive");
  Tensor<T> xin = x;
  bool squeeze = false;
  if (x.shape().rank == 3) {
    Shape s = x.shape();
    xin = ops::reshape(x, Shape{1, s[0], s[1], s[2]});
    squeeze = true;
  }
  Shape s = xin.shape();
  if ((static_cast<long long>(s[2]) * num) % den != 0 ||
      (static_cast<long long>(s[3]) * num) % den != 0)
    throw NonIntegralOutput("size " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                            " times " + std::to_string(num) + "/" + std::to_string(den));
  int oh = static_cast<int>(static_cast<long long>(s[2]) * num / den);
  int ow = static_cast<int>(static_cast<long long>(s[3]) * num / den);
  if (oh <= 0 || ow <= 0) throw NonIntegralOutput("degenerate output size");
  auto y = ops::resize(xin, oh, ow, mode);
  if (squeeze) {
    Shape so = y.shape();
    return ops::reshape(y, Shape{so[1], so[2], so[3]});
  }
  return y;
}

// numerically stable softmax of a flat vector
template <typename T>
Tensor<T> softmax_over(const Tensor<T>& x) {
  if (x.shape().rank != 1) throw ShapeMismatch("softmax_over expects a vector");
  return ops::softmax_lastdim(x);
}

}  // namespace wavesr
