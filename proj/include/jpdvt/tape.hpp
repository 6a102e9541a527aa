#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jpdvt/tensor.hpp"

namespace jpdvt {

// Reverse-mode tape. Every operation appends one node holding the forward
// value and a pull-back closure; backward() walks the record once in reverse
// creation order (a valid topological order, since graphs are built forward).
//
// A tape is single-writer: one forward/backward at a time. Independent tapes
// are fully isolated and may run on separate threads.
template <typename T>
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapM = Eigen::Map<EMat>;
  using MapC = Eigen::Map<const EMat>;

  Var leaf(Tensor<T> v, bool requires_grad = false, std::string name = {}) {
    return push(std::move(v), {}, requires_grad, nullptr, std::move(name));
  }

  Var constant(Tensor<T> v) { return leaf(std::move(v), false); }

  const Tensor<T>& val(Var v) const { return node(v).val; }

  // Gradient of the last backward() w.r.t. v. Zero tensor if disconnected.
  Tensor<T> grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.empty()) return Tensor<T>(n.val.shape);
    return Tensor<T>(n.val.shape, n.grad);
  }

  size_t size() const { return nodes_.size(); }

  void reset() {
    nodes_.clear();
    disconnected_.clear();
  }

  // Leaves marked requires_grad that the loss does not reach.
  const std::vector<std::string>& disconnected() const { return disconnected_; }

  // ---- elementwise ----

  Var add(Var a, Var b) {
    check_same_shape("add", a, b);
    Tensor<T> out = node(a).val;
    const auto& bv = node(b).val.data;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv[i];
    return push(std::move(out), {a.id, b.id}, any_grad(a, b),
                [this, a, b](const std::vector<T>& g) {
                  axpy(a, g, T(1));
                  axpy(b, g, T(1));
                });
  }

  Var sub(Var a, Var b) {
    check_same_shape("sub", a, b);
    Tensor<T> out = node(a).val;
    const auto& bv = node(b).val.data;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv[i];
    return push(std::move(out), {a.id, b.id}, any_grad(a, b),
                [this, a, b](const std::vector<T>& g) {
                  axpy(a, g, T(1));
                  axpy(b, g, T(-1));
                });
  }

  Var mul(Var a, Var b) {
    check_same_shape("mul", a, b);
    Tensor<T> out = node(a).val;
    const auto& bv = node(b).val.data;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv[i];
    return push(std::move(out), {a.id, b.id}, any_grad(a, b),
                [this, a, b](const std::vector<T>& g) {
                  if (wants_grad(a)) {
                    auto& ga = grad_buf(a);
                    const auto& bv2 = node(b).val.data;
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
                  }
                  if (wants_grad(b)) {
                    auto& gb = grad_buf(b);
                    const auto& av = node(a).val.data;
                    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                  }
                });
  }

  Var scale(Var a, T c) {
    Tensor<T> out = node(a).val;
    for (auto& x : out.data) x *= c;
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a, c](const std::vector<T>& g) { axpy(a, g, c); });
  }

  Var add_scalar(Var a, T c) {
    Tensor<T> out = node(a).val;
    for (auto& x : out.data) x += c;
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a](const std::vector<T>& g) { axpy(a, g, T(1)); });
  }

  Var gelu(Var a) {
    // Exact erf form: 0.5 x (1 + erf(x / sqrt 2)).
    Tensor<T> out = node(a).val;
    for (auto& x : out.data) {
      const double xd = static_cast<double>(x);
      x = static_cast<T>(0.5 * xd * (1.0 + std::erf(xd * 0.70710678118654752440)));
    }
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  const auto& av = node(a).val.data;
                  for (size_t i = 0; i < g.size(); ++i) {
                    const double x = static_cast<double>(av[i]);
                    const double cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
                    const double pdf = std::exp(-0.5 * x * x) * 0.39894228040143267794;
                    ga[i] += g[i] * static_cast<T>(cdf + x * pdf);
                  }
                });
  }

  Var silu(Var a) {
    Tensor<T> out = node(a).val;
    for (auto& x : out.data) {
      const double xd = static_cast<double>(x);
      x = static_cast<T>(xd / (1.0 + std::exp(-xd)));
    }
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  const auto& av = node(a).val.data;
                  for (size_t i = 0; i < g.size(); ++i) {
                    const double x = static_cast<double>(av[i]);
                    const double s = 1.0 / (1.0 + std::exp(-x));
                    ga[i] += g[i] * static_cast<T>(s * (1.0 + x * (1.0 - s)));
                  }
                });
  }

  // ---- matrix products ----

  Var matmul(Var a, Var b) {
    const Tensor<T>& A = node(a).val;
    const Tensor<T>& B = node(b).val;
    if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0]) {
      throw std::invalid_argument("matmul: incompatible shapes " + shape_str(A.shape) + " and " +
                                  shape_str(B.shape));
    }
    const int64_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
    Tensor<T> out({m, n});
    if (m && n) {
      if (k) {
        MapM(out.data.data(), m, n).noalias() =
            MapC(A.data.data(), m, k) * MapC(B.data.data(), k, n);
      }  // k == 0: empty contraction, output stays zero
    }
    return push(std::move(out), {a.id, b.id}, any_grad(a, b),
                [this, a, b, m, k, n](const std::vector<T>& g) {
                  MapC G(g.data(), m, n);
                  if (wants_grad(a) && k) {
                    MapM(grad_buf(a).data(), m, k).noalias() +=
                        G * MapC(node(b).val.data.data(), k, n).transpose();
                  }
                  if (wants_grad(b) && k) {
                    MapM(grad_buf(b).data(), k, n).noalias() +=
                        MapC(node(a).val.data.data(), m, k).transpose() * G;
                  }
                });
  }

  // Batched matmul over the leading extent: [B,m,k] x [B,k,n] -> [B,m,n].
  Var bmm(Var a, Var b) {
    const Tensor<T>& A = node(a).val;
    const Tensor<T>& B = node(b).val;
    if (A.rank() != 3 || B.rank() != 3 || A.shape[0] != B.shape[0] || A.shape[2] != B.shape[1]) {
      throw std::invalid_argument("bmm: incompatible shapes " + shape_str(A.shape) + " and " +
                                  shape_str(B.shape));
    }
    const int64_t nb = A.shape[0], m = A.shape[1], k = A.shape[2], n = B.shape[2];
    Tensor<T> out({nb, m, n});
    for (int64_t i = 0; i < nb; ++i) {
      MapM(out.data.data() + i * m * n, m, n).noalias() =
          MapC(A.data.data() + i * m * k, m, k) * MapC(B.data.data() + i * k * n, k, n);
    }
    return push(std::move(out), {a.id, b.id}, any_grad(a, b),
                [this, a, b, nb, m, k, n](const std::vector<T>& g) {
                  for (int64_t i = 0; i < nb; ++i) {
                    MapC G(g.data() + i * m * n, m, n);
                    if (wants_grad(a)) {
                      MapM(grad_buf(a).data() + i * m * k, m, k).noalias() +=
                          G * MapC(node(b).val.data.data() + i * k * n, k, n).transpose();
                    }
                    if (wants_grad(b)) {
                      MapM(grad_buf(b).data() + i * k * n, k, n).noalias() +=
                          MapC(node(a).val.data.data() + i * m * k, m, k).transpose() * G;
                    }
                  }
                });
  }

  Var transpose2(Var a) {
    const Tensor<T>& A = node(a).val;
    require(A.rank() == 2, "transpose2: rank-2 input required, got " + shape_str(A.shape));
    const int64_t m = A.shape[0], n = A.shape[1];
    Tensor<T> out({n, m});
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) out.at(j, i) = A.at(i, j);
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a, m, n](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
                });
  }

  Var transpose_last2(Var a) {
    const Tensor<T>& A = node(a).val;
    require(A.rank() == 3, "transpose_last2: rank-3 input required, got " + shape_str(A.shape));
    const int64_t nb = A.shape[0], m = A.shape[1], n = A.shape[2];
    Tensor<T> out({nb, n, m});
    for (int64_t b = 0; b < nb; ++b)
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out.at(b, j, i) = A.at(b, i, j);
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a, nb, m, n](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  for (int64_t b = 0; b < nb; ++b)
                    for (int64_t i = 0; i < m; ++i)
                      for (int64_t j = 0; j < n; ++j)
                        ga[(b * m + i) * n + j] += g[(b * n + j) * m + i];
                });
  }

  // ---- shape moves ----

  Var reshape(Var a, Shape s) {
    const Tensor<T>& A = node(a).val;
    require(numel(s) == A.size(),
            "reshape: cannot view " + shape_str(A.shape) + " as " + shape_str(s));
    Tensor<T> out(std::move(s), A.data);
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a](const std::vector<T>& g) { axpy(a, g, T(1)); });
  }

  Var concat_cols(Var a, Var b) {
    const Tensor<T>& A = node(a).val;
    const Tensor<T>& B = node(b).val;
    require(A.rank() == 2 && B.rank() == 2 && A.shape[0] == B.shape[0],
            "concat_cols: shapes " + shape_str(A.shape) + " and " + shape_str(B.shape));
    const int64_t r = A.shape[0], p = A.shape[1], q = B.shape[1];
    Tensor<T> out({r, p + q});
    for (int64_t i = 0; i < r; ++i) {
      std::copy_n(&A.data[i * p], p, &out.data[i * (p + q)]);
      std::copy_n(&B.data[i * q], q, &out.data[i * (p + q) + p]);
    }
    return push(std::move(out), {a.id, b.id}, any_grad(a, b),
                [this, a, b, r, p, q](const std::vector<T>& g) {
                  if (wants_grad(a)) {
                    auto& ga = grad_buf(a);
                    for (int64_t i = 0; i < r; ++i)
                      for (int64_t j = 0; j < p; ++j) ga[i * p + j] += g[i * (p + q) + j];
                  }
                  if (wants_grad(b)) {
                    auto& gb = grad_buf(b);
                    for (int64_t i = 0; i < r; ++i)
                      for (int64_t j = 0; j < q; ++j) gb[i * q + j] += g[i * (p + q) + p + j];
                  }
                });
  }

  Var slice_cols(Var a, int64_t c0, int64_t c1) {
    const Tensor<T>& A = node(a).val;
    require(A.rank() == 2 && 0 <= c0 && c0 < c1 && c1 <= A.shape[1],
            "slice_cols: bad range on " + shape_str(A.shape));
    const int64_t r = A.shape[0], c = A.shape[1], w = c1 - c0;
    Tensor<T> out({r, w});
    for (int64_t i = 0; i < r; ++i) std::copy_n(&A.data[i * c + c0], w, &out.data[i * w]);
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a, r, c, c0, w](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < w; ++j) ga[i * c + c0 + j] += g[i * w + j];
                });
  }

  Var gather_rows(Var a, std::vector<int64_t> rows) {
    const Tensor<T>& A = node(a).val;
    require(A.rank() == 2, "gather_rows: rank-2 input required");
    const int64_t c = A.shape[1];
    for (int64_t r : rows)
      require(0 <= r && r < A.shape[0], "gather_rows: row index out of range");
    Tensor<T> out({static_cast<int64_t>(rows.size()), c});
    for (size_t i = 0; i < rows.size(); ++i)
      std::copy_n(&A.data[rows[i] * c], c, &out.data[static_cast<int64_t>(i) * c]);
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a, rows = std::move(rows), c](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  for (size_t i = 0; i < rows.size(); ++i)
                    for (int64_t j = 0; j < c; ++j)
                      ga[rows[i] * c + j] += g[static_cast<int64_t>(i) * c + j];
                });
  }

  // [B,D] -> [B*n,D], each row repeated n consecutive times.
  Var repeat_rows(Var a, int64_t n) {
    const Tensor<T>& A = node(a).val;
    require(A.rank() == 2 && n >= 1, "repeat_rows: rank-2 input and n>=1 required");
    const int64_t b = A.shape[0], d = A.shape[1];
    Tensor<T> out({b * n, d});
    for (int64_t i = 0; i < b; ++i)
      for (int64_t r = 0; r < n; ++r) std::copy_n(&A.data[i * d], d, &out.data[(i * n + r) * d]);
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a, b, n, d](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  for (int64_t i = 0; i < b; ++i)
                    for (int64_t r = 0; r < n; ++r)
                      for (int64_t j = 0; j < d; ++j) ga[i * d + j] += g[(i * n + r) * d + j];
                });
  }

  Var add_rowvec(Var a, Var v) {
    const Tensor<T>& A = node(a).val;
    const Tensor<T>& V = node(v).val;
    require(A.rank() == 2 && V.rank() == 1 && V.shape[0] == A.shape[1],
            "add_rowvec: shapes " + shape_str(A.shape) + " and " + shape_str(V.shape));
    const int64_t r = A.shape[0], c = A.shape[1];
    Tensor<T> out = A;
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) out.data[i * c + j] += V.data[j];
    return push(std::move(out), {a.id, v.id}, any_grad(a, v),
                [this, a, v, r, c](const std::vector<T>& g) {
                  axpy(a, g, T(1));
                  if (wants_grad(v)) {
                    auto& gv = grad_buf(v);
                    for (int64_t i = 0; i < r; ++i)
                      for (int64_t j = 0; j < c; ++j) gv[j] += g[i * c + j];
                  }
                });
  }

  Var mul_rowvec(Var a, Var v) {
    const Tensor<T>& A = node(a).val;
    const Tensor<T>& V = node(v).val;
    require(A.rank() == 2 && V.rank() == 1 && V.shape[0] == A.shape[1],
            "mul_rowvec: shapes " + shape_str(A.shape) + " and " + shape_str(V.shape));
    const int64_t r = A.shape[0], c = A.shape[1];
    Tensor<T> out = A;
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) out.data[i * c + j] *= V.data[j];
    return push(std::move(out), {a.id, v.id}, any_grad(a, v),
                [this, a, v, r, c](const std::vector<T>& g) {
                  if (wants_grad(a)) {
                    auto& ga = grad_buf(a);
                    const auto& vv = node(v).val.data;
                    for (int64_t i = 0; i < r; ++i)
                      for (int64_t j = 0; j < c; ++j) ga[i * c + j] += g[i * c + j] * vv[j];
                  }
                  if (wants_grad(v)) {
                    auto& gv = grad_buf(v);
                    const auto& av = node(a).val.data;
                    for (int64_t i = 0; i < r; ++i)
                      for (int64_t j = 0; j < c; ++j) gv[j] += g[i * c + j] * av[i * c + j];
                  }
                });
  }

  // Per-row scaling by a constant mask/weight vector (not differentiable in s).
  Var scale_rows(Var a, std::vector<T> s) {
    const Tensor<T>& A = node(a).val;
    require(A.rank() == 2 && static_cast<int64_t>(s.size()) == A.shape[0],
            "scale_rows: weight length must equal row count");
    const int64_t r = A.shape[0], c = A.shape[1];
    Tensor<T> out = A;
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) out.data[i * c + j] *= s[i];
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a, s = std::move(s), r, c](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < c; ++j) ga[i * c + j] += g[i * c + j] * s[i];
                });
  }

  // [B*N, H*dh] -> [B*H, N, dh]
  Var split_heads(Var a, int64_t nbatch, int64_t ntok, int64_t heads) {
    const Tensor<T>& A = node(a).val;
    require(A.rank() == 2 && A.shape[0] == nbatch * ntok && A.shape[1] % heads == 0,
            "split_heads: shape " + shape_str(A.shape) + " does not factor");
    const int64_t dh = A.shape[1] / heads;
    Tensor<T> out({nbatch * heads, ntok, dh});
    for (int64_t b = 0; b < nbatch; ++b)
      for (int64_t n = 0; n < ntok; ++n)
        for (int64_t h = 0; h < heads; ++h)
          std::copy_n(&A.data[(b * ntok + n) * heads * dh + h * dh], dh,
                      &out.data[((b * heads + h) * ntok + n) * dh]);
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a, nbatch, ntok, heads, dh](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  for (int64_t b = 0; b < nbatch; ++b)
                    for (int64_t n = 0; n < ntok; ++n)
                      for (int64_t h = 0; h < heads; ++h)
                        for (int64_t j = 0; j < dh; ++j)
                          ga[(b * ntok + n) * heads * dh + h * dh + j] +=
                              g[((b * heads + h) * ntok + n) * dh + j];
                });
  }

  // [B*H, N, dh] -> [B*N, H*dh]
  Var merge_heads(Var a, int64_t nbatch, int64_t heads) {
    const Tensor<T>& A = node(a).val;
    require(A.rank() == 3 && A.shape[0] == nbatch * heads, "merge_heads: shape mismatch");
    const int64_t ntok = A.shape[1], dh = A.shape[2];
    Tensor<T> out({nbatch * ntok, heads * dh});
    for (int64_t b = 0; b < nbatch; ++b)
      for (int64_t h = 0; h < heads; ++h)
        for (int64_t n = 0; n < ntok; ++n)
          std::copy_n(&A.data[((b * heads + h) * ntok + n) * dh], dh,
                      &out.data[(b * ntok + n) * heads * dh + h * dh]);
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a, nbatch, heads, ntok, dh](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  for (int64_t b = 0; b < nbatch; ++b)
                    for (int64_t h = 0; h < heads; ++h)
                      for (int64_t n = 0; n < ntok; ++n)
                        for (int64_t j = 0; j < dh; ++j)
                          ga[((b * heads + h) * ntok + n) * dh + j] +=
                              g[(b * ntok + n) * heads * dh + h * dh + j];
                });
  }

  // ---- reductions ----

  Var sum_all(Var a) {
    const Tensor<T>& A = node(a).val;
    T s = 0;
    for (T x : A.data) s += x;
    Tensor<T> out({1});
    out.data[0] = s;
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  for (auto& x : ga) x += g[0];
                });
  }

  Var mean_all(Var a) {
    const Tensor<T>& A = node(a).val;
    require(A.size() > 0, "mean_all: empty tensor");
    T s = 0;
    for (T x : A.data) s += x;
    const T inv = T(1) / static_cast<T>(A.size());
    Tensor<T> out({1});
    out.data[0] = s * inv;
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a, inv](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  for (auto& x : ga) x += g[0] * inv;
                });
  }

  // ---- row-wise nonlinear ----

  // Softmax along the last axis, max-subtracted for stability.
  Var softmax(Var a) {
    const Tensor<T>& A = node(a).val;
    require(A.rank() >= 1, "softmax: rank >= 1 required");
    const int64_t c = A.shape.back();
    const int64_t r = A.size() / c;
    Tensor<T> out = A;
    for (int64_t i = 0; i < r; ++i) {
      T* row = &out.data[i * c];
      T mx = row[0];
      for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
      T s = 0;
      for (int64_t j = 0; j < c; ++j) {
        row[j] = std::exp(row[j] - mx);
        s += row[j];
      }
      const T inv = T(1) / s;
      for (int64_t j = 0; j < c; ++j) row[j] *= inv;
    }
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a, r, c, out_id = next_id()](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  const auto& y = nodes_[static_cast<size_t>(out_id)].val.data;
                  for (int64_t i = 0; i < r; ++i) {
                    T dot = 0;
                    for (int64_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
                    for (int64_t j = 0; j < c; ++j)
                      ga[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
                  }
                });
  }

  // Zero-mean unit-variance per row along the last axis (no affine part;
  // compose with mul_rowvec/add_rowvec or modulation for scale and shift).
  Var layer_norm(Var a, T eps = T(1e-5)) {
    const Tensor<T>& A = node(a).val;
    require(A.rank() >= 1 && A.shape.back() >= 1, "layer_norm: last extent >= 1 required");
    const int64_t c = A.shape.back();
    const int64_t r = A.size() / c;
    Tensor<T> out = A;
    std::vector<T> inv_std(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) {
      T* row = &out.data[i * c];
      T mu = 0;
      for (int64_t j = 0; j < c; ++j) mu += row[j];
      mu /= static_cast<T>(c);
      T var = 0;
      for (int64_t j = 0; j < c; ++j) {
        row[j] -= mu;
        var += row[j] * row[j];
      }
      var /= static_cast<T>(c);
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(i)] = is;
      for (int64_t j = 0; j < c; ++j) row[j] *= is;
    }
    return push(std::move(out), {a.id}, wants_grad(a),
                [this, a, r, c, inv_std = std::move(inv_std),
                 out_id = next_id()](const std::vector<T>& g) {
                  if (!wants_grad(a)) return;
                  auto& ga = grad_buf(a);
                  const auto& y = nodes_[static_cast<size_t>(out_id)].val.data;
                  for (int64_t i = 0; i < r; ++i) {
                    T gm = 0, gym = 0;
                    for (int64_t j = 0; j < c; ++j) {
                      gm += g[i * c + j];
                      gym += g[i * c + j] * y[i * c + j];
                    }
                    gm /= static_cast<T>(c);
                    gym /= static_cast<T>(c);
                    const T is = inv_std[static_cast<size_t>(i)];
                    for (int64_t j = 0; j < c; ++j)
                      ga[i * c + j] += is * (g[i * c + j] - gm - y[i * c + j] * gym);
                  }
                });
  }

  // ---- convenience compositions ----

  Var linear(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

  Var mse(Var a, Var b) {
    Var d = sub(a, b);
    return mean_all(mul(d, d));
  }

  // ---- backward ----

  void backward(Var loss) {
    const Node& ln = node(loss);
    require(ln.val.size() == 1, "backward: loss must be scalar, got " + shape_str(ln.val.shape));
    disconnected_.clear();
    // Reachability: which nodes does the loss actually depend on?
    std::vector<char> active(nodes_.size(), 0);
    active[static_cast<size_t>(loss.id)] = 1;
    for (int i = loss.id; i >= 0; --i) {
      if (!active[static_cast<size_t>(i)]) continue;
      for (int p : nodes_[static_cast<size_t>(i)].parents) active[static_cast<size_t>(p)] = 1;
    }
    for (auto& n : nodes_) {
      if (n.requires_grad) n.grad.assign(n.val.data.size(), T(0));
    }
    nodes_[static_cast<size_t>(loss.id)].grad.assign(1, T(1));
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!active[static_cast<size_t>(i)] || !n.vjp || !n.requires_grad) continue;
      n.vjp(n.grad);
    }
    for (size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (n.requires_grad && n.parents.empty() && !active[i]) {
        disconnected_.push_back(n.name.empty() ? ("leaf#" + std::to_string(i)) : n.name);
      }
    }
  }

 private:
  struct Node {
    Tensor<T> val;
    std::vector<T> grad;
    std::vector<int> parents;
    std::function<void(const std::vector<T>&)> vjp;
    bool requires_grad = false;
    std::string name;
  };

  static void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
  }

  void check_same_shape(const char* op, Var a, Var b) const {
    if (node(a).val.shape != node(b).val.shape) {
      throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                  shape_str(node(a).val.shape) + " vs " +
                                  shape_str(node(b).val.shape));
    }
  }

  int next_id() const { return static_cast<int>(nodes_.size()); }

  Var push(Tensor<T> v, std::vector<int> parents, bool requires_grad,
           std::function<void(const std::vector<T>&)> vjp, std::string name = {}) {
    Node n;
    n.val = std::move(v);
    n.parents = std::move(parents);
    n.vjp = std::move(vjp);
    n.requires_grad = requires_grad;
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(Var v) { return nodes_.at(static_cast<size_t>(v.id)); }
  const Node& node(Var v) const { return nodes_.at(static_cast<size_t>(v.id)); }

  bool wants_grad(Var v) const { return node(v).requires_grad; }
  bool any_grad(Var a, Var b) const { return wants_grad(a) || wants_grad(b); }

  std::vector<T>& grad_buf(Var v) {
    Node& n = node(v);
    if (n.grad.size() != n.val.data.size()) n.grad.assign(n.val.data.size(), T(0));
    return n.grad;
  }

  void axpy(Var v, const std::vector<T>& g, T c) {
    if (!wants_grad(v)) return;
    auto& gv = grad_buf(v);
    for (size_t i = 0; i < g.size(); ++i) gv[i] += c * g[i];
  }

  std::vector<Node> nodes_;
  std::vector<std::string> disconnected_;
};

template <typename T>
using Var = typename Tape<T>::Var;

}  // namespace jpdvt
