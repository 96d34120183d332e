#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cocgan/error.hpp"
#include "cocgan/tensor.hpp"

// Differentiable primitives. Matrices are row-major [rows, cols]; a rank-1
// tensor of length n is treated as a single row where a matrix is expected.

namespace cocgan {

inline constexpr double kEps = 1e-8;

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapC = Eigen::Map<const RowMat<T>>;
template <class T>
using Map = Eigen::Map<RowMat<T>>;

template <class T>
void finish(const Tensor<T>& out, const char* op) {
#ifndef NDEBUG
  for (T v : out.data())
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": produced a non-finite value");
#else
  (void)out;
  (void)op;
#endif
}

template <class T>
void require_matrix(const Tensor<T>& x, const char* op) {
  if (x.rank() != 2) throw ConfigError(std::string(op) + ": expected a matrix, got " + to_string(x.shape()));
}

template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ConfigError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <class T, class F, class DF>
Tensor<T> unary(const Tensor<T>& x, const char* name, F f, DF df) {
  auto out = make_result<T>(x.shape());
  auto xs = x.data();
  auto os = out.mutable_data();
  for (std::size_t i = 0; i < xs.size(); ++i) os[i] = f(xs[i]);
  finish(out, name);
  if (any_requires_grad<T>({&x})) {
    attach<T>(out, [xn = x.ptr(), df](Node<T>& self) {
      T* gx = grad_of(xn);
      if (!gx) return;
      for (std::size_t i = 0; i < self.value.size(); ++i) gx[i] += self.grad[i] * df(xn->value[i], self.value[i]);
    });
  }
  return out;
}

}  // namespace detail

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ConfigError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " + to_string(b.shape()));
  auto out = detail::make_result<T>({m, n});
  detail::Map<T>(out.mutable_data().data(), m, n).noalias() =
      detail::MapC<T>(a.data().data(), m, k) * detail::MapC<T>(b.data().data(), k, n);
  detail::finish(out, "matmul");
  if (detail::any_requires_grad<T>({&a, &b})) {
    detail::attach<T>(out, [an = a.ptr(), bn = b.ptr(), m, k, n](Node<T>& self) {
      detail::MapC<T> go(self.grad.data(), m, n);
      if (T* ga = detail::grad_of(an))
        detail::Map<T>(ga, m, k).noalias() += go * detail::MapC<T>(bn->value.data(), k, n).transpose();
      if (T* gb = detail::grad_of(bn))
        detail::Map<T>(gb, k, n).noalias() += detail::MapC<T>(an->value.data(), m, k).transpose() * go;
    });
  }
  return out;
}

// x[m,in] * w[in,out] + b[out]; `b` may be undefined.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b = {}) {
  detail::require_matrix(x, "linear");
  detail::require_matrix(w, "linear");
  const auto m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k)
    throw ConfigError("linear: input width " + std::to_string(k) + " does not match weight " + to_string(w.shape()));
  if (b.defined() && b.size() != n)
    throw ConfigError("linear: bias " + to_string(b.shape()) + " does not match output width " + std::to_string(n));
  auto out = detail::make_result<T>({m, n});
  detail::Map<T> o(out.mutable_data().data(), m, n);
  o.noalias() = detail::MapC<T>(x.data().data(), m, k) * detail::MapC<T>(w.data().data(), k, n);
  if (b.defined()) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(b.data().data(), n);
    o.rowwise() += bv;
  }
  detail::finish(out, "linear");
  if (detail::any_requires_grad<T>({&x, &w, &b})) {
    auto bn = b.defined() ? b.ptr() : nullptr;
    detail::attach<T>(out, [xn = x.ptr(), wn = w.ptr(), bn, m, k, n](Node<T>& self) {
      detail::MapC<T> go(self.grad.data(), m, n);
      if (T* gx = detail::grad_of(xn))
        detail::Map<T>(gx, m, k).noalias() += go * detail::MapC<T>(wn->value.data(), k, n).transpose();
      if (T* gw = detail::grad_of(wn))
        detail::Map<T>(gw, k, n).noalias() += detail::MapC<T>(xn->value.data(), m, k).transpose() * go;
      if (bn)
        if (T* gb = detail::grad_of(bn))
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb, n) += go.colwise().sum();
    });
  }
  return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a, b, "add");
  auto out = detail::make_result<T>(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  detail::finish(out, "add");
  if (detail::any_requires_grad<T>({&a, &b})) {
    detail::attach<T>(out, [an = a.ptr(), bn = b.ptr()](Node<T>& self) {
      for (auto* g : {detail::grad_of(an), detail::grad_of(bn)})
        if (g)
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a, b, "sub");
  auto out = detail::make_result<T>(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] - b[i];
  detail::finish(out, "sub");
  if (detail::any_requires_grad<T>({&a, &b})) {
    detail::attach<T>(out, [an = a.ptr(), bn = b.ptr()](Node<T>& self) {
      if (T* g = detail::grad_of(an))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      if (T* g = detail::grad_of(bn))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a, b, "mul");
  auto out = detail::make_result<T>(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
  detail::finish(out, "mul");
  if (detail::any_requires_grad<T>({&a, &b})) {
    detail::attach<T>(out, [an = a.ptr(), bn = b.ptr()](Node<T>& self) {
      if (T* g = detail::grad_of(an))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bn->value[i];
      if (T* g = detail::grad_of(bn))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * an->value[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary<T>(
      x, "scale", [s](T v) { return s * v; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary<T>(
      x, "add_scalar", [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

// x * a + b with learnable scalars a, b of shape [1].
template <class T>
Tensor<T> affine_scalar(const Tensor<T>& x, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.size() != 1 || b.size() != 1) throw ConfigError("affine_scalar: a and b must hold one value");
  auto out = detail::make_result<T>(x.shape());
  const T av = a.item(), bv = b.item();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av * x[i] + bv;
  detail::finish(out, "affine_scalar");
  if (detail::any_requires_grad<T>({&x, &a, &b})) {
    detail::attach<T>(out, [xn = x.ptr(), an = a.ptr(), bn = b.ptr()](Node<T>& self) {
      const T av = an->value[0];
      if (T* g = detail::grad_of(xn))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av;
      if (T* g = detail::grad_of(an)) {
        T acc = 0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xn->value[i];
        g[0] += acc;
      }
      if (T* g = detail::grad_of(bn)) {
        T acc = 0;
        for (T v : self.grad) acc += v;
        g[0] += acc;
      }
    });
  }
  return out;
}

template <class T>
T sigmoid_value(T v) {
  return v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary<T>(
      x, "sigmoid", [](T v) { return sigmoid_value(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary<T>(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

// tanh approximation of GELU.
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  static constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  static constexpr T a = T(0.044715);
  return detail::unary<T>(
      x, "gelu",
      [](T v) { return T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v))); },
      [](T v, T) {
        const T t = std::tanh(c * (v + a * v * v * v));
        return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * c * (T(1) + T(3) * a * v * v);
      });
}

// log(max(x, eps)); the clamp keeps saturated sigmoid scores finite.
template <class T>
Tensor<T> log_clamped(const Tensor<T>& x, T eps) {
  return detail::unary<T>(
      x, "log_clamped", [eps](T v) { return std::log(std::max(v, eps)); },
      [eps](T v, T) { return v > eps ? T(1) / v : T(0); });
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  auto out = Tensor<T>::scalar(acc);
  if (detail::any_requires_grad<T>({&x})) {
    detail::attach<T>(out, [xn = x.ptr()](Node<T>& self) {
      if (T* g = detail::grad_of(xn))
        for (std::size_t i = 0; i < xn->value.size(); ++i) g[i] += self.grad[0];
    });
  }
  return out;
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return scale(sum_all(x), T(1) / static_cast<T>(x.size()));
}

// Reduction of a matrix over axis 0 (-> [1, cols]) or axis 1 (-> [rows, 1]).
template <class T>
Tensor<T> sum(const Tensor<T>& x, int axis) {
  detail::require_matrix(x, "sum");
  const auto m = x.dim(0), n = x.dim(1);
  if (axis != 0 && axis != 1) throw ConfigError("sum: axis must be 0 or 1");
  auto out = detail::make_result<T>(axis == 0 ? Shape{1, n} : Shape{m, 1});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[axis == 0 ? j : i] += x[i * n + j];
  if (detail::any_requires_grad<T>({&x})) {
    detail::attach<T>(out, [xn = x.ptr(), m, n, axis](Node<T>& self) {
      if (T* g = detail::grad_of(xn))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[axis == 0 ? j : i];
    });
  }
  return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& x, int axis) {
  detail::require_matrix(x, "mean");
  return scale(sum(x, axis), T(1) / static_cast<T>(x.dim(axis == 0 ? 0 : 1)));
}

// Adds row vector r (length cols) to every row of x.
template <class T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& r) {
  detail::require_matrix(x, "add_row");
  const auto m = x.dim(0), n = x.dim(1);
  if (r.size() != n) throw ConfigError("add_row: row " + to_string(r.shape()) + " vs matrix " + to_string(x.shape()));
  auto out = detail::make_result<T>(x.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = x[i * n + j] + r[j];
  detail::finish(out, "add_row");
  if (detail::any_requires_grad<T>({&x, &r})) {
    detail::attach<T>(out, [xn = x.ptr(), rn = r.ptr(), m, n](Node<T>& self) {
      if (T* g = detail::grad_of(xn))
        for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
      if (T* g = detail::grad_of(rn))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    });
  }
  return out;
}

// Tiles row vector r (length n) into an [m, n] matrix.
template <class T>
Tensor<T> broadcast_rows(const Tensor<T>& r, std::size_t m) {
  return add_row(Tensor<T>::zeros({m, r.size()}), r);
}

// Normalizes each row to zero mean / unit variance, then applies gamma, beta.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(kEps)) {
  detail::require_matrix(x, "layer_norm");
  const auto m = x.dim(0), n = x.dim(1);
  if (gamma.size() != n || beta.size() != n)
    throw ConfigError("layer_norm: affine parameters must have length " + std::to_string(n));
  auto out = detail::make_result<T>(x.shape());
  std::vector<T> xhat(m * n), inv_std(m);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data().data() + i * n;
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      o[i * n + j] = xhat[i * n + j] * gamma[j] + beta[j];
    }
  }
  detail::finish(out, "layer_norm");
  if (detail::any_requires_grad<T>({&x, &gamma, &beta})) {
    detail::attach<T>(out, [xn = x.ptr(), gn = gamma.ptr(), bn = beta.ptr(), xhat = std::move(xhat),
                            inv_std = std::move(inv_std), m, n](Node<T>& self) {
      const T* go = self.grad.data();
      if (T* gg = detail::grad_of(gn))
        for (std::size_t i = 0; i < m * n; ++i) gg[i % n] += go[i] * xhat[i];
      if (T* gb = detail::grad_of(bn))
        for (std::size_t i = 0; i < m * n; ++i) gb[i % n] += go[i];
      if (T* gx = detail::grad_of(xn)) {
        const T* gamma_v = gn->value.data();
        for (std::size_t i = 0; i < m; ++i) {
          T s1 = 0, s2 = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const T d = go[i * n + j] * gamma_v[j];
            s1 += d;
            s2 += d * xhat[i * n + j];
          }
          s1 /= static_cast<T>(n);
          s2 /= static_cast<T>(n);
          for (std::size_t j = 0; j < n; ++j) {
            const T d = go[i * n + j] * gamma_v[j];
            gx[i * n + j] += inv_std[i] * (d - s1 - xhat[i * n + j] * s2);
          }
        }
      }
    });
  }
  return out;
}

// Each row divided by max(|row|, eps).
template <class T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps = T(kEps)) {
  detail::require_matrix(x, "l2_normalize_rows");
  const auto m = x.dim(0), n = x.dim(1);
  auto out = detail::make_result<T>(x.shape());
  std::vector<T> inv(m);
  std::vector<char> below(m);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i) {
    T ss = 0;
    for (std::size_t j = 0; j < n; ++j) ss += x[i * n + j] * x[i * n + j];
    const T norm = std::sqrt(ss);
    inv[i] = T(1) / (norm > eps ? norm : eps);
    below[i] = !(norm > eps);
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = x[i * n + j] * inv[i];
  }
  detail::finish(out, "l2_normalize_rows");
  if (detail::any_requires_grad<T>({&x})) {
    detail::attach<T>(out, [xn = x.ptr(), inv = std::move(inv), below = std::move(below), m, n](Node<T>& self) {
      T* gx = detail::grad_of(xn);
      if (!gx) return;
      for (std::size_t i = 0; i < m; ++i) {
        if (below[i]) {
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += inv[i] * self.grad[i * n + j];
          continue;
        }
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * self.value[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          gx[i * n + j] += inv[i] * (self.grad[i * n + j] - self.value[i * n + j] * dot);
      }
    });
  }
  return out;
}

// Cosine similarity between rows of a grouped pair: a holds `groups` blocks of
// ca rows, b holds `groups` blocks of nb rows; result [groups*ca, nb] where
// row g*ca+i, column j compares a-row (g,i) with b-row (g,j).
template <class T>
Tensor<T> cosine_similarity_grouped(const Tensor<T>& a, const Tensor<T>& b, std::size_t groups, T eps = T(kEps)) {
  detail::require_matrix(a, "cosine_similarity");
  detail::require_matrix(b, "cosine_similarity");
  if (a.dim(1) != b.dim(1))
    throw ConfigError("cosine_similarity: feature widths differ " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  if (groups == 0 || a.dim(0) % groups || b.dim(0) % groups)
    throw ConfigError("cosine_similarity: row counts not divisible into groups");
  const auto d = a.dim(1), ca = a.dim(0) / groups, nb = b.dim(0) / groups;
  auto an = l2_normalize_rows(a, eps);
  auto bn = l2_normalize_rows(b, eps);
  auto out = detail::make_result<T>({groups * ca, nb});
  auto o = out.mutable_data();
  for (std::size_t g = 0; g < groups; ++g) {
    detail::MapC<T> A(an.data().data() + g * ca * d, ca, d);
    detail::MapC<T> B(bn.data().data() + g * nb * d, nb, d);
    detail::Map<T>(o.data() + g * ca * nb, ca, nb).noalias() = A * B.transpose();
  }
  detail::finish(out, "cosine_similarity");
  if (detail::any_requires_grad<T>({&an, &bn})) {
    detail::attach<T>(out, [an = an.ptr(), bn = bn.ptr(), groups, ca, nb, d](Node<T>& self) {
      T* ga = detail::grad_of(an);
      T* gb = detail::grad_of(bn);
      for (std::size_t g = 0; g < groups; ++g) {
        detail::MapC<T> go(self.grad.data() + g * ca * nb, ca, nb);
        if (ga)
          detail::Map<T>(ga + g * ca * d, ca, d).noalias() +=
              go * detail::MapC<T>(bn->value.data() + g * nb * d, nb, d);
        if (gb)
          detail::Map<T>(gb + g * nb * d, nb, d).noalias() +=
              go.transpose() * detail::MapC<T>(an->value.data() + g * ca * d, ca, d);
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b, T eps = T(kEps)) {
  return cosine_similarity_grouped(a, b, 1, eps);
}

// Concatenation of matrices along axis 0 (rows) or 1 (columns).
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  if (xs.empty()) throw ConfigError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ConfigError("concat: axis must be 0 or 1");
  for (const auto& x : xs) detail::require_matrix(x, "concat");
  const std::size_t fixed = xs[0].dim(axis == 0 ? 1 : 0);
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& x : xs) {
    if (x.dim(axis == 0 ? 1 : 0) != fixed) throw ConfigError("concat: inputs disagree on the non-concatenated extent");
    offsets.push_back(total);
    total += x.dim(axis);
  }
  const std::size_t m = axis == 0 ? total : fixed, n = axis == 0 ? fixed : total;
  auto out = detail::make_result<T>({m, n});
  auto o = out.mutable_data();
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto& x = xs[k];
    const auto xm = x.dim(0), xn = x.dim(1);
    for (std::size_t i = 0; i < xm; ++i)
      for (std::size_t j = 0; j < xn; ++j) {
        const auto dst = axis == 0 ? (offsets[k] + i) * n + j : i * n + offsets[k] + j;
        o[dst] = x[i * xn + j];
      }
  }
  bool rg = false;
  for (const auto& x : xs) rg = rg || detail::any_requires_grad<T>({&x});
  if (rg) {
    std::vector<std::shared_ptr<Node<T>>> nodes;
    for (const auto& x : xs) nodes.push_back(x.ptr());
    detail::attach<T>(out, [nodes = std::move(nodes), offsets = std::move(offsets), axis, n](Node<T>& self) {
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        T* g = detail::grad_of(nodes[k]);
        if (!g) continue;
        const auto xm = nodes[k]->shape[0], xn = nodes[k]->shape[1];
        for (std::size_t i = 0; i < xm; ++i)
          for (std::size_t j = 0; j < xn; ++j) {
            const auto src = axis == 0 ? (offsets[k] + i) * n + j : i * n + offsets[k] + j;
            g[i * xn + j] += self.grad[src];
          }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ConfigError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  auto out = Tensor<T>(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (detail::any_requires_grad<T>({&x})) {
    detail::attach<T>(out, [xn = x.ptr()](Node<T>& self) {
      if (T* g = detail::grad_of(xn))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
  }
  return out;
}

// out.flat[i] = x.flat[index[i]]; gradients scatter-add back.
template <class T>
Tensor<T> gather_elements(const Tensor<T>& x, std::vector<std::size_t> index, Shape shape) {
  if (numel(shape) != index.size()) throw ConfigError("gather_elements: index count does not match output shape");
  auto out = detail::make_result<T>(std::move(shape));
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.size()) throw ConfigError("gather_elements: index out of range");
    o[i] = x[index[i]];
  }
  if (detail::any_requires_grad<T>({&x})) {
    detail::attach<T>(out, [xn = x.ptr(), index = std::move(index)](Node<T>& self) {
      if (T* g = detail::grad_of(xn))
        for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += self.grad[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
  detail::require_matrix(x, "gather_rows");
  const auto n = x.dim(1);
  std::vector<std::size_t> idx;
  idx.reserve(rows.size() * n);
  for (auto r : rows) {
    if (r >= x.dim(0)) throw ConfigError("gather_rows: row index out of range");
    for (std::size_t j = 0; j < n; ++j) idx.push_back(r * n + j);
  }
  return gather_elements(x, std::move(idx), {rows.size(), n});
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  detail::require_matrix(x, "slice_rows");
  if (begin > end || end > x.dim(0)) throw ConfigError("slice_rows: bad range");
  std::vector<std::size_t> rows(end - begin);
  std::iota(rows.begin(), rows.end(), begin);
  return gather_rows(x, rows);
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  detail::require_matrix(x, "slice_cols");
  if (begin > end || end > x.dim(1)) throw ConfigError("slice_cols: bad range");
  const auto m = x.dim(0), n = x.dim(1), w = end - begin;
  std::vector<std::size_t> idx;
  idx.reserve(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = begin; j < end; ++j) idx.push_back(i * n + j);
  return gather_elements(x, std::move(idx), {m, w});
}

// Mean over rows of -log softmax(logits)[label].
template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  detail::require_matrix(logits, "softmax_cross_entropy");
  const auto m = logits.dim(0), k = logits.dim(1);
  if (labels.size() != m) throw ConfigError("softmax_cross_entropy: one label per row required");
  std::vector<T> prob(m * k);
  T loss = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) throw InputError("softmax_cross_entropy: label out of range");
    const T* row = logits.data().data() + i * k;
    const T mx = *std::max_element(row, row + k);
    T z = 0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < k; ++j) prob[i * k + j] = std::exp(row[j] - mx) / z;
    loss -= row[labels[i]] - mx - std::log(z);
  }
  auto out = Tensor<T>::scalar(loss / static_cast<T>(m));
  detail::finish(out, "softmax_cross_entropy");
  if (detail::any_requires_grad<T>({&logits})) {
    detail::attach<T>(out, [ln = logits.ptr(), prob = std::move(prob), labels, m, k](Node<T>& self) {
      T* g = detail::grad_of(ln);
      if (!g) return;
      const T s = self.grad[0] / static_cast<T>(m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j)
          g[i * k + j] += s * (prob[i * k + j] - (static_cast<int>(j) == labels[i] ? T(1) : T(0)));
    });
  }
  return out;
}

// Row-wise softmax without graph recording (used for reporting probabilities).
template <class T>
std::vector<T> softmax_rows(const Tensor<T>& logits) {
  const auto m = logits.dim(0), k = logits.dim(1);
  std::vector<T> p(m * k);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = logits.data().data() + i * k;
    const T mx = *std::max_element(row, row + k);
    T z = 0;
    for (std::size_t j = 0; j < k; ++j) z += (p[i * k + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] /= z;
  }
  return p;
}

}  // namespace cocgan
