#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>
#include <unsupported/Eigen/SpecialFunctions>

#include "seishet/tensor.hpp"

namespace seishet {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using ArrayMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrayMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

template <typename T>
ConstArrayMap<T> as_array(const Tensor<T>& t) {
  return ConstArrayMap<T>(t.ptr(), static_cast<Eigen::Index>(t.size()));
}
template <typename T>
ArrayMap<T> as_array(Tensor<T>& t) {
  return ArrayMap<T>(t.ptr(), static_cast<Eigen::Index>(t.size()));
}

// Plain matrix product. Each output element accumulates over k in ascending
// order starting from zero, so results are reproducible bit for bit.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c.ptr() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* brow = b.ptr() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<T> t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

// x * Phi(x) with the exact erf form of the Gaussian CDF.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const auto xs = as_array(x);
  as_array(y) = xs * (T(0.5) * (T(1) + (xs * T(std::numbers::sqrt2 / 2)).erf()));
  return y;
}

// d/dx [x Phi(x)] = Phi(x) + x phi(x)
template <typename T>
Tensor<T> gelu_grad(const Tensor<T>& x) {
  Tensor<T> g(x.shape());
  const auto xs = as_array(x);
  const T inv_sqrt_2pi = T(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  as_array(g) = T(0.5) * (T(1) + (xs * T(std::numbers::sqrt2 / 2)).erf()) +
                xs * inv_sqrt_2pi * (T(-0.5) * xs.square()).exp();
  return g;
}

// 1 / (1 + e^-x), clamped so the result stays strictly inside (0, 1) even when
// the exact value rounds to an endpoint.
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / 2;
  Tensor<T> y(x.shape());
  as_array(y) = (T(1) / (T(1) + (-as_array(x)).exp())).max(lo).min(hi);
  return y;
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  if (x.rank() == 0) throw DimensionError("softmax_lastdim: rank-0 tensor");
  const std::size_t n = x.shape().back();
  Tensor<T> y(x.shape());
  for (std::size_t off = 0; off < x.size(); off += n) {
    const T* in = x.ptr() + off;
    T* out = y.ptr() + off;
    const T mx = *std::max_element(in, in + n);
    T sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    const T inv = T(1) / sum;
    for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
  }
  return y;
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  Tensor<T> c(a.shape());
  as_array(c) = as_array(a) + as_array(b);
  return c;
}

template <typename T>
Tensor<T> scaled(const Tensor<T>& a, T s) {
  Tensor<T> c(a.shape());
  as_array(c) = as_array(a) * s;
  return c;
}

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& x) {
  if (acc.shape() != x.shape()) {
    throw DimensionError("accumulate: shape mismatch " + shape_str(acc.shape()) + " vs " +
                         shape_str(x.shape()));
  }
  as_array(acc) += as_array(x);
}

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

}  // namespace seishet
