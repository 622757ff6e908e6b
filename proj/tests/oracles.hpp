#pragma once

// Reference implementations used only by tests. Each one is a direct loop
// transcription of the defining formula and shares no code path with the
// library routine it checks.

#include <cmath>
#include <cstddef>
#include <vector>

#include "seishet/prng.hpp"
#include "seishet/tensor.hpp"

namespace oracle {

using seishet::Tensor;

template <typename T>
Tensor<T> random_tensor(const seishet::Shape& shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  seishet::Prng prng(seed);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(prng.uniform(lo, hi));
  return t;
}

// Small integers: every sum of products is exact regardless of order.
template <typename T>
Tensor<T> random_integer_tensor(const seishet::Shape& shape, std::uint64_t seed, int lo = -4, int hi = 4) {
  seishet::Prng prng(seed);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(prng.uniform_int(lo, hi));
  return t;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

// Six nested loops over (batch, out, oy, ox, in, ky, kx).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                 std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), K = w.dim(2);
  const std::size_t Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  Tensor<T> y({B, O, Ho, Wo});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          T s = 0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long iy = long(oy * stride + ky) - long(pad);
                const long ix = long(ox * stride + kx) - long(pad);
                if (iy < 0 || ix < 0 || iy >= long(H) || ix >= long(W)) continue;
                s += w(o, c, ky, kx) * x(b, c, std::size_t(iy), std::size_t(ix));
              }
          y(b, o, oy, ox) = s + bias[o];
        }
  return y;
}

// logit_ij = q_i . (k_j + rw[jx - ix] + rh[jy - iy]) / sqrt(d), pair by pair.
inline Tensor<double> relative_logits(const Tensor<double>& q, const Tensor<double>& k,
                                      const Tensor<double>& rw, const Tensor<double>& rh, std::size_t H,
                                      std::size_t W) {
  const std::size_t n = H * W, d = q.dim(1);
  Tensor<double> out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const long ix = long(i % W), iy = long(i / W), jx = long(j % W), jy = long(j / W);
      const std::size_t ow = std::size_t(jx - ix + long(W) - 1), oh = std::size_t(jy - iy + long(H) - 1);
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += q(i, c) * (k(j, c) + rw(ow, c) + rh(oh, c));
      out(i, j) = s / std::sqrt(double(d));
    }
  return out;
}

inline Tensor<double> softmax_rows(const Tensor<double>& logits) {
  Tensor<double> out(logits.shape());
  const std::size_t n = logits.dim(0), m = logits.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, logits(i, j));
    double total = 0;
    for (std::size_t j = 0; j < m; ++j) total += std::exp(logits(i, j) - mx);
    for (std::size_t j = 0; j < m; ++j) out(i, j) = std::exp(logits(i, j) - mx) / total;
  }
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace oracle
