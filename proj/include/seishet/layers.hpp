#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "seishet/ops.hpp"
#include "seishet/prng.hpp"
#include "seishet/tensor.hpp"

namespace seishet {

// Cross-correlation layer (no kernel flip), zero padding.
template <typename T>
struct Conv2d {
  Tensor<T> weight;  // out x in x k x k
  Tensor<T> bias;    // out
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t kernel() const { return weight.dim(2); }
};

// weight layout is in x out x k x k, the same memory layout as the Conv2d it
// is the adjoint of.
template <typename T>
struct TransposedConv2d {
  Tensor<T> weight;  // in x out x k x k
  Tensor<T> bias;    // out
  std::size_t stride = 2;
  std::size_t padding = 1;
  std::size_t output_padding = 1;

  std::size_t in_channels() const { return weight.dim(0); }
  std::size_t out_channels() const { return weight.dim(1); }
  std::size_t kernel() const { return weight.dim(2); }
};

template <typename T>
struct Dense {
  Tensor<T> weight;  // out x in
  Tensor<T> bias;    // out

  std::size_t out_features() const { return weight.dim(0); }
  std::size_t in_features() const { return weight.dim(1); }
};

template <typename T>
Conv2d<T> make_conv2d(std::size_t in, std::size_t out, std::size_t k, std::size_t stride = 1,
                      std::size_t padding = 0) {
  return {Tensor<T>({out, in, k, k}), Tensor<T>({out}), stride, padding};
}

template <typename T>
TransposedConv2d<T> make_transposed_conv2d(std::size_t in, std::size_t out, std::size_t k = 3,
                                           std::size_t stride = 2, std::size_t padding = 1,
                                           std::size_t output_padding = 1) {
  return {Tensor<T>({in, out, k, k}), Tensor<T>({out}), stride, padding, output_padding};
}

template <typename T>
Dense<T> make_dense(std::size_t in, std::size_t out) {
  return {Tensor<T>({out, in}), Tensor<T>({out})};
}

namespace detail {

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t kernel, stride, padding;
  std::size_t out_height, out_width;

  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return batch * out_height * out_width; }
};

inline ConvGeometry conv_geometry(const Shape& x, std::size_t kernel, std::size_t stride,
                                  std::size_t padding) {
  if (stride == 0) throw ConfigError("convolution stride must be positive");
  const std::size_t h = x[2] + 2 * padding, w = x[3] + 2 * padding;
  if (h < kernel || w < kernel) {
    throw DimensionError("convolution input " + shape_str(x) + " smaller than kernel " +
                         std::to_string(kernel));
  }
  return {x[0], x[1], x[2], x[3], kernel, stride, padding,
          (h - kernel) / stride + 1, (w - kernel) / stride + 1};
}

// Output columns [lo, hi) whose input column ox * stride + k - pad lies
// inside [0, extent).
struct ValidSpan {
  std::size_t lo, hi;
};

inline ValidSpan valid_span(std::size_t out, std::size_t extent, std::size_t k, std::size_t stride,
                            std::size_t pad) {
  const std::size_t lo = pad > k ? (pad - k + stride - 1) / stride : 0;
  if (extent + pad <= k) return {0, 0};
  const std::size_t hi = std::min(out, (extent - 1 + pad - k) / stride + 1);
  return {std::min(lo, hi), hi};
}

// col has g.col_rows() rows (channel, ky, kx) and g.col_cols() columns (batch, oy, ox).
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t plane = g.out_height * g.out_width;
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      const auto rows = valid_span(g.out_height, g.height, ky, g.stride, g.padding);
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const auto cols = valid_span(g.out_width, g.width, kx, g.stride, g.padding);
        T* row = col + ((c * g.kernel + ky) * g.kernel + kx) * ncols;
        for (std::size_t b = 0; b < g.batch; ++b) {
          const T* src = x + (b * g.channels + c) * g.height * g.width;
          T* dst = row + b * plane;
          std::fill(dst, dst + rows.lo * g.out_width, T(0));
          for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
            const T* s = src + (oy * g.stride + ky - g.padding) * g.width + cols.lo * g.stride + kx - g.padding;
            T* d = dst + oy * g.out_width;
            std::fill(d, d + cols.lo, T(0));
            if (g.stride == 1) {
              std::copy_n(s, cols.hi - cols.lo, d + cols.lo);
            } else {
              for (std::size_t ox = cols.lo; ox < cols.hi; ++ox, s += g.stride) d[ox] = *s;
            }
            std::fill(d + cols.hi, d + g.out_width, T(0));
          }
          std::fill(dst + rows.hi * g.out_width, dst + plane, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into an image (x must be zeroed).
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* x) {
  const std::size_t plane = g.out_height * g.out_width;
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      const auto rows = valid_span(g.out_height, g.height, ky, g.stride, g.padding);
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const auto cols = valid_span(g.out_width, g.width, kx, g.stride, g.padding);
        const T* row = col + ((c * g.kernel + ky) * g.kernel + kx) * ncols;
        for (std::size_t b = 0; b < g.batch; ++b) {
          T* dst = x + (b * g.channels + c) * g.height * g.width;
          const T* src = row + b * plane;
          for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
            T* d = dst + (oy * g.stride + ky - g.padding) * g.width + cols.lo * g.stride + kx - g.padding;
            const T* s = src + oy * g.out_width;
            if (g.stride == 1) {
              for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) d[ox - cols.lo] += s[ox];
            } else {
              for (std::size_t ox = cols.lo; ox < cols.hi; ++ox, d += g.stride) *d += s[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void add_channel_bias(Tensor<T>& y, const Tensor<T>& bias) {
  const std::size_t batch = y.dim(0), channels = y.dim(1);
  const std::size_t plane = y.size() / (batch * channels);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      T* p = y.ptr() + (b * channels + c) * plane;
      const T v = bias[c];
      for (std::size_t i = 0; i < plane; ++i) p[i] += v;
    }
}

template <typename T>
Tensor<T> channel_sums(const Tensor<T>& y) {
  const std::size_t batch = y.dim(0), channels = y.dim(1);
  const std::size_t plane = y.size() / (batch * channels);
  Tensor<T> s({channels});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      const T* p = y.ptr() + (b * channels + c) * plane;
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      s[c] += acc;
    }
  return s;
}

}  // namespace detail

// One GEMM per sample, so a sample's output never depends on what else is in
// the batch.
template <typename T>
Tensor<T> conv2d_forward(const Conv2d<T>& layer, const Tensor<T>& x) {
  require_rank(x, 4, "conv2d");
  if (x.dim(1) != layer.in_channels()) {
    throw DimensionError("conv2d: input has " + std::to_string(x.dim(1)) +
                         " channels, layer expects " + std::to_string(layer.in_channels()));
  }
  auto g = detail::conv_geometry(x.shape(), layer.kernel(), layer.stride, layer.padding);
  const std::size_t batch = g.batch, out = layer.out_channels(), plane = g.out_height * g.out_width;
  g.batch = 1;
  Buffer<T> col(g.col_rows() * plane);
  const ConstMatrixMap<T> w(layer.weight.ptr(), out, g.col_rows());
  Tensor<T> y({batch, out, g.out_height, g.out_width}, Uninitialized{});
  for (std::size_t b = 0; b < batch; ++b) {
    detail::im2col(x.ptr() + b * g.channels * g.height * g.width, g, col.data());
    MatrixMap<T>(y.ptr() + b * out * plane, out, plane).noalias() =
        w * ConstMatrixMap<T>(col.data(), g.col_rows(), plane);
  }
  detail::add_channel_bias(y, layer.bias);
  return y;
}

template <typename T>
struct Conv2dGrads {
  Tensor<T> grad_x;  // empty when not requested
  Tensor<T> grad_w;
  Tensor<T> grad_b;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Conv2d<T>& layer, const Tensor<T>& x, const Tensor<T>& grad_out,
                               bool need_grad_x = true) {
  require_rank(x, 4, "conv2d_backward");
  if (x.dim(1) != layer.in_channels()) {
    throw DimensionError("conv2d_backward: input has " + std::to_string(x.dim(1)) +
                         " channels, layer expects " + std::to_string(layer.in_channels()));
  }
  const auto g = detail::conv_geometry(x.shape(), layer.kernel(), layer.stride, layer.padding);
  const std::size_t out = layer.out_channels();
  require_shape(grad_out, {g.batch, out, g.out_height, g.out_width}, "conv2d_backward grad_out");

  // Per sample, so the column buffer stays cache-sized; weight gradients
  // accumulate in sample order.
  const std::size_t batch = g.batch, plane = g.out_height * g.out_width, in_size = g.channels * g.height * g.width;
  auto gs = g;
  gs.batch = 1;
  Buffer<T> col(g.col_rows() * plane);
  const ConstMatrixMap<T> w(layer.weight.ptr(), out, g.col_rows());
  Conv2dGrads<T> grads;
  grads.grad_w = Tensor<T>(layer.weight.shape());
  MatrixMap<T> gw(grads.grad_w.ptr(), out, g.col_rows());
  if (need_grad_x) grads.grad_x = Tensor<T>(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const ConstMatrixMap<T> gmat(grad_out.ptr() + b * out * plane, out, plane);
    detail::im2col(x.ptr() + b * in_size, gs, col.data());
    gw.noalias() += gmat * ConstMatrixMap<T>(col.data(), g.col_rows(), plane).transpose();
    if (need_grad_x) {
      MatrixMap<T>(col.data(), g.col_rows(), plane).noalias() = w.transpose() * gmat;
      detail::col2im(col.data(), gs, grads.grad_x.ptr() + b * in_size);
    }
  }
  grads.grad_b = detail::channel_sums(grad_out);
  return grads;
}

namespace detail {

inline ConvGeometry transposed_geometry(const Shape& x, std::size_t out_channels, std::size_t kernel,
                                        std::size_t stride, std::size_t padding,
                                        std::size_t output_padding) {
  const std::size_t full_h = (x[2] - 1) * stride + kernel + output_padding;
  const std::size_t full_w = (x[3] - 1) * stride + kernel + output_padding;
  if (full_h <= 2 * padding || full_w <= 2 * padding) {
    throw DimensionError("transposed conv: padding too large for input " + shape_str(x));
  }
  // The image side of the geometry is the transposed conv's output; its
  // "columns" side is the transposed conv's input grid.
  ConvGeometry g{x[0], out_channels, full_h - 2 * padding, full_w - 2 * padding,
                 kernel, stride, padding, x[2], x[3]};
  const auto check = conv_geometry({g.batch, g.channels, g.height, g.width}, kernel, stride, padding);
  if (check.out_height != x[2] || check.out_width != x[3]) {
    throw DimensionError("transposed conv: inconsistent geometry for input " + shape_str(x));
  }
  return g;
}

}  // namespace detail

template <typename T>
Tensor<T> transposed_conv2d_forward(const TransposedConv2d<T>& layer, const Tensor<T>& x) {
  require_rank(x, 4, "transposed_conv2d");
  if (x.dim(1) != layer.in_channels()) {
    throw DimensionError("transposed_conv2d: input has " + std::to_string(x.dim(1)) +
                         " channels, layer expects " + std::to_string(layer.in_channels()));
  }
  auto g = detail::transposed_geometry(x.shape(), layer.out_channels(), layer.kernel(), layer.stride,
                                       layer.padding, layer.output_padding);
  const std::size_t batch = g.batch, in = layer.in_channels(), plane = g.out_height * g.out_width;
  g.batch = 1;
  Buffer<T> col(g.col_rows() * plane);
  const ConstMatrixMap<T> w(layer.weight.ptr(), in, g.col_rows());
  Tensor<T> y({batch, g.channels, g.height, g.width});
  for (std::size_t b = 0; b < batch; ++b) {
    MatrixMap<T>(col.data(), g.col_rows(), plane).noalias() =
        w.transpose() * ConstMatrixMap<T>(x.ptr() + b * in * plane, in, plane);
    detail::col2im(col.data(), g, y.ptr() + b * g.channels * g.height * g.width);
  }
  detail::add_channel_bias(y, layer.bias);
  return y;
}

template <typename T>
struct TransposedConv2dGrads {
  Tensor<T> grad_x;
  Tensor<T> grad_w;
  Tensor<T> grad_b;
};

template <typename T>
TransposedConv2dGrads<T> transposed_conv2d_backward(const TransposedConv2d<T>& layer,
                                                    const Tensor<T>& x, const Tensor<T>& grad_out) {
  require_rank(x, 4, "transposed_conv2d_backward");
  const auto g = detail::transposed_geometry(x.shape(), layer.out_channels(), layer.kernel(),
                                             layer.stride, layer.padding, layer.output_padding);
  require_shape(grad_out, {g.batch, g.channels, g.height, g.width},
                "transposed_conv2d_backward grad_out");
  const std::size_t in = layer.in_channels(), batch = g.batch, plane = g.out_height * g.out_width,
                    out_size = g.channels * g.height * g.width;
  auto gs = g;
  gs.batch = 1;
  Buffer<T> col(g.col_rows() * plane);
  const ConstMatrixMap<T> w(layer.weight.ptr(), in, g.col_rows());
  TransposedConv2dGrads<T> grads;
  grads.grad_w = Tensor<T>(layer.weight.shape());
  MatrixMap<T> gw(grads.grad_w.ptr(), in, g.col_rows());
  grads.grad_x = Tensor<T>(x.shape(), Uninitialized{});
  for (std::size_t b = 0; b < batch; ++b) {
    detail::im2col(grad_out.ptr() + b * out_size, gs, col.data());
    const ConstMatrixMap<T> cmat(col.data(), g.col_rows(), plane);
    gw.noalias() += ConstMatrixMap<T>(x.ptr() + b * in * plane, in, plane) * cmat.transpose();
    MatrixMap<T>(grads.grad_x.ptr() + b * in * plane, in, plane).noalias() = w * cmat;
  }
  grads.grad_b = detail::channel_sums(grad_out);
  return grads;
}

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

// 2x2 window, stride 2. Ties resolve to the first element in row-major order.
template <typename T>
MaxPoolResult<T> maxpool2d(const Tensor<T>& x) {
  require_rank(x, 4, "maxpool2d");
  const std::size_t h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("maxpool2d: spatial dims must be even, got " + shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), oh = h / 2, ow = w / 2;
  MaxPoolResult<T> r{Tensor<T>({x.dim(0), x.dim(1), oh, ow}), std::vector<std::size_t>(planes * oh * ow)};
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + (2 * oy) * w + 2 * ox;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t c : cand)
          if (x[c] > x[best]) best = c;
        const std::size_t o = (p * oh + oy) * ow + ox;
        r.output[o] = x[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                             const Tensor<T>& grad_out) {
  if (grad_out.size() != argmax.size()) throw DimensionError("maxpool2d_backward: size mismatch");
  Tensor<T> gx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += grad_out[o];
  return gx;
}

// x: B x in -> B x out
template <typename T>
Tensor<T> dense_forward(const Dense<T>& layer, const Tensor<T>& x) {
  require_rank(x, 2, "dense");
  if (x.dim(1) != layer.in_features()) {
    throw DimensionError("dense: input width " + std::to_string(x.dim(1)) + ", layer expects " +
                         std::to_string(layer.in_features()));
  }
  const std::size_t batch = x.dim(0), in = layer.in_features(), out = layer.out_features();
  Tensor<T> y({batch, out});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out; ++o) {
      T acc = 0;
      for (std::size_t i = 0; i < in; ++i) acc += layer.weight[o * in + i] * x[b * in + i];
      y[b * out + o] = acc + layer.bias[o];
    }
  return y;
}

template <typename T>
struct DenseGrads {
  Tensor<T> grad_x;
  Tensor<T> grad_w;
  Tensor<T> grad_b;
};

template <typename T>
DenseGrads<T> dense_backward(const Dense<T>& layer, const Tensor<T>& x, const Tensor<T>& grad_out) {
  const std::size_t batch = x.dim(0), in = layer.in_features(), out = layer.out_features();
  require_shape(grad_out, {batch, out}, "dense_backward grad_out");
  DenseGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(layer.weight.shape()), Tensor<T>(layer.bias.shape())};
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out; ++o) {
      const T go = grad_out[b * out + o];
      g.grad_b[o] += go;
      for (std::size_t i = 0; i < in; ++i) {
        g.grad_w[o * in + i] += go * x[b * in + i];
        g.grad_x[b * in + i] += go * layer.weight[o * in + i];
      }
    }
  return g;
}

template <typename T>
struct LossResult {
  double loss = 0;
  Tensor<T> grad;  // d loss / d logits
};

// Mean over batch and pixels of -w_t log softmax(logits)[t], where w_1 is the
// positive-class weight and w_0 = 1.
template <typename T>
LossResult<T> cross_entropy_2class(const Tensor<T>& logits, const Tensor<T>& target,
                                   double positive_weight = 1.0) {
  require_rank(logits, 4, "cross_entropy_2class");
  if (logits.dim(1) != 2) throw DimensionError("cross_entropy_2class: logits need 2 channels");
  const std::size_t batch = logits.dim(0), plane = logits.dim(2) * logits.dim(3);
  require_shape(target, {batch, logits.dim(2), logits.dim(3)}, "cross_entropy_2class target");
  const double inv_n = 1.0 / static_cast<double>(batch * plane);
  LossResult<T> r{0.0, Tensor<T>(logits.shape())};
  for (std::size_t b = 0; b < batch; ++b) {
    const T* l0 = logits.ptr() + (b * 2) * plane;
    const T* l1 = l0 + plane;
    T* g0 = r.grad.ptr() + (b * 2) * plane;
    T* g1 = g0 + plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const T t = target[b * plane + i];
      if (t != T(0) && t != T(1)) {
        throw LabelError("cross_entropy_2class: target value " + std::to_string(double(t)) +
                         " at pixel " + std::to_string(b * plane + i) + " is not 0 or 1");
      }
      const double a = l0[i], c = l1[i];
      const double m = std::max(a, c);
      const double lse = m + std::log(std::exp(a - m) + std::exp(c - m));
      const double p1 = std::exp(c - lse);
      const double w = t == T(1) ? positive_weight : 1.0;
      r.loss += w * (lse - (t == T(1) ? c : a));
      const double d1 = w * (p1 - double(t)) * inv_n;
      g1[i] = static_cast<T>(d1);
      g0[i] = static_cast<T>(-d1);
    }
  }
  r.loss *= inv_n;
  return r;
}

inline std::pair<double, double> glorot_fans(const Shape& shape) {
  if (shape.empty()) return {1.0, 1.0};
  if (shape.size() == 1) return {double(shape[0]), double(shape[0])};
  double receptive = 1;
  for (std::size_t i = 2; i < shape.size(); ++i) receptive *= double(shape[i]);
  return {double(shape[1]) * receptive, double(shape[0]) * receptive};
}

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> glorot_init(const Shape& shape, Prng& prng) {
  const auto [fan_in, fan_out] = glorot_fans(shape);
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(prng.uniform(-limit, limit));
  return t;
}

}  // namespace seishet
