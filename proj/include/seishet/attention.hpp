#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "seishet/layers.hpp"
#include "seishet/ops.hpp"

namespace seishet {

// ---------------------------------------------------------------------------
// Squeeze-and-excitation channel gate followed by a spatial gate.

template <typename T>
struct SeBlock {
  Dense<T> fc1;  // ch -> ch / ratio
  Dense<T> fc2;  // ch / ratio -> ch
  std::size_t ratio = 1;

  std::size_t channels() const { return fc1.in_features(); }
};

template <typename T>
SeBlock<T> make_se_block(std::size_t channels, std::size_t ratio) {
  if (ratio == 0 || channels % ratio != 0) {
    throw ConfigError("SE block: ratio " + std::to_string(ratio) + " does not divide " +
                      std::to_string(channels) + " channels");
  }
  return {make_dense<T>(channels, channels / ratio), make_dense<T>(channels / ratio, channels), ratio};
}

// Global average pool: B x C x H x W -> B x C.
template <typename T>
Tensor<T> se_squeeze(const Tensor<T>& x) {
  require_rank(x, 4, "se_squeeze");
  const std::size_t batch = x.dim(0), ch = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor<T> z({batch, ch});
  const T inv = T(1) / T(plane);
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    const T* p = x.ptr() + bc * plane;
    T acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    z[bc] = acc * inv;
  }
  return z;
}

template <typename T>
struct SeGateTrace {
  Tensor<T> z, h1, a1, gate;
};

// sigma(W2 gelu(W1 z)) per channel, B x C.
template <typename T>
Tensor<T> se_gate(const SeBlock<T>& block, const Tensor<T>& z, SeGateTrace<T>* trace = nullptr) {
  auto h1 = dense_forward(block.fc1, z);
  auto a1 = gelu(h1);
  auto gate = sigmoid(dense_forward(block.fc2, a1));
  if (trace) *trace = {z, std::move(h1), std::move(a1), gate};
  return gate;
}

// Hadamard product of a B x C gate broadcast over the spatial plane.
template <typename T>
Tensor<T> apply_channel_gate(const Tensor<T>& x, const Tensor<T>& gate) {
  require_rank(x, 4, "apply_channel_gate");
  require_shape(gate, {x.dim(0), x.dim(1)}, "apply_channel_gate gate");
  const std::size_t plane = x.dim(2) * x.dim(3);
  Tensor<T> y(x.shape());
  for (std::size_t bc = 0; bc < gate.size(); ++bc) {
    const T g = gate[bc];
    const T* in = x.ptr() + bc * plane;
    T* out = y.ptr() + bc * plane;
    for (std::size_t i = 0; i < plane; ++i) out[i] = in[i] * g;
  }
  return y;
}

template <typename T>
Tensor<T> se_excite_apply(const SeBlock<T>& block, const Tensor<T>& x, const Tensor<T>& z) {
  if (x.rank() != 4 || x.dim(1) != block.channels()) {
    throw DimensionError("se_excite_apply: input " + shape_str(x.shape()) + " does not have " +
                         std::to_string(block.channels()) + " channels");
  }
  return apply_channel_gate(x, se_gate(block, z));
}

template <typename T>
struct SpatialAttention {
  Conv2d<T> conv;  // ch -> 1, 1x1
};

template <typename T>
SpatialAttention<T> make_spatial_attention(std::size_t channels) {
  return {make_conv2d<T>(channels, 1, 1, 1, 0)};
}

// B x 1 x H x W gate broadcast over channels.
template <typename T>
Tensor<T> apply_spatial_gate(const Tensor<T>& x, const Tensor<T>& gate) {
  require_shape(gate, {x.dim(0), 1, x.dim(2), x.dim(3)}, "apply_spatial_gate gate");
  const std::size_t ch = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor<T> y(x.shape());
  for (std::size_t b = 0; b < x.dim(0); ++b) {
    const T* g = gate.ptr() + b * plane;
    for (std::size_t c = 0; c < ch; ++c) {
      const T* in = x.ptr() + (b * ch + c) * plane;
      T* out = y.ptr() + (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) out[i] = in[i] * g[i];
    }
  }
  return y;
}

template <typename T>
Tensor<T> spatial_gate(const SpatialAttention<T>& sa, const Tensor<T>& x) {
  return sigmoid(conv2d_forward(sa.conv, x));
}

template <typename T>
Tensor<T> spatial_attention_apply(const SpatialAttention<T>& sa, const Tensor<T>& x) {
  return apply_spatial_gate(x, spatial_gate(sa, x));
}

// SE gate then spatial gate, as one block.
template <typename T>
struct SeAttention {
  SeBlock<T> se;
  SpatialAttention<T> spatial;
};

template <typename T>
struct SeAttentionTrace {
  Tensor<T> x;
  SeGateTrace<T> gate;
  Tensor<T> gated;  // X'
  Tensor<T> spatial_gate;
};

template <typename T>
Tensor<T> se_attention_forward(const SeAttention<T>& block, const Tensor<T>& x,
                               SeAttentionTrace<T>* trace = nullptr) {
  SeGateTrace<T> gt;
  const auto gate = se_gate(block.se, se_squeeze(x), &gt);
  auto gated = apply_channel_gate(x, gate);
  auto sgate = spatial_gate(block.spatial, gated);
  auto y = apply_spatial_gate(gated, sgate);
  if (trace) *trace = {x, std::move(gt), std::move(gated), std::move(sgate)};
  return y;
}

template <typename T>
Tensor<T> se_attention_backward(const SeAttention<T>& block, const SeAttentionTrace<T>& tr,
                                const Tensor<T>& grad_out, SeAttention<T>& grads) {
  const std::size_t batch = tr.x.dim(0), ch = tr.x.dim(1), plane = tr.x.dim(2) * tr.x.dim(3);

  // Spatial gate: y = X' * s, s = sigma(conv(X')).
  Tensor<T> grad_gated = apply_spatial_gate(grad_out, tr.spatial_gate);
  Tensor<T> grad_pre({batch, 1, tr.x.dim(2), tr.x.dim(3)});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const T* go = grad_out.ptr() + (b * ch + c) * plane;
      const T* xg = tr.gated.ptr() + (b * ch + c) * plane;
      T* gp = grad_pre.ptr() + b * plane;
      for (std::size_t i = 0; i < plane; ++i) gp[i] += go[i] * xg[i];
    }
  for (std::size_t i = 0; i < grad_pre.size(); ++i) {
    const T s = tr.spatial_gate[i];
    grad_pre[i] *= s * (T(1) - s);
  }
  auto cg = conv2d_backward(block.spatial.conv, tr.gated, grad_pre);
  add_into(grads.spatial.conv.weight, cg.grad_w);
  add_into(grads.spatial.conv.bias, cg.grad_b);
  add_into(grad_gated, cg.grad_x);

  // Channel gate: X' = X * g, g = sigma(W2 gelu(W1 mean(X))).
  Tensor<T> grad_x = apply_channel_gate(grad_gated, tr.gate.gate);
  Tensor<T> grad_h2({batch, ch});
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    const T* go = grad_gated.ptr() + bc * plane;
    const T* xv = tr.x.ptr() + bc * plane;
    T acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += go[i] * xv[i];
    const T g = tr.gate.gate[bc];
    grad_h2[bc] = acc * g * (T(1) - g);
  }
  auto d2 = dense_backward(block.se.fc2, tr.gate.a1, grad_h2);
  add_into(grads.se.fc2.weight, d2.grad_w);
  add_into(grads.se.fc2.bias, d2.grad_b);
  const auto gg = gelu_grad(tr.gate.h1);
  Tensor<T> grad_h1 = d2.grad_x;
  for (std::size_t i = 0; i < grad_h1.size(); ++i) grad_h1[i] *= gg[i];
  auto d1 = dense_backward(block.se.fc1, tr.gate.z, grad_h1);
  add_into(grads.se.fc1.weight, d1.grad_w);
  add_into(grads.se.fc1.bias, d1.grad_b);
  const T inv = T(1) / T(plane);
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    const T dz = d1.grad_x[bc] * inv;
    T* gx = grad_x.ptr() + bc * plane;
    for (std::size_t i = 0; i < plane; ++i) gx[i] += dz;
  }
  return grad_x;
}

// ---------------------------------------------------------------------------
// Two-dimensional relative self-attention.

template <typename T>
struct RelativeSelfAttention2d {
  Tensor<T> wq;     // F_in x d_k
  Tensor<T> wk;     // F_in x d_k
  Tensor<T> wv;     // F_in x d_v
  Tensor<T> wo;     // d_v x d_v
  Tensor<T> rel_w;  // (2W - 1) x d_k / heads, shared by all heads
  Tensor<T> rel_h;  // (2H - 1) x d_k / heads
  std::size_t heads = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t in_channels() const { return wq.dim(0); }
  std::size_t key_depth() const { return wq.dim(1); }
  std::size_t value_depth() const { return wv.dim(1); }
  std::size_t head_key_depth() const { return key_depth() / heads; }
  std::size_t head_value_depth() const { return value_depth() / heads; }
};

template <typename T>
RelativeSelfAttention2d<T> make_relative_attention(std::size_t f_in, std::size_t d_k, std::size_t d_v,
                                                   std::size_t heads, std::size_t height,
                                                   std::size_t width) {
  if (heads == 0 || d_k % heads != 0 || d_v % heads != 0) {
    throw ConfigError("relative attention: d_k=" + std::to_string(d_k) + " and d_v=" +
                      std::to_string(d_v) + " must be divisible by " + std::to_string(heads) +
                      " heads");
  }
  const std::size_t dkh = d_k / heads;
  return {Tensor<T>({f_in, d_k}),          Tensor<T>({f_in, d_k}),
          Tensor<T>({f_in, d_v}),          Tensor<T>({d_v, d_v}),
          Tensor<T>({2 * width - 1, dkh}), Tensor<T>({2 * height - 1, dkh}),
          heads, height, width};
}

namespace detail {

// q . r_{offset} for every query row and every table row: HW x rows.
template <typename T>
RowMatrix<T> relative_projection(const Eigen::Ref<const RowMatrix<T>>& q, const Tensor<T>& table) {
  return q * ConstMatrixMap<T>(table.ptr(), table.dim(0), table.dim(1)).transpose();
}

template <typename T>
void check_relative_tables(std::size_t dkh, const Tensor<T>& rel_w, const Tensor<T>& rel_h,
                           std::size_t height, std::size_t width) {
  require_shape(rel_w, {2 * width - 1, dkh}, "relative width table");
  require_shape(rel_h, {2 * height - 1, dkh}, "relative height table");
}

// Unscaled logits q_i . (k_j + r^W_{jx-ix} + r^H_{jy-iy}).
template <typename T>
RowMatrix<T> relative_scores(const Eigen::Ref<const RowMatrix<T>>& q,
                             const Eigen::Ref<const RowMatrix<T>>& k, const Tensor<T>& rel_w,
                             const Tensor<T>& rel_h, std::size_t height, std::size_t width) {
  const std::size_t n = height * width;
  RowMatrix<T> s = q * k.transpose();
  const RowMatrix<T> qw = relative_projection<T>(q, rel_w);
  const RowMatrix<T> qh = relative_projection<T>(q, rel_h);
  for (std::size_t iy = 0; iy < height; ++iy)
    for (std::size_t ix = 0; ix < width; ++ix) {
      const std::size_t i = iy * width + ix;
      T* row = s.data() + i * n;
      const T* w_off = qw.data() + i * qw.cols() + (width - 1 - ix);
      const T* h_off = qh.data() + i * qh.cols() + (height - 1 - iy);
      for (std::size_t jy = 0; jy < height; ++jy) {
        const T hv = h_off[jy];
        T* r = row + jy * width;
        for (std::size_t jx = 0; jx < width; ++jx) r[jx] += w_off[jx] + hv;
      }
    }
  return s;
}

template <typename T>
void softmax_rows(RowMatrix<T>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const T mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp().matrix();
    m.row(i) /= m.row(i).sum();
  }
}

}  // namespace detail

// Scaled relative logits for one head. q, k: HW x d_k^h; returns HW x HW.
template <typename T>
Tensor<T> relative_logits(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& rel_w,
                          const Tensor<T>& rel_h, std::size_t height, std::size_t width) {
  const std::size_t n = height * width;
  require_rank(q, 2, "relative_logits q");
  const std::size_t dkh = q.dim(1);
  require_shape(q, {n, dkh}, "relative_logits q");
  require_shape(k, {n, dkh}, "relative_logits k");
  detail::check_relative_tables(dkh, rel_w, rel_h, height, width);
  RowMatrix<T> s = detail::relative_scores<T>(ConstMatrixMap<T>(q.ptr(), n, dkh),
                                              ConstMatrixMap<T>(k.ptr(), n, dkh), rel_w, rel_h,
                                              height, width);
  s *= T(1) / std::sqrt(T(dkh));
  Tensor<T> out({n, n});
  MatrixMap<T>(out.ptr(), n, n) = s;
  return out;
}

// softmax(relative_logits) V for one head; v: HW x d_v^h.
template <typename T>
Tensor<T> self_attention_head(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                              const Tensor<T>& rel_w, const Tensor<T>& rel_h, std::size_t height,
                              std::size_t width) {
  const std::size_t n = height * width;
  require_rank(v, 2, "self_attention_head v");
  if (v.dim(0) != n) throw DimensionError("self_attention_head: value rows must equal H*W");
  const auto weights = softmax_lastdim(relative_logits(q, k, rel_w, rel_h, height, width));
  Tensor<T> out({n, v.dim(1)});
  MatrixMap<T>(out.ptr(), n, v.dim(1)).noalias() =
      ConstMatrixMap<T>(weights.ptr(), n, n) * ConstMatrixMap<T>(v.ptr(), n, v.dim(1));
  return out;
}

template <typename T>
struct AttentionSampleTrace {
  RowMatrix<T> x;        // HW x F_in
  RowMatrix<T> q, k, v;  // HW x d
  std::vector<RowMatrix<T>> weights;  // per head, HW x HW, row-stochastic
  RowMatrix<T> heads;    // HW x d_v, concatenated head outputs
};

template <typename T>
struct AttentionTrace {
  std::vector<AttentionSampleTrace<T>> samples;
};

// B x F_in x H x W -> B x d_v x H x W
template <typename T>
Tensor<T> multi_head_attention(const RelativeSelfAttention2d<T>& attn, const Tensor<T>& x,
                               AttentionTrace<T>* trace = nullptr) {
  require_rank(x, 4, "multi_head_attention");
  if (x.dim(1) != attn.in_channels() || x.dim(2) != attn.height || x.dim(3) != attn.width) {
    throw DimensionError("multi_head_attention: input " + shape_str(x.shape()) + " does not match " +
                         std::to_string(attn.in_channels()) + " channels on a " +
                         std::to_string(attn.height) + "x" + std::to_string(attn.width) + " grid");
  }
  const std::size_t batch = x.dim(0), f_in = x.dim(1), n = attn.height * attn.width;
  const std::size_t dkh = attn.head_key_depth(), dvh = attn.head_value_depth(), dv = attn.value_depth();
  const T scale = T(1) / std::sqrt(T(dkh));
  const ConstMatrixMap<T> wq(attn.wq.ptr(), f_in, attn.key_depth());
  const ConstMatrixMap<T> wk(attn.wk.ptr(), f_in, attn.key_depth());
  const ConstMatrixMap<T> wv(attn.wv.ptr(), f_in, dv);
  const ConstMatrixMap<T> wo(attn.wo.ptr(), dv, dv);

  Tensor<T> y({batch, dv, attn.height, attn.width});
  if (trace) trace->samples.assign(batch, {});
  for (std::size_t b = 0; b < batch; ++b) {
    AttentionSampleTrace<T> st;
    st.x = ConstMatrixMap<T>(x.ptr() + b * f_in * n, f_in, n).transpose();
    st.q.noalias() = st.x * wq;
    st.k.noalias() = st.x * wk;
    st.v.noalias() = st.x * wv;
    st.heads.resize(n, dv);
    st.weights.resize(attn.heads);
    for (std::size_t h = 0; h < attn.heads; ++h) {
      RowMatrix<T> s = detail::relative_scores<T>(st.q.middleCols(h * dkh, dkh),
                                                  st.k.middleCols(h * dkh, dkh), attn.rel_w,
                                                  attn.rel_h, attn.height, attn.width);
      s *= scale;
      detail::softmax_rows(s);
      st.heads.middleCols(h * dvh, dvh).noalias() = s * st.v.middleCols(h * dvh, dvh);
      st.weights[h] = std::move(s);
    }
    MatrixMap<T>(y.ptr() + b * dv * n, dv, n).noalias() = (st.heads * wo).transpose();
    if (trace) trace->samples[b] = std::move(st);
  }
  return y;
}

template <typename T>
Tensor<T> multi_head_attention_backward(const RelativeSelfAttention2d<T>& attn,
                                        const AttentionTrace<T>& trace, const Tensor<T>& grad_out,
                                        RelativeSelfAttention2d<T>& grads) {
  const std::size_t batch = trace.samples.size();
  const std::size_t f_in = attn.in_channels(), n = attn.height * attn.width, w = attn.width,
                    hgt = attn.height;
  const std::size_t dk = attn.key_depth(), dv = attn.value_depth();
  const std::size_t dkh = attn.head_key_depth(), dvh = attn.head_value_depth();
  require_shape(grad_out, {batch, dv, attn.height, attn.width}, "multi_head_attention_backward");
  const T scale = T(1) / std::sqrt(T(dkh));
  const ConstMatrixMap<T> wq(attn.wq.ptr(), f_in, dk), wk(attn.wk.ptr(), f_in, dk),
      wv(attn.wv.ptr(), f_in, dv), wo(attn.wo.ptr(), dv, dv);
  const ConstMatrixMap<T> rel_w(attn.rel_w.ptr(), 2 * w - 1, dkh), rel_h(attn.rel_h.ptr(), 2 * hgt - 1, dkh);
  MatrixMap<T> gwq(grads.wq.ptr(), f_in, dk), gwk(grads.wk.ptr(), f_in, dk), gwv(grads.wv.ptr(), f_in, dv),
      gwo(grads.wo.ptr(), dv, dv), grel_w(grads.rel_w.ptr(), 2 * w - 1, dkh),
      grel_h(grads.rel_h.ptr(), 2 * hgt - 1, dkh);

  Tensor<T> grad_x({batch, f_in, attn.height, attn.width});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& st = trace.samples[b];
    const RowMatrix<T> dm = ConstMatrixMap<T>(grad_out.ptr() + b * dv * n, dv, n).transpose();
    gwo.noalias() += st.heads.transpose() * dm;
    const RowMatrix<T> dheads = dm * wo.transpose();
    RowMatrix<T> dq(n, dk), dkm(n, dk), dvm(n, dv);
    for (std::size_t h = 0; h < attn.heads; ++h) {
      const auto& a = st.weights[h];
      const auto qh = st.q.middleCols(h * dkh, dkh);
      const auto kh = st.k.middleCols(h * dkh, dkh);
      const auto dout = dheads.middleCols(h * dvh, dvh);
      dvm.middleCols(h * dvh, dvh).noalias() = a.transpose() * dout;
      RowMatrix<T> ds = dout * st.v.middleCols(h * dvh, dvh).transpose();
      for (std::size_t i = 0; i < n; ++i) {
        const T inner = (ds.row(i).array() * a.row(i).array()).sum();
        ds.row(i) = (a.row(i).array() * (ds.row(i).array() - inner)).matrix() * scale;
      }
      // Fold pair gradients onto relative offsets.
      RowMatrix<T> sw = RowMatrix<T>::Zero(n, 2 * w - 1), sh = RowMatrix<T>::Zero(n, 2 * hgt - 1);
      for (std::size_t iy = 0; iy < hgt; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix) {
          const std::size_t i = iy * w + ix;
          const T* d = ds.data() + i * n;
          T* sw_off = sw.data() + i * sw.cols() + (w - 1 - ix);
          T* sh_off = sh.data() + i * sh.cols() + (hgt - 1 - iy);
          for (std::size_t jy = 0; jy < hgt; ++jy)
            for (std::size_t jx = 0; jx < w; ++jx) {
              sw_off[jx] += d[jy * w + jx];
              sh_off[jy] += d[jy * w + jx];
            }
        }
      dq.middleCols(h * dkh, dkh).noalias() = ds * kh + sw * rel_w + sh * rel_h;
      dkm.middleCols(h * dkh, dkh).noalias() = ds.transpose() * qh;
      grel_w.noalias() += sw.transpose() * qh;
      grel_h.noalias() += sh.transpose() * qh;
    }
    gwq.noalias() += st.x.transpose() * dq;
    gwk.noalias() += st.x.transpose() * dkm;
    gwv.noalias() += st.x.transpose() * dvm;
    const RowMatrix<T> dx = dq * wq.transpose() + dkm * wk.transpose() + dvm * wv.transpose();
    MatrixMap<T>(grad_x.ptr() + b * f_in * n, f_in, n) = dx.transpose();
  }
  return grad_x;
}

// Convolution branch (3x3, same padding) concatenated with the attention branch.
template <typename T>
struct AugmentedAttentionConv {
  Conv2d<T> conv;  // F_in -> F_out - d_v
  RelativeSelfAttention2d<T> mha;

  std::size_t out_channels() const { return conv.out_channels() + mha.value_depth(); }
};

template <typename T>
AugmentedAttentionConv<T> make_augmented_attention_conv(std::size_t f_in, std::size_t f_out,
                                                        std::size_t d_k, std::size_t d_v,
                                                        std::size_t heads, std::size_t height,
                                                        std::size_t width) {
  if (d_v >= f_out) {
    throw ConfigError("augmented conv: d_v=" + std::to_string(d_v) + " must be below F_out=" +
                      std::to_string(f_out));
  }
  return {make_conv2d<T>(f_in, f_out - d_v, 3, 1, 1),
          make_relative_attention<T>(f_in, d_k, d_v, heads, height, width)};
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), plane = a.dim(2) * a.dim(3);
  Tensor<T> y({batch, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(a.ptr() + n * ca * plane, ca * plane, y.ptr() + n * (ca + cb) * plane);
    std::copy_n(b.ptr() + n * cb * plane, cb * plane, y.ptr() + (n * (ca + cb) + ca) * plane);
  }
  return y;
}

// Inverse of concat_channels for gradients.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& y, std::size_t first) {
  const std::size_t batch = y.dim(0), total = y.dim(1), plane = y.dim(2) * y.dim(3);
  if (first == 0 || first >= total) throw DimensionError("split_channels: bad split point");
  Tensor<T> a({batch, first, y.dim(2), y.dim(3)}), b({batch, total - first, y.dim(2), y.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(y.ptr() + n * total * plane, first * plane, a.ptr() + n * first * plane);
    std::copy_n(y.ptr() + (n * total + first) * plane, (total - first) * plane,
                b.ptr() + n * (total - first) * plane);
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
struct AugmentedTrace {
  Tensor<T> x;
  AttentionTrace<T> attention;
};

template <typename T>
Tensor<T> attention_augmented_conv(const AugmentedAttentionConv<T>& aac, const Tensor<T>& x,
                                   AugmentedTrace<T>* trace = nullptr) {
  auto conv_out = conv2d_forward(aac.conv, x);
  auto attn_out = multi_head_attention(aac.mha, x, trace ? &trace->attention : nullptr);
  if (trace) trace->x = x;
  return concat_channels(conv_out, attn_out);
}

template <typename T>
Tensor<T> attention_augmented_conv_backward(const AugmentedAttentionConv<T>& aac,
                                            const AugmentedTrace<T>& trace, const Tensor<T>& grad_out,
                                            AugmentedAttentionConv<T>& grads) {
  auto [g_conv, g_attn] = split_channels(grad_out, aac.conv.out_channels());
  auto cg = conv2d_backward(aac.conv, trace.x, g_conv);
  add_into(grads.conv.weight, cg.grad_w);
  add_into(grads.conv.bias, cg.grad_b);
  auto gx = multi_head_attention_backward(aac.mha, trace.attention, g_attn, grads.mha);
  add_into(gx, cg.grad_x);
  return gx;
}

}  // namespace seishet
