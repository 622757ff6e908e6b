#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seishet/attention.hpp"
#include "seishet/layers.hpp"
#include "seishet/ops.hpp"
#include "seishet/prng.hpp"

namespace seishet {

enum class AttentionVariant : std::uint8_t { se = 0, self_attention = 1 };

inline std::string_view variant_name(AttentionVariant v) {
  return v == AttentionVariant::se ? "se" : "self";
}

inline AttentionVariant parse_variant(std::string_view s) {
  if (s == "se") return AttentionVariant::se;
  if (s == "self" || s == "self_attention" || s == "self-attention") {
    return AttentionVariant::self_attention;
  }
  throw ConfigError("unknown attention variant '" + std::string(s) + "' (expected se or self)");
}

struct Hyperparameters {
  std::uint32_t se_ratio = 4;
  std::uint32_t heads = 4;
  std::uint32_t key_depth = 32;
  std::uint32_t value_depth = 32;

  bool operator==(const Hyperparameters&) const = default;
};

inline constexpr std::size_t kPatchSize = 44;
inline constexpr std::size_t kStage1Channels = 20;
inline constexpr std::size_t kStageChannels = 50;
inline constexpr std::size_t kBlockChannels = 2 * kStageChannels;
inline constexpr std::size_t kAttentionGrid = kPatchSize / 4;
inline constexpr std::size_t kUpsample1Channels = 20;
inline constexpr std::size_t kUpsample2Channels = 10;
inline constexpr std::size_t kClasses = 2;

// Layer groups in forward order. Freezing a prefix of n freezes the first n.
inline constexpr std::array<std::string_view, 10> kLayerNames = {
    "stage1.conv1", "stage1.conv2", "stage2.conv1", "stage2.conv2", "stage3.conv1",
    "stage3.conv2", "attention",    "upsample1",    "upsample2",    "head"};
inline constexpr std::size_t kLayerCount = kLayerNames.size();

// 44x44 -> stage1 (20ch) -> pool -> stage2 (50ch) -> pool -> stage3 (50ch)
// -> concat of both stage-3 outputs (100ch, 11x11) -> attention (100ch)
// -> transposed conv (20ch, 22x22) -> transposed conv (10ch, 44x44)
// -> 1x1 conv (2ch). GeLU follows every conv and transposed conv except the head.
template <typename T>
struct Network {
  AttentionVariant variant = AttentionVariant::self_attention;
  Hyperparameters hyper;
  std::array<Conv2d<T>, 6> convs;
  SeAttention<T> se;                   // populated for the se variant
  AugmentedAttentionConv<T> augmented;  // populated for the self-attention variant
  TransposedConv2d<T> up1, up2;
  Conv2d<T> head;
  std::vector<std::uint8_t> frozen;  // one flag per parameter, enumeration order
};

struct ParamInfo {
  std::string name;
  std::size_t layer;
};

// Visits (info, tensor) for every parameter in a fixed order. Works on const
// and mutable networks alike.
template <typename Net, typename F>
void for_each_parameter(Net& net, F&& f) {
  static constexpr std::array<std::string_view, 6> conv_names = {
      "stage1.conv1", "stage1.conv2", "stage2.conv1", "stage2.conv2", "stage3.conv1", "stage3.conv2"};
  for (std::size_t i = 0; i < 6; ++i) {
    f(ParamInfo{std::string(conv_names[i]) + ".weight", i}, net.convs[i].weight);
    f(ParamInfo{std::string(conv_names[i]) + ".bias", i}, net.convs[i].bias);
  }
  if (net.variant == AttentionVariant::se) {
    f(ParamInfo{"attention.se.fc1.weight", 6}, net.se.se.fc1.weight);
    f(ParamInfo{"attention.se.fc1.bias", 6}, net.se.se.fc1.bias);
    f(ParamInfo{"attention.se.fc2.weight", 6}, net.se.se.fc2.weight);
    f(ParamInfo{"attention.se.fc2.bias", 6}, net.se.se.fc2.bias);
    f(ParamInfo{"attention.spatial.weight", 6}, net.se.spatial.conv.weight);
    f(ParamInfo{"attention.spatial.bias", 6}, net.se.spatial.conv.bias);
  } else {
    f(ParamInfo{"attention.aac.conv.weight", 6}, net.augmented.conv.weight);
    f(ParamInfo{"attention.aac.conv.bias", 6}, net.augmented.conv.bias);
    f(ParamInfo{"attention.aac.wq", 6}, net.augmented.mha.wq);
    f(ParamInfo{"attention.aac.wk", 6}, net.augmented.mha.wk);
    f(ParamInfo{"attention.aac.wv", 6}, net.augmented.mha.wv);
    f(ParamInfo{"attention.aac.wo", 6}, net.augmented.mha.wo);
    f(ParamInfo{"attention.aac.rel_w", 6}, net.augmented.mha.rel_w);
    f(ParamInfo{"attention.aac.rel_h", 6}, net.augmented.mha.rel_h);
  }
  f(ParamInfo{"upsample1.weight", 7}, net.up1.weight);
  f(ParamInfo{"upsample1.bias", 7}, net.up1.bias);
  f(ParamInfo{"upsample2.weight", 8}, net.up2.weight);
  f(ParamInfo{"upsample2.bias", 8}, net.up2.bias);
  f(ParamInfo{"head.weight", 9}, net.head.weight);
  f(ParamInfo{"head.bias", 9}, net.head.bias);
}

template <typename T>
std::vector<ParamInfo> parameter_infos(const Network<T>& net) {
  std::vector<ParamInfo> out;
  for_each_parameter(net, [&](const ParamInfo& info, const Tensor<T>&) { out.push_back(info); });
  return out;
}

template <typename T>
std::vector<Tensor<T>*> parameter_tensors(Network<T>& net) {
  std::vector<Tensor<T>*> out;
  for_each_parameter(net, [&](const ParamInfo&, Tensor<T>& t) { out.push_back(&t); });
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> parameter_tensors(const Network<T>& net) {
  std::vector<const Tensor<T>*> out;
  for_each_parameter(net, [&](const ParamInfo&, const Tensor<T>& t) { out.push_back(&t); });
  return out;
}

template <typename T>
std::size_t parameter_tensor_count(const Network<T>& net) {
  std::size_t n = 0;
  for_each_parameter(net, [&](const ParamInfo&, const Tensor<T>&) { ++n; });
  return n;
}

// All-zero network with the given variant and hyperparameters.
template <typename T>
Network<T> make_network(AttentionVariant variant, const Hyperparameters& hyper = {}) {
  Network<T> net;
  net.variant = variant;
  net.hyper = hyper;
  net.convs = {make_conv2d<T>(1, kStage1Channels, 3, 1, 1),
               make_conv2d<T>(kStage1Channels, kStage1Channels, 3, 1, 1),
               make_conv2d<T>(kStage1Channels, kStageChannels, 3, 1, 1),
               make_conv2d<T>(kStageChannels, kStageChannels, 3, 1, 1),
               make_conv2d<T>(kStageChannels, kStageChannels, 3, 1, 1),
               make_conv2d<T>(kStageChannels, kStageChannels, 3, 1, 1)};
  if (variant == AttentionVariant::se) {
    net.se = {make_se_block<T>(kBlockChannels, hyper.se_ratio), make_spatial_attention<T>(kBlockChannels)};
  } else {
    net.augmented = make_augmented_attention_conv<T>(kBlockChannels, kBlockChannels, hyper.key_depth,
                                                     hyper.value_depth, hyper.heads, kAttentionGrid,
                                                     kAttentionGrid);
  }
  net.up1 = make_transposed_conv2d<T>(kBlockChannels, kUpsample1Channels);
  net.up2 = make_transposed_conv2d<T>(kUpsample1Channels, kUpsample2Channels);
  net.head = make_conv2d<T>(kUpsample2Channels, kClasses, 1, 1, 0);
  net.frozen.assign(parameter_tensor_count(net), 0);
  return net;
}

// Glorot-uniform weights (every rank >= 2 tensor, including the relative
// embedding tables), zero biases. Deterministic in the seed.
template <typename T>
Network<T> build_network(AttentionVariant variant, Prng& prng, const Hyperparameters& hyper = {}) {
  auto net = make_network<T>(variant, hyper);
  for_each_parameter(net, [&](const ParamInfo&, Tensor<T>& t) {
    if (t.rank() >= 2) t = glorot_init<T>(t.shape(), prng);
  });
  return net;
}

template <typename T>
Network<T> zeros_like(const Network<T>& net) {
  Network<T> z = net;
  for_each_parameter(z, [](const ParamInfo&, Tensor<T>& t) { t.fill(T(0)); });
  return z;
}

template <typename U, typename T>
Network<U> network_cast(const Network<T>& net) {
  auto out = make_network<U>(net.variant, net.hyper);
  auto src = parameter_tensors(net);
  auto dst = parameter_tensors(out);
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
  out.frozen = net.frozen;
  return out;
}

template <typename T>
bool is_frozen(const Network<T>& net, std::string_view name) {
  std::size_t i = 0;
  bool found = false, frozen = false;
  for_each_parameter(net, [&](const ParamInfo& info, const Tensor<T>&) {
    if (info.name == name) {
      found = true;
      frozen = net.frozen.at(i) != 0;
    }
    ++i;
  });
  if (!found) throw NotFoundError("no parameter named '" + std::string(name) + "'");
  return frozen;
}

// Freezes every parameter of the first n layer groups and unfreezes the rest.
template <typename T>
void freeze_prefix(Network<T>& net, std::size_t n) {
  if (n > kLayerCount) {
    throw ConfigError("freeze prefix " + std::to_string(n) + " exceeds the " +
                      std::to_string(kLayerCount) + " layers of the network");
  }
  std::size_t i = 0;
  for_each_parameter(net, [&](const ParamInfo& info, const Tensor<T>&) {
    net.frozen.at(i++) = info.layer < n ? 1 : 0;
  });
}

template <typename T>
struct ForwardTrace {
  Tensor<T> input;
  std::array<Tensor<T>, 6> pre;  // conv outputs before GeLU
  std::array<Tensor<T>, 6> act;  // after GeLU
  Shape pool1_shape, pool2_shape;
  std::vector<std::size_t> pool1_argmax, pool2_argmax;
  Tensor<T> pooled1, pooled2;
  Tensor<T> block_input;  // concat of stage-3 activations
  SeAttentionTrace<T> se;
  AugmentedTrace<T> augmented;
  Tensor<T> block_output;
  Tensor<T> up1_pre, up1_act, up2_pre, up2_act;
};

template <typename T>
void check_network_input(const Tensor<T>& batch) {
  if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != kPatchSize || batch.dim(3) != kPatchSize) {
    throw DimensionError("network input must be Bx1x" + std::to_string(kPatchSize) + "x" +
                         std::to_string(kPatchSize) + ", got " + shape_str(batch.shape()));
  }
}

// B x 1 x 44 x 44 -> B x 2 x 44 x 44 logits.
template <typename T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& batch, ForwardTrace<T>* trace = nullptr) {
  check_network_input(batch);
  ForwardTrace<T> local;
  ForwardTrace<T>& tr = trace ? *trace : local;
  const bool keep = trace != nullptr;
  if (keep) tr.input = batch;

  auto stage = [&](std::size_t i, const Tensor<T>& x) {
    auto pre = conv2d_forward(net.convs[i], x);
    auto act = gelu(pre);
    if (keep) tr.pre[i] = std::move(pre);
    return act;
  };
  auto keep_act = [&](std::size_t i, const Tensor<T>& a) {
    if (keep) tr.act[i] = a;
  };

  auto a0 = stage(0, batch);
  keep_act(0, a0);
  auto a1 = stage(1, a0);
  keep_act(1, a1);
  auto p1 = maxpool2d(a1);
  auto a2 = stage(2, p1.output);
  keep_act(2, a2);
  auto a3 = stage(3, a2);
  keep_act(3, a3);
  auto p2 = maxpool2d(a3);
  auto a4 = stage(4, p2.output);
  keep_act(4, a4);
  auto a5 = stage(5, a4);
  keep_act(5, a5);
  auto block_in = concat_channels(a4, a5);

  Tensor<T> block_out = net.variant == AttentionVariant::se
                            ? se_attention_forward(net.se, block_in, keep ? &tr.se : nullptr)
                            : attention_augmented_conv(net.augmented, block_in, keep ? &tr.augmented : nullptr);

  auto u1_pre = transposed_conv2d_forward(net.up1, block_out);
  auto u1 = gelu(u1_pre);
  auto u2_pre = transposed_conv2d_forward(net.up2, u1);
  auto u2 = gelu(u2_pre);
  auto logits = conv2d_forward(net.head, u2);

  if (keep) {
    tr.pool1_shape = a1.shape();
    tr.pool2_shape = a3.shape();
    tr.pool1_argmax = std::move(p1.argmax);
    tr.pool2_argmax = std::move(p2.argmax);
    tr.pooled1 = std::move(p1.output);
    tr.pooled2 = std::move(p2.output);
    tr.block_input = std::move(block_in);
    tr.block_output = std::move(block_out);
    tr.up1_pre = std::move(u1_pre);
    tr.up1_act = std::move(u1);
    tr.up2_pre = std::move(u2_pre);
    tr.up2_act = std::move(u2);
  }
  return logits;
}

namespace detail {

template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& pre, const Tensor<T>& grad_act) {
  Tensor<T> g = gelu_grad(pre);
  as_array(g) *= as_array(grad_act);
  return g;
}

template <typename T>
void accumulate(Conv2d<T>& dst, const Conv2dGrads<T>& g) {
  add_into(dst.weight, g.grad_w);
  add_into(dst.bias, g.grad_b);
}

}  // namespace detail

// Accumulates d loss / d params into grads (a network of the same shape).
template <typename T>
void backward(const Network<T>& net, const ForwardTrace<T>& tr, const Tensor<T>& grad_logits,
              Network<T>& grads) {
  using detail::gelu_backward;
  auto gh = conv2d_backward(net.head, tr.up2_act, grad_logits);
  detail::accumulate(grads.head, gh);

  auto g_u2 = transposed_conv2d_backward(net.up2, tr.up1_act, gelu_backward(tr.up2_pre, gh.grad_x));
  add_into(grads.up2.weight, g_u2.grad_w);
  add_into(grads.up2.bias, g_u2.grad_b);
  auto g_u1 = transposed_conv2d_backward(net.up1, tr.block_output, gelu_backward(tr.up1_pre, g_u2.grad_x));
  add_into(grads.up1.weight, g_u1.grad_w);
  add_into(grads.up1.bias, g_u1.grad_b);

  Tensor<T> g_block = net.variant == AttentionVariant::se
                          ? se_attention_backward(net.se, tr.se, g_u1.grad_x, grads.se)
                          : attention_augmented_conv_backward(net.augmented, tr.augmented, g_u1.grad_x,
                                                              grads.augmented);
  auto [g_a4_skip, g_a5] = split_channels(g_block, kStageChannels);

  auto g5 = conv2d_backward(net.convs[5], tr.act[4], gelu_backward(tr.pre[5], g_a5));
  detail::accumulate(grads.convs[5], g5);
  add_into(g_a4_skip, g5.grad_x);
  auto g4 = conv2d_backward(net.convs[4], tr.pooled2, gelu_backward(tr.pre[4], g_a4_skip));
  detail::accumulate(grads.convs[4], g4);
  auto g_a3 = maxpool2d_backward(tr.pool2_shape, tr.pool2_argmax, g4.grad_x);
  auto g3 = conv2d_backward(net.convs[3], tr.act[2], gelu_backward(tr.pre[3], g_a3));
  detail::accumulate(grads.convs[3], g3);
  auto g2 = conv2d_backward(net.convs[2], tr.pooled1, gelu_backward(tr.pre[2], g3.grad_x));
  detail::accumulate(grads.convs[2], g2);
  auto g_a1 = maxpool2d_backward(tr.pool1_shape, tr.pool1_argmax, g2.grad_x);
  auto g1 = conv2d_backward(net.convs[1], tr.act[0], gelu_backward(tr.pre[1], g_a1));
  detail::accumulate(grads.convs[1], g1);
  auto g0 = conv2d_backward(net.convs[0], tr.input, gelu_backward(tr.pre[0], g1.grad_x), false);
  detail::accumulate(grads.convs[0], g0);
}

// Per-pixel softmax over the two class channels; returns P(heterogeneity),
// B x H x W.
template <typename T>
Tensor<T> heterogeneity_probability(const Tensor<T>& logits) {
  require_rank(logits, 4, "heterogeneity_probability");
  if (logits.dim(1) != 2) throw DimensionError("heterogeneity_probability: logits need 2 channels");
  const std::size_t batch = logits.dim(0), plane = logits.dim(2) * logits.dim(3);
  Tensor<T> p({batch, logits.dim(2), logits.dim(3)});
  for (std::size_t b = 0; b < batch; ++b) {
    const T* l0 = logits.ptr() + b * 2 * plane;
    const T* l1 = l0 + plane;
    for (std::size_t i = 0; i < plane; ++i) p[b * plane + i] = T(1) / (T(1) + std::exp(l0[i] - l1[i]));
  }
  return p;
}

// B x 2 x H x W probabilities (per-pixel softmax over channels).
template <typename T>
Tensor<T> class_probabilities(const Tensor<T>& logits) {
  const auto p1 = heterogeneity_probability(logits);
  const std::size_t batch = logits.dim(0), plane = logits.dim(2) * logits.dim(3);
  Tensor<T> p(logits.shape());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < plane; ++i) {
      p[(b * 2 + 1) * plane + i] = p1[b * plane + i];
      p[(b * 2) * plane + i] = T(1) - p1[b * plane + i];
    }
  return p;
}

struct LayerSummary {
  std::string name;
  std::string shapes;
  std::size_t params = 0;
  std::size_t macs = 0;
};

struct ModelCost {
  std::vector<LayerSummary> layers;
  std::size_t params = 0;
  std::size_t macs = 0;
  // FLOPs = 2 x multiply-accumulates of convolutions, transposed
  // convolutions, dense layers and attention products for one 44x44 patch.
  // Activations, pooling, softmax and gating multiplies are not counted.
  std::size_t flops() const { return 2 * macs; }
};

inline constexpr std::string_view kFlopConvention =
    "FLOPs = 2 x multiply-accumulate operations of conv, transposed conv, dense and attention "
    "matrix products for one 44x44 patch; activations, pooling, softmax and gating excluded";

template <typename T>
ModelCost count_params_flops(const Network<T>& net) {
  ModelCost cost;
  std::vector<std::size_t> layer_params(kLayerCount, 0);
  std::vector<std::string> layer_shapes(kLayerCount);
  for_each_parameter(net, [&](const ParamInfo& info, const Tensor<T>& t) {
    layer_params[info.layer] += t.size();
    auto& s = layer_shapes[info.layer];
    if (!s.empty()) s += ' ';
    s += info.name.substr(info.name.rfind('.') + 1) + shape_str(t.shape());
  });

  const std::size_t p44 = kPatchSize * kPatchSize, p22 = p44 / 4, p11 = p22 / 4;
  auto conv_macs = [](const Conv2d<T>& c, std::size_t out_plane) {
    return c.out_channels() * c.in_channels() * c.kernel() * c.kernel() * out_plane;
  };
  std::vector<std::size_t> macs(kLayerCount, 0);
  macs[0] = conv_macs(net.convs[0], p44);
  macs[1] = conv_macs(net.convs[1], p44);
  macs[2] = conv_macs(net.convs[2], p22);
  macs[3] = conv_macs(net.convs[3], p22);
  macs[4] = conv_macs(net.convs[4], p11);
  macs[5] = conv_macs(net.convs[5], p11);
  if (net.variant == AttentionVariant::se) {
    const auto& se = net.se.se;
    macs[6] = se.fc1.weight.size() + se.fc2.weight.size() + conv_macs(net.se.spatial.conv, p11);
  } else {
    const auto& m = net.augmented.mha;
    const std::size_t n = m.height * m.width;
    macs[6] = conv_macs(net.augmented.conv, p11) +
              n * m.in_channels() * (2 * m.key_depth() + m.value_depth()) +  // Q, K, V
              m.heads * n * n * m.head_key_depth() +                         // Q K^T
              m.heads * n * (2 * m.width - 1 + 2 * m.height - 1) * m.head_key_depth() +
              m.heads * n * n * m.head_value_depth() +  // weights x V
              n * m.value_depth() * m.value_depth();    // W_O
  }
  auto tconv_macs = [](const TransposedConv2d<T>& c, std::size_t in_plane) {
    return c.in_channels() * c.out_channels() * c.kernel() * c.kernel() * in_plane;
  };
  macs[7] = tconv_macs(net.up1, p11);
  macs[8] = tconv_macs(net.up2, p22);
  macs[9] = conv_macs(net.head, p44);

  for (std::size_t i = 0; i < kLayerCount; ++i) {
    cost.layers.push_back({std::string(kLayerNames[i]), layer_shapes[i], layer_params[i], macs[i]});
    cost.params += layer_params[i];
    cost.macs += macs[i];
  }
  return cost;
}

}  // namespace seishet
