#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "seishet/metrics.hpp"
#include "seishet/model.hpp"
#include "seishet/synthgen.hpp"

namespace seishet {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  double split = 0.8;  // training fraction
  std::uint64_t seed = 0;
  std::size_t freeze_prefix = 0;  // leading layer groups kept fixed
  double positive_weight = 1.0;   // cross-entropy weight of heterogeneity pixels

  void validate() const {
    if (!(split > 0.0 && split < 1.0)) throw ConfigError("split fraction must lie in (0, 1), got " + std::to_string(split));
    if (batch_size == 0) throw ConfigError("batch size must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(positive_weight > 0.0)) throw ConfigError("positive-class weight must be positive");
    if (freeze_prefix > kLayerCount) {
      throw ConfigError("freeze prefix " + std::to_string(freeze_prefix) + " exceeds " +
                        std::to_string(kLayerCount) + " layers");
    }
  }
};

struct DatasetSplit {
  std::vector<Sample> train, test;
};

// Seeded Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, Prng& prng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(prng.uniform_int(0, std::int64_t(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

// Shuffle, then the first round(fraction n) samples train and the rest test.
// Both sides keep at least one sample.
inline DatasetSplit split_dataset(const std::vector<Sample>& samples, double fraction, std::uint64_t seed) {
  if (samples.size() < 2) {
    throw SizeError("cannot split " + std::to_string(samples.size()) + " sample(s); at least 2 are required");
  }
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("split fraction must lie in (0, 1), got " + std::to_string(fraction));
  }
  const std::size_t n = samples.size();
  const auto n_train = std::clamp<std::size_t>(std::size_t(std::llround(fraction * double(n))), 1, n - 1);
  Prng prng = Prng::derive(seed, 0);
  const auto order = shuffled_indices(n, prng);
  DatasetSplit s;
  s.train.reserve(n_train);
  s.test.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) (i < n_train ? s.train : s.test).push_back(samples[order[i]]);
  return s;
}

template <typename T>
struct AdamState {
  double learning_rate = 0.001;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m, v;  // empty until the first step
};

// One bias-corrected Adam update. Frozen parameters keep their value and
// their moments.
template <typename T>
void adam_step(AdamState<T>& st, const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
               const std::vector<std::uint8_t>& frozen = {}) {
  if (grads.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (!frozen.empty() && frozen.size() != params.size()) throw DimensionError("adam_step: one freeze flag per parameter");
  if (st.m.empty()) {
    for (const auto* p : params) {
      st.m.emplace_back(p->shape());
      st.v.emplace_back(p->shape());
    }
  }
  if (st.m.size() != params.size()) throw DimensionError("adam_step: optimizer state tracks a different model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i]->shape() != params[i]->shape() || st.m[i].shape() != params[i]->shape()) {
      throw DimensionError("adam_step: parameter " + std::to_string(i) + " has shape " +
                           shape_str(params[i]->shape()) + " but gradient " + shape_str(grads[i]->shape()));
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, double(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, double(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!frozen.empty() && frozen[i]) continue;
    Tensor<T>& p = *params[i];
    const Tensor<T>& g = *grads[i];
    Tensor<T>& m = st.m[i];
    Tensor<T>& v = st.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = double(g[j]);
      const double mj = st.beta1 * double(m[j]) + (1.0 - st.beta1) * gj;
      const double vj = st.beta2 * double(v[j]) + (1.0 - st.beta2) * gj * gj;
      m[j] = T(mj);
      v[j] = T(vj);
      p[j] = T(double(p[j]) - st.learning_rate * (mj / c1) / (std::sqrt(vj / c2) + st.epsilon));
    }
  }
}

template <typename T>
void adam_step(AdamState<T>& st, Network<T>& net, const Network<T>& grads) {
  auto g = parameter_tensors(grads);
  adam_step(st, parameter_tensors(net), g, net.frozen);
}

// Images as B x 1 x P x P and masks as B x P x P for samples[idx[begin..end)].
struct Batch {
  Tensor<float> images, masks;
};

inline Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx, std::size_t begin,
                        std::size_t end) {
  const std::size_t n = end - begin, p = samples[idx[begin]].image.dim(0);
  Batch b{Tensor<float>({n, 1, p, p}, Uninitialized{}), Tensor<float>({n, p, p}, Uninitialized{})};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[idx[begin + i]];
    if (s.image.shape() != Shape{p, p} || s.mask.shape() != Shape{p, p}) {
      throw DimensionError("sample " + std::to_string(idx[begin + i]) + " is not " + std::to_string(p) + "x" +
                           std::to_string(p));
    }
    std::copy_n(s.image.ptr(), p * p, b.images.ptr() + i * p * p);
    std::copy_n(s.mask.ptr(), p * p, b.masks.ptr() + i * p * p);
  }
  return b;
}

// P(heterogeneity) for every sample, N x P x P.
inline Tensor<float> predict_samples(const Network<float>& net, const std::vector<Sample>& samples,
                                     std::size_t batch_size = 32) {
  if (samples.empty()) throw SizeError("predict: no samples");
  const std::size_t p = samples.front().image.dim(0);
  Tensor<float> out({samples.size(), p, p}, Uninitialized{});
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t b = 0; b < samples.size(); b += batch_size) {
    const std::size_t e = std::min(samples.size(), b + batch_size);
    const auto batch = make_batch(samples, idx, b, e);
    const auto prob = heterogeneity_probability(forward(net, batch.images));
    std::copy_n(prob.ptr(), prob.size(), out.ptr() + b * p * p);
  }
  return out;
}

// Micro-averaged metrics of the thresholded predictions.
inline MetricsReport evaluate_samples(const Network<float>& net, const std::vector<Sample>& samples,
                                      std::size_t batch_size = 32, double threshold = 0.5) {
  const auto pred = threshold_probability(predict_samples(net, samples, batch_size), threshold);
  const std::size_t p = samples.front().image.dim(0);
  Tensor<float> truth({samples.size(), p, p}, Uninitialized{});
  for (std::size_t i = 0; i < samples.size(); ++i) std::copy_n(samples[i].mask.ptr(), p * p, truth.ptr() + i * p * p);
  return evaluate(pred, truth);
}

// Mean cross-entropy over the samples, evaluated without updating anything.
inline double dataset_loss(const Network<float>& net, const std::vector<Sample>& samples, double positive_weight = 1.0,
                           std::size_t batch_size = 32) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double total = 0;
  for (std::size_t b = 0; b < samples.size(); b += batch_size) {
    const std::size_t e = std::min(samples.size(), b + batch_size);
    const auto batch = make_batch(samples, idx, b, e);
    total += cross_entropy_2class(forward(net, batch.images), batch.masks, positive_weight).loss * double(e - b);
  }
  return total / double(samples.size());
}

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0;        // mean training loss over the epoch
  MetricsReport metrics;  // held-out
};

inline std::string format_epoch(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f iou %.6f precision %.6f recall %.6f f1 %.6f", e.epoch, e.loss,
                e.metrics.iou, e.metrics.precision, e.metrics.recall, e.metrics.f1);
  return buf;
}

struct TrainResult {
  Network<float> model;
  std::vector<EpochLog> log;
};

// Called after every epoch; returning false stops training early.
using EpochCallback = std::function<bool(const EpochLog&)>;

// Trains on `train` and reports metrics on `heldout` after every epoch (on
// `train` itself when `heldout` is empty). Starts from fresh Adam moments.
inline TrainResult fit(Network<float> net, const std::vector<Sample>& train, const std::vector<Sample>& heldout,
                       const TrainConfig& config, const EpochCallback& on_epoch = {}) {
  config.validate();
  if (train.empty()) throw SizeError("training set is empty");
  freeze_prefix(net, config.freeze_prefix);
  AdamState<float> adam;
  adam.learning_rate = config.learning_rate;
  auto grads = zeros_like(net);
  const auto& monitor = heldout.empty() ? train : heldout;
  TrainResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Prng prng = Prng::derive(config.seed, epoch);
    const auto order = shuffled_indices(train.size(), prng);
    double loss_sum = 0;
    for (std::size_t b = 0, batch_no = 1; b < train.size(); b += config.batch_size, ++batch_no) {
      const std::size_t e = std::min(train.size(), b + config.batch_size);
      const auto batch = make_batch(train, order, b, e);
      ForwardTrace<float> trace;
      const auto logits = forward(net, batch.images, &trace);
      const auto loss = cross_entropy_2class(logits, batch.masks, config.positive_weight);
      if (!std::isfinite(loss.loss)) {
        throw TrainingError("non-finite loss " + std::to_string(loss.loss) + " at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_no));
      }
      for_each_parameter(grads, [](const ParamInfo&, Tensor<float>& t) { t.fill(0.0f); });
      backward(net, trace, loss.grad, grads);
      adam_step(adam, net, grads);
      loss_sum += loss.loss * double(e - b);
    }
    EpochLog log{epoch, loss_sum / double(train.size()), evaluate_samples(net, monitor, config.batch_size)};
    result.log.push_back(log);
    if (on_epoch && !on_epoch(log)) break;
  }
  result.model = std::move(net);
  return result;
}

// Split per config, then fit.
inline TrainResult train(Network<float> net, const std::vector<Sample>& dataset, const TrainConfig& config,
                         const EpochCallback& on_epoch = {}) {
  config.validate();
  const auto split = split_dataset(dataset, config.split, config.seed);
  return fit(std::move(net), split.train, split.test, config, on_epoch);
}

// Initial weights come from their own stream, apart from the split (stream 0)
// and the per-epoch shuffles (streams 1..epochs).
inline constexpr std::uint64_t kInitStream = ~std::uint64_t{0};

inline Network<float> initial_network(AttentionVariant variant, std::uint64_t seed) {
  Prng prng = Prng::derive(seed, kInitStream);
  return build_network<float>(variant, prng);
}

inline TrainConfig finetune_defaults() {
  TrainConfig c;
  c.epochs = 30;
  c.freeze_prefix = 2;
  return c;
}

// Transfer learning from a pretrained model: the first `freeze_prefix` layer
// groups stay fixed and Adam restarts from zero moments.
inline TrainResult finetune(Network<float> pretrained, const std::vector<Sample>& real,
                            const TrainConfig& config = finetune_defaults(), const EpochCallback& on_epoch = {}) {
  return train(std::move(pretrained), real, config, on_epoch);
}

}  // namespace seishet
