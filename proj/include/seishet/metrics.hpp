#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "seishet/errors.hpp"
#include "seishet/tensor.hpp"

namespace seishet {

// Pixel = 1 iff P(heterogeneity) >= threshold. Works on any shape.
template <typename T>
Tensor<float> threshold_probability(const Tensor<T>& p, double threshold = 0.5) {
  Tensor<float> m(p.shape(), Uninitialized{});
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = double(p[i]) >= threshold ? 1.0f : 0.0f;
  return m;
}

// Two-channel probability map (2 x H x W, channel 1 = heterogeneity) to an
// H x W mask.
template <typename T>
Tensor<float> binarize(const Tensor<T>& probs, double threshold = 0.5) {
  require_rank(probs, 3, "binarize");
  if (probs.dim(0) != 2) throw DimensionError("binarize: expected 2 x H x W, got " + shape_str(probs.shape()));
  const std::size_t plane = probs.dim(1) * probs.dim(2);
  Tensor<float> m({probs.dim(1), probs.dim(2)}, Uninitialized{});
  for (std::size_t i = 0; i < plane; ++i) m[i] = double(probs[plane + i]) >= threshold ? 1.0f : 0.0f;
  return m;
}

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

template <typename T, typename U>
ConfusionCounts confusion(const Tensor<T>& pred, const Tensor<U>& truth) {
  if (pred.shape() != truth.shape()) {
    throw DimensionError("evaluate: prediction " + shape_str(pred.shape()) + " vs truth " +
                         shape_str(truth.shape()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = double(pred[i]), t = double(truth[i]);
    if ((p != 0 && p != 1) || (t != 0 && t != 1)) {
      throw LabelError("evaluate: pixel " + std::to_string(i) + " is not binary (pred " + std::to_string(p) +
                       ", truth " + std::to_string(t) + ")");
    }
    if (p == 1) {
      t == 1 ? ++c.tp : ++c.fp;
    } else {
      t == 1 ? ++c.fn : ++c.tn;
    }
  }
  return c;
}

struct MetricsReport {
  double iou = 0, precision = 0, recall = 0, f1 = 0;
  ConfusionCounts counts;
};

// Both masks empty counts as perfect agreement; otherwise an empty
// denominator gives 0.
inline MetricsReport report_from_counts(const ConfusionCounts& c) {
  MetricsReport r;
  r.counts = c;
  if (c.tp + c.fp + c.fn == 0) {
    r.iou = r.precision = r.recall = r.f1 = 1.0;
    return r;
  }
  auto ratio = [](std::uint64_t num, std::uint64_t den) { return den == 0 ? 0.0 : double(num) / double(den); };
  r.iou = ratio(c.tp, c.tp + c.fp + c.fn);
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

template <typename T, typename U>
MetricsReport evaluate(const Tensor<T>& pred, const Tensor<U>& truth) {
  return report_from_counts(confusion(pred, truth));
}

// Micro aggregation: confusion counts summed over every pair.
template <typename T, typename U>
MetricsReport evaluate_all(const std::vector<Tensor<T>>& preds, const std::vector<Tensor<U>>& truths) {
  if (preds.size() != truths.size()) {
    throw DimensionError("evaluate: " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(truths.size()) + " masks");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) c += confusion(preds[i], truths[i]);
  return report_from_counts(c);
}

inline std::string format_report(const MetricsReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "metric       value\n"
                "iou       %8.4f\n"
                "precision %8.4f\n"
                "recall    %8.4f\n"
                "f1        %8.4f\n"
                "tp %llu  fp %llu  fn %llu  tn %llu\n",
                r.iou, r.precision, r.recall, r.f1, static_cast<unsigned long long>(r.counts.tp),
                static_cast<unsigned long long>(r.counts.fp), static_cast<unsigned long long>(r.counts.fn),
                static_cast<unsigned long long>(r.counts.tn));
  return buf;
}

inline nlohmann::ordered_json report_to_json(const MetricsReport& r) {
  return {{"iou", r.iou},
          {"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"tp", r.counts.tp},
          {"fp", r.counts.fp},
          {"fn", r.counts.fn},
          {"tn", r.counts.tn}};
}

}  // namespace seishet
