#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "seishet/tensor.hpp"

namespace seishet {

// Central-difference gradient of a scalar function, evaluated in double.
inline Tensor<double> finite_difference_grad(const std::function<double(const Tensor<double>&)>& f,
                                             const Tensor<double>& x, double h = 1e-6) {
  if (!(h > 0)) throw ConfigError("finite_difference_grad: step must be positive");
  Tensor<double> grad(x.shape());
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw EvaluationError("finite_difference_grad: non-finite function value at element " +
                            std::to_string(i));
    }
    grad[i] = (fp - fm) / (2 * h);
  }
  return grad;
}

// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double relative_error(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.size() != b.size()) throw DimensionError("relative_error: length mismatch");
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nb));
  return denom == 0 ? 0.0 : std::sqrt(diff) / denom;
}

}  // namespace seishet
