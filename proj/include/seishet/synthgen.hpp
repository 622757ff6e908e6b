#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "seishet/errors.hpp"
#include "seishet/prng.hpp"
#include "seishet/tensor.hpp"

namespace seishet {

struct Range {
  double lo = 0, hi = 0;
  bool operator==(const Range&) const = default;
};

struct IntRange {
  std::int64_t lo = 0, hi = 0;
  bool operator==(const IntRange&) const = default;
};

struct SyntheticConfig {
  std::size_t height = 128;  // samples
  std::size_t width = 128;   // traces
  std::size_t count = 4000;  // sections
  IntRange thickness{5, 20};
  Range fold_amplitude{0, 10};
  Range fold_wavelength{32, 128};
  Range shear{-0.2, 0.2};
  IntRange faults{1, 3};
  Range dip{50, 85};  // degrees from horizontal
  IntRange fault_throw{3, 15};
  Range peak_period{12, 25};
  Range noise{0, 0.1};  // fraction of signal RMS
  std::size_t dilation = 1;
  std::uint64_t seed = 0;
  std::size_t patch = 44;
  std::size_t stride = 22;

  void validate() const {
    auto range = [](const char* name, double lo, double hi) {
      if (!(lo <= hi)) {
        throw ConfigError(std::string(name) + " range is empty (" + std::to_string(lo) + " > " +
                          std::to_string(hi) + ")");
      }
    };
    if (height < patch || width < patch) {
      throw ConfigError("section " + std::to_string(height) + "x" + std::to_string(width) +
                        " is smaller than the " + std::to_string(patch) + " patch");
    }
    if (count == 0) throw ConfigError("section count must be positive");
    if (patch == 0 || stride == 0) throw ConfigError("patch and stride must be positive");
    range("thickness", double(thickness.lo), double(thickness.hi));
    if (thickness.lo < 1) throw ConfigError("layer thickness must be at least 1 sample");
    range("fold amplitude", fold_amplitude.lo, fold_amplitude.hi);
    range("fold wavelength", fold_wavelength.lo, fold_wavelength.hi);
    if (fold_wavelength.lo <= 0) throw ConfigError("fold wavelength must be positive");
    range("shear", shear.lo, shear.hi);
    range("fault count", double(faults.lo), double(faults.hi));
    if (faults.lo < 0) throw ConfigError("fault count cannot be negative");
    range("dip", dip.lo, dip.hi);
    if (dip.lo <= 0 || dip.hi > 90) throw ConfigError("dip must lie in (0, 90] degrees");
    range("throw", double(fault_throw.lo), double(fault_throw.hi));
    range("peak period", peak_period.lo, peak_period.hi);
    if (peak_period.lo <= 0) throw ConfigError("wavelet peak period must be positive");
    range("noise", noise.lo, noise.hi);
    if (noise.lo < 0) throw ConfigError("noise fraction cannot be negative");
  }
};

// Horizontally layered spike model: boundaries every `thickness` samples
// (drawn per layer), amplitude uniform in [-1, 1], identical in every trace.
inline Tensor<double> generate_reflectivity(std::size_t height, std::size_t width, IntRange thickness,
                                            Prng& prng) {
  Tensor<double> r({height, width});
  std::size_t depth = 0;
  while (true) {
    depth += static_cast<std::size_t>(prng.uniform_int(thickness.lo, thickness.hi));
    if (depth >= height) break;
    const double amp = prng.uniform(-1.0, 1.0);
    std::fill_n(r.ptr() + depth * width, width, amp);
  }
  return r;
}

inline Tensor<double> generate_reflectivity(const SyntheticConfig& config, Prng& prng) {
  return generate_reflectivity(config.height, config.width, config.thickness, prng);
}

// Moves column x down by shift[x] samples: out(y, x) = in(y - shift[x], x),
// linearly interpolated, zero outside the section.
inline Tensor<double> displace_columns(const Tensor<double>& section, const std::vector<double>& shift) {
  require_rank(section, 2, "displace_columns");
  const std::size_t h = section.dim(0), w = section.dim(1);
  if (shift.size() != w) throw DimensionError("displace_columns: one shift per trace required");
  Tensor<double> out({h, w});
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) {
      const double src = double(y) - shift[x];
      const double f = std::floor(src);
      const double t = src - f;
      const auto i0 = static_cast<std::ptrdiff_t>(f);
      auto at = [&](std::ptrdiff_t i) {
        return (i < 0 || i >= static_cast<std::ptrdiff_t>(h)) ? 0.0 : section[std::size_t(i) * w + x];
      };
      out[y * w + x] = t == 0.0 ? at(i0) : (1.0 - t) * at(i0) + t * at(i0 + 1);
    }
  }
  return out;
}

struct FoldParams {
  double amplitude = 0, wavelength = 1, phase = 0;
};

inline std::vector<double> fold_displacement(const FoldParams& p, std::size_t width) {
  std::vector<double> d(width);
  for (std::size_t x = 0; x < width; ++x) {
    d[x] = p.amplitude * std::sin(2.0 * std::numbers::pi * double(x) / p.wavelength + p.phase);
  }
  return d;
}

inline Tensor<double> apply_fold(const Tensor<double>& section, const FoldParams& p) {
  if (p.amplitude == 0.0) return section;
  return displace_columns(section, fold_displacement(p, section.dim(1)));
}

inline FoldParams sample_fold(const SyntheticConfig& c, Prng& prng) {
  FoldParams p;
  p.amplitude = prng.uniform(c.fold_amplitude.lo, c.fold_amplitude.hi);
  p.wavelength = prng.uniform(c.fold_wavelength.lo, c.fold_wavelength.hi);
  p.phase = prng.uniform(0.0, 2.0 * std::numbers::pi);
  return p;
}

inline Tensor<double> apply_fold(const Tensor<double>& section, const SyntheticConfig& c, Prng& prng) {
  return apply_fold(section, sample_fold(c, prng));
}

// Vertical displacement s0 * x.
inline Tensor<double> apply_shear(const Tensor<double>& section, double slope) {
  if (slope == 0.0) return section;
  std::vector<double> d(section.dim(1));
  for (std::size_t x = 0; x < d.size(); ++x) d[x] = slope * double(x);
  return displace_columns(section, d);
}

inline Tensor<double> apply_shear(const Tensor<double>& section, const SyntheticConfig& c, Prng& prng) {
  return apply_shear(section, prng.uniform(c.shear.lo, c.shear.hi));
}

// A straight fault through (center_x, center_y) dipping `dip` degrees from
// horizontal. Samples with x >= trace(y) drop by `offset` samples.
struct FaultParams {
  double center_x = 0, center_y = 0;
  double dip = 90;
  int direction = 1;  // +1: trace moves right with depth, -1: left
  std::int64_t offset = 0;

  double trace_at(double y) const {
    const double run = std::abs(dip - 90.0) < 1e-12 ? 0.0 : 1.0 / std::tan(dip * std::numbers::pi / 180.0);
    return center_x + direction * run * (y - center_y);
  }
};

struct FaultedSection {
  Tensor<double> section;
  Tensor<double> mask;  // 0 / 1
};

namespace detail {

// out(y, x) = in(y - offset, x) on the moving side of the fault, zero fill.
inline void shift_hanging_wall(const Tensor<double>& in, Tensor<double>& out, const FaultParams& f) {
  const std::size_t h = in.dim(0), w = in.dim(1);
  out = in;
  for (std::size_t y = 0; y < h; ++y) {
    const double edge = f.trace_at(double(y));
    const auto src = static_cast<std::int64_t>(y) - f.offset;
    for (std::size_t x = 0; x < w; ++x) {
      if (double(x) < edge) continue;
      out[y * w + x] = (src < 0 || src >= static_cast<std::int64_t>(h)) ? 0.0 : in[std::size_t(src) * w + x];
    }
  }
}

inline void mark(Tensor<double>& mask, std::int64_t y, std::int64_t x) {
  if (y < 0 || x < 0 || y >= std::int64_t(mask.dim(0)) || x >= std::int64_t(mask.dim(1))) return;
  mask[std::size_t(y) * mask.dim(1) + std::size_t(x)] = 1.0;
}

}  // namespace detail

// One-pixel rasterization of the fault trace, dilated by a square of the
// given radius.
inline Tensor<double> rasterize_fault(const FaultParams& f, std::size_t height, std::size_t width,
                                      std::size_t radius) {
  Tensor<double> line({height, width});
  for (std::size_t y = 0; y < height; ++y) {
    const double x0 = f.trace_at(double(y));
    const double x1 = f.trace_at(double(y) + 1.0);
    // Cover every column the trace crosses between this row and the next so
    // shallow dips stay connected.
    const auto a = static_cast<std::int64_t>(std::llround(std::min(x0, x1)));
    const auto b = std::max(a, static_cast<std::int64_t>(std::llround(std::max(x0, x1))) - 1);
    for (std::int64_t x = a; x <= b; ++x) detail::mark(line, std::int64_t(y), x);
  }
  if (radius == 0) return line;
  Tensor<double> out({height, width});
  const auto r = static_cast<std::int64_t>(radius);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      if (line[y * width + x] != 0.0)
        for (std::int64_t dy = -r; dy <= r; ++dy)
          for (std::int64_t dx = -r; dx <= r; ++dx) detail::mark(out, std::int64_t(y) + dy, std::int64_t(x) + dx);
  return out;
}

// Applies faults in order. Each fault also displaces the masks of the faults
// before it, so earlier traces stay attached to the rock they cut.
inline FaultedSection apply_faults(const Tensor<double>& section, const std::vector<FaultParams>& faults,
                                   std::size_t radius) {
  require_rank(section, 2, "apply_faults");
  const std::size_t h = section.dim(0), w = section.dim(1);
  FaultedSection out{section, Tensor<double>({h, w})};
  for (const auto& f : faults) {
    Tensor<double> s, m;
    detail::shift_hanging_wall(out.section, s, f);
    detail::shift_hanging_wall(out.mask, m, f);
    const auto trace = rasterize_fault(f, h, w, radius);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::max(m[i], trace[i]);
    out.section = std::move(s);
    out.mask = std::move(m);
  }
  return out;
}

inline std::vector<FaultParams> sample_faults(const SyntheticConfig& c, std::size_t height, std::size_t width,
                                              Prng& prng) {
  const auto n = prng.uniform_int(c.faults.lo, c.faults.hi);
  std::vector<FaultParams> faults(static_cast<std::size_t>(n));
  for (auto& f : faults) {
    f.center_x = prng.uniform(0.2 * double(width), 0.8 * double(width));
    f.center_y = 0.5 * double(height);
    f.dip = prng.uniform(c.dip.lo, c.dip.hi);
    f.direction = prng.uniform() < 0.5 ? -1 : 1;
    f.offset = prng.uniform_int(c.fault_throw.lo, c.fault_throw.hi);
  }
  return faults;
}

inline FaultedSection apply_faults(const Tensor<double>& section, const SyntheticConfig& c, Prng& prng) {
  return apply_faults(section, sample_faults(c, section.dim(0), section.dim(1), prng), c.dilation);
}

// Zero-phase Ricker wavelet with peak frequency 1 / peak_period (cycles per
// sample), centered on the middle sample.
inline Tensor<double> ricker(double peak_period, std::size_t length) {
  if (length % 2 == 0) throw DimensionError("ricker: wavelet length must be odd, got " + std::to_string(length));
  if (!(peak_period > 0)) throw ConfigError("ricker: peak period must be positive");
  const double f = 1.0 / peak_period;
  const double a = std::numbers::pi * std::numbers::pi * f * f;
  const auto half = static_cast<std::int64_t>(length / 2);
  Tensor<double> w({length});
  for (std::int64_t i = -half; i <= half; ++i) {
    const double t2 = double(i) * double(i);
    w[std::size_t(i + half)] = (1.0 - 2.0 * a * t2) * std::exp(-a * t2);
  }
  return w;
}

// Long enough for the tails to fall below 1e-9 of the peak.
inline std::size_t ricker_length(double peak_period) {
  return 2 * static_cast<std::size_t>(std::ceil(1.5 * peak_period)) + 1;
}

// Same-length convolution of each column with the wavelet, zero padded.
inline Tensor<double> convolve_traces(const Tensor<double>& section, const Tensor<double>& wavelet) {
  require_rank(section, 2, "convolve_traces");
  const std::size_t h = section.dim(0), w = section.dim(1), n = wavelet.size();
  const auto c = static_cast<std::int64_t>(n / 2);
  Tensor<double> out({h, w});
  for (std::size_t y = 0; y < h; ++y) {
    double* o = out.ptr() + y * w;
    for (std::size_t k = 0; k < n; ++k) {
      const std::int64_t src = std::int64_t(y) + c - std::int64_t(k);
      if (src < 0 || src >= std::int64_t(h)) continue;
      const double wk = wavelet[k];
      const double* in = section.ptr() + std::size_t(src) * w;
      for (std::size_t x = 0; x < w; ++x) o[x] += wk * in[x];
    }
  }
  return out;
}

inline double rms(const Tensor<double>& t) {
  double s = 0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s / double(t.size()));
}

// Zero-mean Gaussian noise with sigma = fraction x RMS of the section.
inline Tensor<double> add_noise(const Tensor<double>& section, double fraction, Prng& prng) {
  if (fraction == 0.0) return section;
  const double sigma = fraction * rms(section);
  Tensor<double> out(section.shape());
  for (std::size_t i = 0; i < section.size(); ++i) out[i] = section[i] + sigma * prng.normal();
  return out;
}

inline Tensor<double> add_noise(const Tensor<double>& section, const SyntheticConfig& c, Prng& prng) {
  return add_noise(section, prng.uniform(c.noise.lo, c.noise.hi), prng);
}

struct Sample {
  Tensor<float> image;  // patch x patch, in [-1, 1]
  Tensor<float> mask;   // patch x patch, 0 / 1
};

// Min-max scaling to [-1, 1]; a constant window maps to zeros.
template <typename T>
Tensor<float> normalize_patch(const Tensor<T>& window) {
  const auto [lo, hi] = std::minmax_element(window.data().begin(), window.data().end());
  const double mn = double(*lo), mx = double(*hi);
  Tensor<float> out(window.shape());
  if (mx == mn) return out;
  const double span = mx - mn;
  for (std::size_t i = 0; i < window.size(); ++i) {
    out[i] = static_cast<float>(2.0 * ((double(window[i]) - mn) / span) - 1.0);
  }
  return out;
}

// Window origins 0, stride, 2 stride, ... that fit inside `extent`.
inline std::vector<std::size_t> window_origins(std::size_t extent, std::size_t window, std::size_t stride) {
  std::vector<std::size_t> o;
  for (std::size_t p = 0; p + window <= extent; p += stride) o.push_back(p);
  return o;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& section, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  Tensor<T> out({h, w});
  for (std::size_t y = 0; y < h; ++y)
    std::copy_n(section.ptr() + (y0 + y) * section.dim(1) + x0, w, out.ptr() + y * w);
  return out;
}

inline std::vector<Sample> extract_patches(const Tensor<double>& section, const Tensor<double>& mask,
                                           std::size_t patch = 44, std::size_t stride = 22) {
  require_rank(section, 2, "extract_patches");
  if (mask.shape() != section.shape()) {
    throw DimensionError("extract_patches: mask " + shape_str(mask.shape()) + " vs section " +
                         shape_str(section.shape()));
  }
  if (section.dim(0) < patch || section.dim(1) < patch) {
    throw DimensionError("extract_patches: section " + shape_str(section.shape()) + " smaller than patch " +
                         std::to_string(patch));
  }
  if (stride == 0) throw ConfigError("extract_patches: stride must be positive");
  std::vector<Sample> out;
  for (auto y : window_origins(section.dim(0), patch, stride))
    for (auto x : window_origins(section.dim(1), patch, stride)) {
      out.push_back({normalize_patch(crop(section, y, x, patch, patch)),
                     crop(mask, y, x, patch, patch).cast<float>()});
    }
  return out;
}

struct SyntheticSection {
  Tensor<double> clean;  // after wavelet, before noise
  Tensor<double> image;
  Tensor<double> mask;
  FoldParams fold;
  double shear = 0;
  std::vector<FaultParams> faults;
  double peak_period = 0;
  double noise_fraction = 0;
};

// Deformations run on a taller, wider model so that folding, shearing and
// fault throw never pull empty rock into the cropped section.
inline std::size_t deformation_margin(const SyntheticConfig& c) {
  const double fold = std::max(std::abs(c.fold_amplitude.lo), std::abs(c.fold_amplitude.hi));
  const double shear = std::max(std::abs(c.shear.lo), std::abs(c.shear.hi)) * double(2 * c.width);
  const double faults = double(std::max<std::int64_t>(0, c.faults.hi)) *
                        double(std::max(std::abs(c.fault_throw.lo), std::abs(c.fault_throw.hi)));
  return static_cast<std::size_t>(std::ceil(fold + shear + faults)) + 1;
}

// Section `index` of the corpus, drawn from derive(seed, index):
// reflectivity -> fold -> shear -> faults -> wavelet -> noise.
inline SyntheticSection generate_section(const SyntheticConfig& c, std::uint64_t index) {
  c.validate();
  Prng prng = Prng::derive(c.seed, index);
  const std::size_t margin = deformation_margin(c);
  const std::size_t ph = c.height + 2 * margin, pw = c.width;
  SyntheticSection s;
  auto model = generate_reflectivity(ph, pw, c.thickness, prng);
  s.fold = sample_fold(c, prng);
  model = apply_fold(model, s.fold);
  s.shear = prng.uniform(c.shear.lo, c.shear.hi);
  // Shear about the central trace keeps the crop window inside the model.
  {
    std::vector<double> d(pw);
    for (std::size_t x = 0; x < pw; ++x) d[x] = s.shear * (double(x) - 0.5 * double(pw - 1));
    if (s.shear != 0.0) model = displace_columns(model, d);
  }
  s.faults = sample_faults(c, ph, pw, prng);
  auto faulted = apply_faults(model, s.faults, c.dilation);
  s.peak_period = prng.uniform(c.peak_period.lo, c.peak_period.hi);
  const auto wavelet = ricker(s.peak_period, ricker_length(s.peak_period));
  const auto seismic = convolve_traces(faulted.section, wavelet);
  s.clean = crop(seismic, margin, 0, c.height, c.width);
  s.mask = crop(faulted.mask, margin, 0, c.height, c.width);
  s.noise_fraction = prng.uniform(c.noise.lo, c.noise.hi);
  s.image = add_noise(s.clean, s.noise_fraction, prng);
  return s;
}

inline std::vector<Sample> generate_dataset(const SyntheticConfig& c) {
  c.validate();
  std::vector<Sample> out;
  for (std::uint64_t i = 0; i < c.count; ++i) {
    const auto s = generate_section(c, i);
    auto patches = extract_patches(s.image, s.mask, c.patch, c.stride);
    std::move(patches.begin(), patches.end(), std::back_inserter(out));
  }
  return out;
}

}  // namespace seishet
