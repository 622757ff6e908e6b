#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "seishet/errors.hpp"
#include "seishet/imageio.hpp"
#include "seishet/model.hpp"
#include "seishet/segy.hpp"
#include "seishet/synthgen.hpp"

namespace seishet {

// Align-corners bilinear resampling: output corners land on input corners.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& img, std::size_t out_h, std::size_t out_w) {
  require_rank(img, 2, "resize_bilinear");
  const std::size_t h = img.dim(0), w = img.dim(1);
  auto coord = [](std::size_t i, std::size_t in, std::size_t out) {
    return out == 1 ? 0.0 : double(i) * double(in - 1) / double(out - 1);
  };
  Tensor<T> out({out_h, out_w}, Uninitialized{});
  for (std::size_t y = 0; y < out_h; ++y) {
    const double sy = coord(y, h, out_h);
    const auto y0 = std::min(static_cast<std::size_t>(sy), h - 1);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ty = sy - double(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = coord(x, w, out_w);
      const auto x0 = std::min(static_cast<std::size_t>(sx), w - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double tx = sx - double(x0);
      const double top = (1.0 - tx) * double(img[y0 * w + x0]) + tx * double(img[y0 * w + x1]);
      const double bot = (1.0 - tx) * double(img[y1 * w + x0]) + tx * double(img[y1 * w + x1]);
      out[y * out_w + x] = static_cast<T>((1.0 - ty) * top + ty * bot);
    }
  }
  return out;
}

// Nearest neighbour on pixel centers.
template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& img, std::size_t out_h, std::size_t out_w) {
  require_rank(img, 2, "resize_nearest");
  const std::size_t h = img.dim(0), w = img.dim(1);
  Tensor<T> out({out_h, out_w}, Uninitialized{});
  for (std::size_t y = 0; y < out_h; ++y) {
    const std::size_t sy = std::min(h - 1, static_cast<std::size_t>((double(y) + 0.5) * double(h) / double(out_h)));
    for (std::size_t x = 0; x < out_w; ++x) {
      const std::size_t sx = std::min(w - 1, static_cast<std::size_t>((double(x) + 0.5) * double(w) / double(out_w)));
      out[y * out_w + x] = img[sy * w + sx];
    }
  }
  return out;
}

inline void check_window(const Shape& section, std::size_t window, const char* what) {
  if (section.size() != 2 || section[0] < window || section[1] < window) {
    throw DimensionError(std::string(what) + ": section " + shape_str(section) + " is smaller than the " +
                         std::to_string(window) + "x" + std::to_string(window) + " window");
  }
}

// Network input for one window: bilinear rescale to dst x dst, then min-max
// normalization to [-1, 1].
template <typename T>
Tensor<float> prepare_window(const Tensor<T>& section, std::size_t y, std::size_t x, std::size_t src, std::size_t dst) {
  return normalize_patch(resize_bilinear(crop(section, y, x, src, src).template cast<double>(), dst, dst));
}

// src x src windows at `stride`, rescaled to dst x dst. Masks use nearest
// neighbour and are re-binarized at 0.5.
template <typename T, typename U>
std::vector<Sample> real_patches(const Tensor<T>& section, const Tensor<U>& mask, std::size_t src = 20,
                                 std::size_t dst = kPatchSize, std::size_t stride = 10) {
  require_rank(section, 2, "real_patches");
  if (mask.shape() != section.shape()) {
    throw DimensionError("real_patches: mask " + shape_str(mask.shape()) + " vs section " + shape_str(section.shape()));
  }
  check_window(section.shape(), src, "real_patches");
  if (stride == 0) throw ConfigError("real_patches: stride must be positive");
  std::vector<Sample> out;
  for (auto y : window_origins(section.dim(0), src, stride))
    for (auto x : window_origins(section.dim(1), src, stride)) {
      auto m = resize_nearest(crop(mask, y, x, src, src).template cast<float>(), dst, dst);
      for (auto& v : m.data()) v = v >= 0.5f ? 1.0f : 0.0f;
      out.push_back({prepare_window(section, y, x, src, dst), std::move(m)});
    }
  return out;
}

// Patches of one annotated line; the mask is mask_<axis><id>.pgm in mask_dir.
inline std::vector<Sample> line_patches(const SegyVolume& volume, LineAxis axis, std::int64_t line,
                                        const std::filesystem::path& mask_dir, std::size_t src = 20,
                                        std::size_t stride = 10) {
  const auto section = read_section(volume, axis, line);
  const auto mask_path = mask_dir / mask_file_name(axis, line);
  const auto mask = gray_to_mask(read_pgm(mask_path));
  if (mask.shape() != section.amplitudes.shape()) {
    throw DimensionError("'" + mask_path.string() + "' is " + shape_str(mask.shape()) + " but " +
                         std::string(axis_name(axis)) + " " + std::to_string(line) + " is " +
                         shape_str(section.amplitudes.shape()));
  }
  return real_patches(section.amplitudes, mask, src, kPatchSize, stride);
}

// Confidence map over a whole section. `predict` maps a B x 1 x dst x dst
// batch to B x dst x dst probabilities. Each window's map is resized back to
// src x src and overlapping windows are averaged; uncovered pixels are 0.
template <typename T, typename Predictor>
Tensor<float> tile_predict(Predictor&& predict, const Tensor<T>& section, std::size_t src = 20, std::size_t stride = 10,
                           std::size_t dst = kPatchSize, std::size_t batch_size = 32) {
  require_rank(section, 2, "tile_predict");
  check_window(section.shape(), src, "tile_predict");
  if (stride == 0 || batch_size == 0) throw ConfigError("tile_predict: stride and batch size must be positive");
  const std::size_t h = section.dim(0), w = section.dim(1);
  std::vector<std::pair<std::size_t, std::size_t>> origins;
  for (auto y : window_origins(h, src, stride))
    for (auto x : window_origins(w, src, stride)) origins.emplace_back(y, x);

  std::vector<double> sum(h * w, 0.0);
  std::vector<std::uint32_t> count(h * w, 0);
  for (std::size_t b = 0; b < origins.size(); b += batch_size) {
    const std::size_t n = std::min(batch_size, origins.size() - b);
    Tensor<float> batch({n, 1, dst, dst}, Uninitialized{});
    for (std::size_t i = 0; i < n; ++i) {
      const auto win = prepare_window(section, origins[b + i].first, origins[b + i].second, src, dst);
      std::copy_n(win.ptr(), dst * dst, batch.ptr() + i * dst * dst);
    }
    const Tensor<float> prob = predict(batch);
    require_shape(prob, {n, dst, dst}, "tile_predict predictor output");
    for (std::size_t i = 0; i < n; ++i) {
      const auto [y0, x0] = origins[b + i];
      Tensor<float> window({dst, dst}, Uninitialized{});
      std::copy_n(prob.ptr() + i * dst * dst, dst * dst, window.ptr());
      const auto small = resize_bilinear(window, src, src);
      for (std::size_t y = 0; y < src; ++y)
        for (std::size_t x = 0; x < src; ++x) {
          const std::size_t p = (y0 + y) * w + x0 + x;
          sum[p] += double(small[y * src + x]);
          ++count[p];
        }
    }
  }
  Tensor<float> map({h, w});
  for (std::size_t p = 0; p < h * w; ++p) {
    if (count[p]) map[p] = static_cast<float>(std::clamp(sum[p] / double(count[p]), 0.0, 1.0));
  }
  return map;
}

template <typename T>
Tensor<float> tile_predict(const Network<float>& net, const Tensor<T>& section, std::size_t src = 20,
                           std::size_t stride = 10, std::size_t batch_size = 32) {
  auto predictor = [&](const Tensor<float>& x) { return heterogeneity_probability(forward(net, x)); };
  return tile_predict(predictor, section, src, stride, kPatchSize, batch_size);
}

enum class MapFormat { pgm, csv };

inline MapFormat parse_map_format(std::string_view s) {
  if (s == "pgm") return MapFormat::pgm;
  if (s == "csv") return MapFormat::csv;
  throw ConfigError("unknown map format '" + std::string(s) + "' (expected pgm or csv)");
}

// PGM bytes are round(255 p); CSV rows hold %.9g values.
template <typename T>
void export_map(const Tensor<T>& map, const std::filesystem::path& path, MapFormat format) {
  require_rank(map, 2, "export_map");
  if (format == MapFormat::pgm) {
    write_pgm(path, probability_to_gray(map));
    return;
  }
  std::string text;
  char buf[32];
  for (std::size_t y = 0; y < map.dim(0); ++y) {
    for (std::size_t x = 0; x < map.dim(1); ++x) {
      std::snprintf(buf, sizeof buf, x ? ",%.9g" : "%.9g", double(map[y * map.dim(1) + x]));
      text += buf;
    }
    text += '\n';
  }
  write_text(path, text);
}

// Reads a map written by export_map (or any P5 PGM) as values in [0, 1].
inline Tensor<float> import_map(const std::filesystem::path& path) {
  if (path.extension() != ".csv") return gray_to_unit(read_pgm(path));
  std::istringstream text(read_text(path));
  std::vector<float> values;
  std::size_t rows = 0, cols = 0;
  std::string line, cell;
  while (std::getline(text, line)) {
    std::istringstream row(line);
    std::size_t n = 0;
    while (std::getline(row, cell, ',')) {
      char* stop = nullptr;
      const double v = std::strtod(cell.c_str(), &stop);
      if (cell.empty() || *stop != '\0') {
        throw FormatError("'" + path.string() + "': row " + std::to_string(rows + 1) + " has a bad value '" + cell +
                          "'");
      }
      values.push_back(float(v));
      ++n;
    }
    if (rows == 0) cols = n;
    if (n == 0 || n != cols) {
      throw FormatError("'" + path.string() + "': row " + std::to_string(rows + 1) + " has " + std::to_string(n) +
                        " values, expected " + std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0) throw FormatError("'" + path.string() + "' is empty");
  return Tensor<float>({rows, cols}, values);
}

}  // namespace seishet
