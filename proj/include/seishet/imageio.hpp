#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "seishet/errors.hpp"
#include "seishet/tensor.hpp"

namespace seishet {

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline std::string read_text(const std::filesystem::path& path) {
  const auto b = read_bytes(path);
  return std::string(b.begin(), b.end());
}

// Raw little-endian float32, row-major.
inline void write_f32(const std::filesystem::path& path, const Tensor<float>& t) {
  std::vector<std::uint8_t> bytes(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(t[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<std::uint8_t>(u >> (8 * b));
  }
  write_bytes(path, bytes);
}

inline Tensor<float> read_f32(const std::filesystem::path& path, const Shape& shape) {
  const auto bytes = read_bytes(path);
  const std::size_t n = shape_numel(shape);
  if (bytes.size() != n * 4) {
    throw FormatError("'" + path.string() + "' holds " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(n * 4) + " for shape " + shape_str(shape));
  }
  Tensor<float> t(shape);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= std::uint32_t(bytes[i * 4 + b]) << (8 * b);
    t[i] = std::bit_cast<float>(u);
  }
  return t;
}

struct GrayImage {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> pixels;
};

// Binary PGM ("P5", maxval 255).
inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), img.pixels.begin(), img.pixels.end());
  write_bytes(path, bytes);
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  std::size_t pos = 0;
  const std::string name = "'" + path.string() + "'";
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + std::size_t(bytes[pos++] - '0');
      if (++digits > 9) throw FormatError(name + ": PGM " + what + " too large");
    }
    if (digits == 0) throw FormatError(name + ": PGM header missing " + what);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError(name + ": not a binary PGM (P5)");
  pos = 2;
  GrayImage img;
  img.width = number("width");
  img.height = number("height");
  const auto maxval = number("maxval");
  if (maxval != 255) throw FormatError(name + ": PGM maxval must be 255, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError(name + ": malformed PGM header");
  ++pos;
  if (img.width == 0 || img.height == 0) throw FormatError(name + ": PGM has zero size");
  if (bytes.size() - pos != img.width * img.height) {
    throw FormatError(name + ": PGM payload is " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                      std::to_string(img.width * img.height));
  }
  img.pixels.assign(bytes.begin() + std::ptrdiff_t(pos), bytes.end());
  return img;
}

// Byte = round(255 p) for p in [0, 1].
template <typename T>
GrayImage probability_to_gray(const Tensor<T>& map) {
  require_rank(map, 2, "probability_to_gray");
  GrayImage img{map.dim(0), map.dim(1), std::vector<std::uint8_t>(map.size())};
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double p = std::clamp(double(map[i]), 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * p));
  }
  return img;
}

// 0 -> 0, 1 -> 255. Anything else is a label error.
template <typename T>
GrayImage mask_to_gray(const Tensor<T>& mask) {
  require_rank(mask, 2, "mask_to_gray");
  GrayImage img{mask.dim(0), mask.dim(1), std::vector<std::uint8_t>(mask.size())};
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != T(0) && mask[i] != T(1)) {
      throw LabelError("mask value " + std::to_string(double(mask[i])) + " at pixel " + std::to_string(i) +
                       " is not 0 or 1");
    }
    img.pixels[i] = mask[i] == T(1) ? 255 : 0;
  }
  return img;
}

// Pixel >= 128 is heterogeneity. For maps written by probability_to_gray this
// is exactly p >= 0.5.
inline Tensor<float> gray_to_mask(const GrayImage& img) {
  Tensor<float> m({img.height, img.width});
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = img.pixels[i] >= 128 ? 1.0f : 0.0f;
  return m;
}

inline Tensor<float> gray_to_unit(const GrayImage& img) {
  Tensor<float> m({img.height, img.width});
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = float(img.pixels[i]) / 255.0f;
  return m;
}

}  // namespace seishet
