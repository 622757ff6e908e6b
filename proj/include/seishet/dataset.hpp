#pragma once

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seishet/imageio.hpp"
#include "seishet/synthgen.hpp"

namespace seishet {

using Json = nlohmann::ordered_json;

inline constexpr int kDatasetVersion = 1;

inline Json config_to_json(const SyntheticConfig& c) {
  auto r = [](Range v) { return Json::array({v.lo, v.hi}); };
  auto ri = [](IntRange v) { return Json::array({v.lo, v.hi}); };
  return Json{{"height", c.height},
              {"width", c.width},
              {"count", c.count},
              {"thickness", ri(c.thickness)},
              {"fold_amplitude", r(c.fold_amplitude)},
              {"fold_wavelength", r(c.fold_wavelength)},
              {"shear", r(c.shear)},
              {"faults", ri(c.faults)},
              {"dip", r(c.dip)},
              {"throw", ri(c.fault_throw)},
              {"peak_period", r(c.peak_period)},
              {"noise", r(c.noise)},
              {"dilation", c.dilation},
              {"seed", c.seed},
              {"patch", c.patch},
              {"stride", c.stride}};
}

inline std::string sample_file(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%06zu.%s", prefix, i, ext);
  return buf;
}

// manifest.json + img_%06d.f32 (little-endian float32, row-major) +
// msk_%06d.pgm (P5, 0 background, 255 heterogeneity).
inline void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir, Json meta = {}) {
  if (samples.empty()) throw SizeError("write_dataset: no samples to write");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory '" + dir.string() + "': " + ec.message());
  const std::size_t patch = samples.front().image.dim(0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.image.shape() != Shape{patch, patch} || s.mask.shape() != Shape{patch, patch}) {
      throw DimensionError("write_dataset: sample " + std::to_string(i) + " is not " + std::to_string(patch) +
                           "x" + std::to_string(patch));
    }
    write_f32(dir / sample_file("img", i, "f32"), s.image);
    write_pgm(dir / sample_file("msk", i, "pgm"), mask_to_gray(s.mask));
  }
  Json manifest{{"version", kDatasetVersion}, {"count", samples.size()}, {"patch", patch}};
  for (auto it = meta.begin(); it != meta.end(); ++it) manifest[it.key()] = it.value();
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

struct Dataset {
  std::vector<Sample> samples;
  Json manifest;
};

inline Json read_manifest(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' does not exist");
  const auto path = dir / "manifest.json";
  Json m;
  try {
    m = Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
  auto need_uint = [&](const char* key) {
    if (!m.contains(key) || !m[key].is_number_unsigned()) {
      throw FormatError("'" + path.string() + "': missing or invalid '" + key + "'");
    }
    return m[key].get<std::size_t>();
  };
  if (need_uint("version") != std::size_t(kDatasetVersion)) {
    throw FormatError("'" + path.string() + "': unsupported dataset version " + m["version"].dump());
  }
  if (need_uint("count") == 0) throw FormatError("'" + path.string() + "': dataset is empty");
  if (need_uint("patch") == 0) throw FormatError("'" + path.string() + "': patch size must be positive");
  return m;
}

// Reads the first `limit` samples (all when unset).
inline Dataset read_dataset(const std::filesystem::path& dir, std::optional<std::size_t> limit = std::nullopt) {
  Dataset ds;
  ds.manifest = read_manifest(dir);
  const std::size_t count = ds.manifest["count"].get<std::size_t>();
  const std::size_t patch = ds.manifest["patch"].get<std::size_t>();
  const std::size_t n = limit ? std::min(*limit, count) : count;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto mpath = dir / sample_file("msk", i, "pgm");
    auto image = read_f32(dir / sample_file("img", i, "f32"), {patch, patch});
    const auto gray = read_pgm(mpath);
    if (gray.height != patch || gray.width != patch) {
      throw FormatError("'" + mpath.string() + "' is " + std::to_string(gray.width) + "x" +
                        std::to_string(gray.height) + ", expected " + std::to_string(patch));
    }
    Tensor<float> mask({patch, patch});
    for (std::size_t p = 0; p < mask.size(); ++p) {
      const auto v = gray.pixels[p];
      if (v != 0 && v != 255) {
        throw FormatError("'" + mpath.string() + "': pixel " + std::to_string(p) + " is " + std::to_string(v) +
                          ", masks hold only 0 and 255");
      }
      mask[p] = v == 255 ? 1.0f : 0.0f;
    }
    ds.samples.push_back({std::move(image), std::move(mask)});
  }
  return ds;
}

}  // namespace seishet
