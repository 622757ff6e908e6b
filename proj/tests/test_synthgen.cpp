#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>

#include <unistd.h>

#include "seishet/dataset.hpp"
#include "seishet/synthgen.hpp"

using namespace seishet;
namespace fs = std::filesystem;

namespace {

Tensor<double> flat_reflector(std::size_t h, std::size_t w, std::size_t depth, double amp = 1.0) {
  Tensor<double> t({h, w});
  for (std::size_t x = 0; x < w; ++x) t[depth * w + x] = amp;
  return t;
}

std::size_t column_argmax(const Tensor<double>& t, std::size_t x) {
  std::size_t best = 0;
  for (std::size_t y = 1; y < t.dim(0); ++y)
    if (t[y * t.dim(1) + x] > t[best * t.dim(1) + x]) best = y;
  return best;
}

double sum(const Tensor<double>& t) {
  double s = 0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i];
  return s;
}

SyntheticConfig small_config(std::size_t count = 2) {
  SyntheticConfig c;
  c.height = 88;
  c.width = 88;
  c.count = count;
  c.seed = 77;
  return c;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("seishet_" + tag + "_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Reflectivity, EveryTraceIdentical) {
  Prng prng(3);
  const auto r = generate_reflectivity(128, 64, {5, 20}, prng);
  for (std::size_t y = 0; y < 128; ++y)
    for (std::size_t x = 1; x < 64; ++x) ASSERT_EQ(r[y * 64 + x], r[y * 64]);
}

TEST(Reflectivity, SpikeCountMatchesBoundaryCount) {
  Prng draw(11);
  const auto r = generate_reflectivity(128, 8, {5, 20}, draw);
  // Replay the same stream to recover the boundaries independently.
  Prng replay(11);
  std::vector<std::size_t> boundaries;
  std::size_t depth = 0;
  while (true) {
    depth += std::size_t(replay.uniform_int(5, 20));
    if (depth >= 128) break;
    replay.uniform();
    boundaries.push_back(depth);
  }
  std::size_t spikes = 0;
  for (std::size_t y = 0; y < 128; ++y) spikes += r[y * 8] != 0.0;
  EXPECT_EQ(spikes, boundaries.size());
  for (auto b : boundaries) EXPECT_NE(r[b * 8], 0.0);
  for (std::size_t y = 0; y < 128; ++y) {
    EXPECT_GE(r[y * 8], -1.0);
    EXPECT_LE(r[y * 8], 1.0);
  }
}

TEST(Reflectivity, ThicknessHistogramIsUniform) {
  std::map<std::size_t, std::size_t> hist;
  std::size_t total = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    Prng prng = Prng::derive(5, s);
    const auto r = generate_reflectivity(128, 1, {5, 20}, prng);
    std::size_t last = 0;
    for (std::size_t y = 1; y < 128; ++y) {
      if (r[y] == 0.0) continue;
      ++hist[y - last];
      ++total;
      last = y;
    }
  }
  ASSERT_GT(total, 5000u);
  for (std::size_t t = 0; t < 40; ++t) {
    if (t < 5 || t > 20) {
      EXPECT_EQ(hist[t], 0u) << t;
      continue;
    }
    const double p = double(hist[t]) / double(total);
    // Sixteen equally likely values; binomial sigma is about 0.0024 here.
    EXPECT_NEAR(p, 1.0 / 16.0, 0.012) << t;
  }
}

TEST(Fold, ZeroAmplitudeIsIdentity) {
  Prng prng(2);
  const auto r = generate_reflectivity(64, 64, {5, 20}, prng);
  const auto f = apply_fold(r, FoldParams{0.0, 40.0, 1.3});
  for (std::size_t i = 0; i < r.size(); ++i) ASSERT_EQ(f[i], r[i]);
}

TEST(Fold, DepthInvariantInputUnchanged) {
  Tensor<double> t({64, 48});
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 48; ++x) t[y * 48 + x] = double(x) * 0.25 - 3.0;
  // The column is constant, so only the zero-filled ends can change.
  const auto f = apply_fold(t, FoldParams{6.0, 37.0, 0.4});
  for (std::size_t y = 8; y < 56; ++y)
    for (std::size_t x = 0; x < 48; ++x) ASSERT_DOUBLE_EQ(f[y * 48 + x], t[y * 48 + x]);
}

TEST(Fold, FlatReflectorFollowsSinusoid) {
  const FoldParams p{7.5, 50.0, 0.9};
  const auto f = apply_fold(flat_reflector(96, 100, 40), p);
  for (std::size_t x = 0; x < 100; ++x) {
    const double expected = 40.0 + p.amplitude * std::sin(2.0 * std::numbers::pi * double(x) / p.wavelength + p.phase);
    EXPECT_LE(std::abs(double(column_argmax(f, x)) - expected), 1.0) << x;
  }
}

TEST(Fold, SampledParametersStayInRange) {
  SyntheticConfig c;
  Prng prng(8);
  for (int i = 0; i < 200; ++i) {
    const auto p = sample_fold(c, prng);
    EXPECT_GE(p.amplitude, 0.0);
    EXPECT_LE(p.amplitude, 10.0);
    EXPECT_GE(p.wavelength, 32.0);
    EXPECT_LE(p.wavelength, 128.0);
  }
}

TEST(Shear, ZeroSlopeIsIdentity) {
  const auto r = flat_reflector(32, 32, 10);
  const auto s = apply_shear(r, 0.0);
  for (std::size_t i = 0; i < r.size(); ++i) ASSERT_EQ(s[i], r[i]);
}

TEST(Shear, FlatReflectorBecomesLineOfSlope) {
  for (double slope : {0.15, -0.2, 0.5}) {
    const auto s = apply_shear(flat_reflector(80, 60, 40), slope);
    for (std::size_t x = 0; x < 60; ++x) {
      const double expected = 40.0 + slope * double(x);
      EXPECT_LE(std::abs(double(column_argmax(s, x)) - expected), 0.5) << slope << " " << x;
    }
  }
}

TEST(Shear, IntegerSlopeMovesExactly) {
  const auto s = apply_shear(flat_reflector(40, 5, 10), 2.0);
  for (std::size_t x = 0; x < 5; ++x) {
    EXPECT_EQ(s[(10 + 2 * x) * 5 + x], 1.0);
    EXPECT_EQ(sum(crop(s, 0, x, 40, 1)), 1.0);
  }
}

TEST(Shear, FoldThenShearPinnedOnSeededCase) {
  Prng prng(2024);
  auto model = generate_reflectivity(64, 32, {5, 20}, prng);
  model = apply_fold(model, SyntheticConfig{}, prng);
  model = apply_shear(model, SyntheticConfig{}, prng);
  // Regression values from the reference run.
  const std::vector<std::pair<std::size_t, double>> golden = {
      {7, -0.20242076600252351}, {14, -0.6648830858077065}, {21, -0.67309806993241594},
      {42, -0.29553971964571996}, {49, -0.12100355995801383}};
  for (auto [i, v] : golden) EXPECT_NEAR(model[i], v, 1e-12) << i;
  EXPECT_NEAR(sum(model), -43.40948018410176, 1e-9);
}

TEST(Faults, NoFaultsLeaveSectionUnchanged) {
  Prng prng(4);
  const auto r = generate_reflectivity(64, 64, {5, 20}, prng);
  const auto out = apply_faults(r, std::vector<FaultParams>{}, 1);
  for (std::size_t i = 0; i < r.size(); ++i) {
    ASSERT_EQ(out.section[i], r[i]);
    ASSERT_EQ(out.mask[i], 0.0);
  }
}

TEST(Faults, ZeroFaultConfigGivesEmptyMask) {
  SyntheticConfig c;
  c.faults = {0, 0};
  Prng prng(9);
  const auto r = generate_reflectivity(64, 64, {5, 20}, prng);
  const auto out = apply_faults(r, c, prng);
  EXPECT_EQ(sum(out.mask), 0.0);
  for (std::size_t i = 0; i < r.size(); ++i) ASSERT_EQ(out.section[i], r[i]);
}

TEST(Faults, VerticalFaultOffsetsReflectorByThrow) {
  for (std::int64_t t : {3, 7, 15}) {
    FaultParams f{30.0, 32.0, 90.0, 1, t};
    const auto out = apply_faults(flat_reflector(64, 60, 20), {f}, 1);
    for (std::size_t x = 0; x < 60; ++x) {
      const std::size_t expected = x < 30 ? 20 : 20 + std::size_t(t);
      EXPECT_EQ(column_argmax(out.section, x), expected) << x;
      EXPECT_EQ(out.section[expected * 60 + x], 1.0);
    }
  }
}

TEST(Faults, VerticalMaskCountIsHeightTimesWidth) {
  for (std::size_t radius : {0u, 1u, 2u}) {
    FaultParams f{30.0, 32.0, 90.0, 1, 5};
    const auto out = apply_faults(flat_reflector(64, 60, 20), {f}, radius);
    EXPECT_EQ(sum(out.mask), double(64 * (2 * radius + 1))) << radius;
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 60; ++x) {
        const bool on = std::abs(double(x) - 30.0) <= double(radius);
        ASSERT_EQ(out.mask[y * 60 + x], on ? 1.0 : 0.0);
      }
  }
}

TEST(Faults, DippingMaskCountMatchesLineLength) {
  // Row y holds the dilated pixels of rows y - r .. y + r. Those span
  // 2 r run columns of trace drift, plus the per-row coverage max(run, 1),
  // plus 2 r from the square itself.
  for (double dip : {55.0, 70.0, 85.0}) {
    FaultParams f{64.0, 64.0, dip, -1, 6};
    const std::size_t h = 128, w = 128, r = 1;
    const auto mask = rasterize_fault(f, h, w, r);
    const double run = 1.0 / std::tan(dip * std::numbers::pi / 180.0);
    const double expected = double(h) * (std::max(run, 1.0) + 2.0 * double(r) * (1.0 + run));
    EXPECT_NEAR(sum(mask), expected, 0.03 * expected + 2.0 * double(r + 1)) << dip;
    // Connected: every row has at least one marked pixel.
    for (std::size_t y = 0; y < h; ++y) EXPECT_GT(sum(crop(mask, y, 0, 1, w)), 0.0);
  }
}

TEST(Faults, LaterFaultDisplacesEarlierMask) {
  const FaultParams first{20.0, 32.0, 90.0, 1, 0};
  const FaultParams second{20.0, 32.0, 45.0, 1, 4};
  const auto out = apply_faults(Tensor<double>({64, 64}), {first, second}, 0);
  const auto alone = rasterize_fault(first, 64, 64, 0);
  // Below the crossing the first trace sits on the moving side and drops by 4.
  for (std::size_t y = 40; y < 64; ++y) EXPECT_EQ(out.mask[y * 64 + 20], 1.0);
  EXPECT_EQ(out.mask[32 * 64 + 20], 1.0);
  std::size_t moved = 0;
  for (std::size_t y = 0; y < 64; ++y) moved += out.mask[y * 64 + 20] != alone[y * 64 + 20];
  EXPECT_GT(moved, 0u);
}

TEST(Faults, SampledFaultsRespectRanges) {
  SyntheticConfig c;
  Prng prng(10);
  for (int i = 0; i < 100; ++i) {
    const auto fs_ = sample_faults(c, 128, 128, prng);
    EXPECT_GE(fs_.size(), 1u);
    EXPECT_LE(fs_.size(), 3u);
    for (const auto& f : fs_) {
      EXPECT_GE(f.dip, 50.0);
      EXPECT_LE(f.dip, 85.0);
      EXPECT_GE(f.offset, 3);
      EXPECT_LE(f.offset, 15);
    }
  }
}

TEST(Ricker, CenterIsExactlyOne) {
  for (double p : {12.0, 17.3, 25.0}) {
    const auto r = ricker(p, 31);
    EXPECT_EQ(r[15], 1.0);
  }
}

TEST(Ricker, SymmetricBitExact) {
  const auto r = ricker(14.2, 45);
  for (std::size_t i = 0; i < 22; ++i) EXPECT_EQ(r[i], r[44 - i]);
}

TEST(Ricker, ZeroCrossingsMatchAnalyticRoot) {
  for (double p : {12.0, 18.5, 25.0}) {
    const std::size_t n = ricker_length(p);
    const auto r = ricker(p, n);
    const double root = p / (std::numbers::pi * std::sqrt(2.0));
    const std::size_t c = n / 2;
    std::size_t k = 0;
    while (r[c + k + 1] > 0.0) ++k;
    // Sign change between c+k and c+k+1.
    EXPECT_LE(std::abs(double(k) + 0.5 - root), 1.0) << p;
    EXPECT_GT(r[c - k], 0.0);
    EXPECT_LE(r[c - k - 1], 0.0);
  }
}

TEST(Ricker, EvenLengthIsDimensionError) {
  EXPECT_THROW(ricker(12.0, 30), DimensionError);
}

TEST(Ricker, LengthCoversTails) {
  for (double p : {12.0, 25.0}) {
    const auto r = ricker(p, ricker_length(p));
    EXPECT_LT(std::abs(r[0]), 1e-3);
  }
}

TEST(Convolve, DeltaGivesCenteredWavelet) {
  const auto w = ricker(12.0, 37);
  Tensor<double> col({100, 1});
  col[50] = 1.0;
  const auto out = convolve_traces(col, w);
  for (std::size_t y = 0; y < 100; ++y) {
    const std::int64_t k = std::int64_t(y) - 50 + 18;
    const double expected = (k >= 0 && k < 37) ? w[std::size_t(k)] : 0.0;
    EXPECT_EQ(out[y], expected) << y;
  }
}

TEST(Convolve, Linear) {
  Prng prng(12);
  Tensor<double> a({64, 8}), b({64, 8}), ab({64, 8});
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = prng.uniform(-1, 1);
    b[i] = prng.uniform(-1, 1);
    ab[i] = a[i] + b[i];
  }
  const auto w = ricker(15.0, ricker_length(15.0));
  const auto ca = convolve_traces(a, w), cb = convolve_traces(b, w), cab = convolve_traces(ab, w);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(cab[i], ca[i] + cb[i], 1e-6);
}

TEST(Convolve, MatchesDirectLoop) {
  Prng prng(13);
  Tensor<double> s({50, 7});
  for (auto& v : s.data()) v = prng.uniform(-1, 1);
  const auto w = ricker(13.0, 41);
  const auto out = convolve_traces(s, w);
  for (std::size_t x = 0; x < 7; ++x)
    for (std::size_t y = 0; y < 50; ++y) {
      double acc = 0;
      for (std::size_t k = 0; k < 41; ++k) {
        const std::int64_t src = std::int64_t(y) + 20 - std::int64_t(k);
        if (src >= 0 && src < 50) acc += w[k] * s[std::size_t(src) * 7 + x];
      }
      EXPECT_EQ(out[y * 7 + x], acc);
    }
}

TEST(Noise, ZeroFractionIsIdentity) {
  Prng prng(1);
  const auto r = generate_reflectivity(64, 64, {5, 20}, prng);
  const auto n = add_noise(r, 0.0, prng);
  for (std::size_t i = 0; i < r.size(); ++i) ASSERT_EQ(n[i], r[i]);
}

TEST(Noise, MeanWithinStatisticalBound) {
  Tensor<double> s({128, 128});
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = (i % 3 == 0) ? 1.0 : -0.5;
  const double fraction = 0.1;
  const double sigma = fraction * rms(s);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Prng prng(seed);
    const auto n = add_noise(s, fraction, prng);
    double mean = 0;
    for (std::size_t i = 0; i < s.size(); ++i) mean += n[i] - s[i];
    mean /= double(s.size());
    EXPECT_LT(std::abs(mean), 3.0 * sigma / std::sqrt(double(s.size()))) << seed;
  }
}

TEST(Noise, DerivedSeedsGiveDifferentFields) {
  Tensor<double> s({32, 32});
  s.fill(1.0);
  Prng a = Prng::derive(1, 0), b = Prng::derive(1, 1);
  const auto na = add_noise(s, 0.05, a), nb = add_noise(s, 0.05, b);
  std::size_t same = 0;
  for (std::size_t i = 0; i < s.size(); ++i) same += na[i] == nb[i];
  EXPECT_EQ(same, 0u);
}

TEST(Patches, SinglePatchFromMinimalSection) {
  Prng prng(6);
  const auto r = generate_reflectivity(44, 44, {5, 20}, prng);
  EXPECT_EQ(extract_patches(r, Tensor<double>({44, 44})).size(), 1u);
}

TEST(Patches, NinePatchesFrom88) {
  Prng prng(6);
  auto r = generate_reflectivity(88, 88, {5, 20}, prng);
  Tensor<double> mask({88, 88});
  mask[45 * 88 + 50] = 1.0;
  const auto p = extract_patches(r, mask);
  ASSERT_EQ(p.size(), 9u);
  // Window (22, 44) holds pixel (45, 50) at (23, 6), unchanged.
  EXPECT_EQ(p[1 * 3 + 2].mask[23 * 44 + 6], 1.0f);
  EXPECT_EQ(p[1 * 3 + 1].mask[23 * 44 + 28], 1.0f);
  for (float v : p[0].mask.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Patches, NormalizedToUnitRange) {
  Prng prng(7);
  Tensor<double> s({88, 88});
  for (auto& v : s.data()) v = prng.uniform(-3, 5);
  for (const auto& p : extract_patches(s, Tensor<double>({88, 88}))) {
    float mx = 0, lo = 1, hi = -1;
    for (float v : p.image.data()) {
      mx = std::max(mx, std::abs(v));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    EXPECT_EQ(mx, 1.0f);
    EXPECT_EQ(lo, -1.0f);
    EXPECT_EQ(hi, 1.0f);
  }
}

TEST(Patches, ConstantPatchMapsToZeros) {
  Tensor<double> s({44, 44});
  s.fill(3.5);
  const auto p = extract_patches(s, Tensor<double>({44, 44}));
  for (float v : p[0].image.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Patches, SmallSectionIsDimensionError) {
  EXPECT_THROW(extract_patches(Tensor<double>({43, 60}), Tensor<double>({43, 60})), DimensionError);
  EXPECT_THROW(extract_patches(Tensor<double>({60, 60}), Tensor<double>({60, 59})), DimensionError);
}

TEST(Config, InvalidRangesRejected) {
  SyntheticConfig c;
  c.shear = {0.3, 0.1};
  EXPECT_THROW(c.validate(), ConfigError);
  c = SyntheticConfig{};
  c.height = 40;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SyntheticConfig{};
  c.dip = {50, 95};
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(SyntheticConfig{}.validate());
}

TEST(Pipeline, SameSeedBitIdentical) {
  const auto a = generate_dataset(small_config());
  const auto b = generate_dataset(small_config());
  ASSERT_EQ(a.size(), 18u);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].image.size(); ++j) {
      ASSERT_EQ(std::bit_cast<std::uint32_t>(a[i].image[j]), std::bit_cast<std::uint32_t>(b[i].image[j]));
      ASSERT_EQ(a[i].mask[j], b[i].mask[j]);
    }
  }
}

TEST(Pipeline, SectionReproducibleInIsolation) {
  auto c = small_config(3);
  const auto all = generate_dataset(c);
  const auto third = generate_section(c, 2);
  const auto patches = extract_patches(third.image, third.mask, c.patch, c.stride);
  for (std::size_t i = 0; i < patches.size(); ++i)
    for (std::size_t j = 0; j < patches[i].image.size(); ++j) ASSERT_EQ(all[18 + i].image[j], patches[i].image[j]);
}

TEST(Pipeline, DifferentSeedsDiffer) {
  auto c = small_config(1);
  const auto a = generate_section(c, 0);
  c.seed = 78;
  const auto b = generate_section(c, 0);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.image.size(); ++i) diff += a.image[i] != b.image[i];
  EXPECT_GT(diff, a.image.size() / 2);
}

TEST(Pipeline, MasksBinaryAndImagesBounded) {
  SyntheticConfig c;
  c.count = 6;
  c.seed = 3;
  std::size_t positives = 0;
  for (const auto& s : generate_dataset(c)) {
    for (float v : s.mask.data()) {
      ASSERT_TRUE(v == 0.0f || v == 1.0f);
      positives += v == 1.0f;
    }
    for (float v : s.image.data()) {
      ASSERT_GE(v, -1.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
  EXPECT_GT(positives, 0u);
}

TEST(Pipeline, NoEmptyRockInsideSection) {
  // The padded model keeps every trace populated after deformation.
  SyntheticConfig c;
  c.count = 1;
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto s = generate_section(c, i);
    for (std::size_t x = 0; x < c.width; ++x) {
      double energy = 0;
      for (std::size_t y = 0; y < c.height; ++y) energy += std::abs(s.clean[y * c.width + x]);
      EXPECT_GT(energy, 0.0) << i << " " << x;
    }
  }
}

TEST(Pipeline, CrossCorrelationRecoversThrow) {
  SyntheticConfig c;
  c.count = 1;
  c.faults = {1, 1};
  c.dip = {90, 90};
  c.fold_amplitude = {0, 0};
  c.shear = {0, 0};
  c.noise = {0, 0};
  c.thickness = {3, 9};
  for (std::uint64_t i = 0; i < 8; ++i) {
    const auto s = generate_section(c, i);
    ASSERT_EQ(s.faults.size(), 1u);
    const std::int64_t throw_ = s.faults[0].offset;
    const auto cx = static_cast<std::size_t>(std::ceil(s.faults[0].center_x));
    const std::size_t left = cx - 4, right = cx + 4;
    std::int64_t best_lag = 0;
    double best = -1e300;
    for (std::int64_t lag = -20; lag <= 20; ++lag) {
      double acc = 0;
      for (std::int64_t y = 20; y < std::int64_t(c.height) - 20; ++y) {
        acc += s.clean[std::size_t(y) * c.width + left] * s.clean[std::size_t(y + lag) * c.width + right];
      }
      if (acc > best) {
        best = acc;
        best_lag = lag;
      }
    }
    EXPECT_LE(std::abs(best_lag - throw_), 1) << "section " << i << " throw " << throw_;
  }
}

TEST(Dataset, RoundTripIsBitExact) {
  TempDir dir("dataset");
  const auto samples = generate_dataset(small_config(1));
  write_dataset(samples, dir.path, Json{{"seed", 77}, {"config", config_to_json(small_config(1))}});
  const auto ds = read_dataset(dir.path);
  ASSERT_EQ(ds.samples.size(), samples.size());
  EXPECT_EQ(ds.manifest["count"].get<std::size_t>(), samples.size());
  EXPECT_EQ(ds.manifest["seed"].get<int>(), 77);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir.path)) files += e.path().extension() == ".f32";
  EXPECT_EQ(files, samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = 0; j < samples[i].image.size(); ++j) {
      ASSERT_EQ(std::bit_cast<std::uint32_t>(ds.samples[i].image[j]),
                std::bit_cast<std::uint32_t>(samples[i].image[j]));
      ASSERT_EQ(ds.samples[i].mask[j], samples[i].mask[j]);
    }
}

TEST(Dataset, LimitReadsPrefix) {
  TempDir dir("dataset_limit");
  const auto samples = generate_dataset(small_config(1));
  write_dataset(samples, dir.path);
  EXPECT_EQ(read_dataset(dir.path, 4).samples.size(), 4u);
  EXPECT_EQ(read_dataset(dir.path, 1000).samples.size(), samples.size());
}

TEST(Dataset, TruncatedImageNamesFile) {
  TempDir dir("dataset_corrupt");
  write_dataset(generate_dataset(small_config(1)), dir.path);
  const auto victim = dir.path / "img_000003.f32";
  fs::resize_file(victim, 44 * 44 * 4 - 6);
  try {
    read_dataset(dir.path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("img_000003.f32"), std::string::npos) << e.what();
  }
}

TEST(Dataset, MalformedManifestIsFormatError) {
  TempDir dir("dataset_manifest");
  write_dataset(generate_dataset(small_config(1)), dir.path);
  write_text(dir.path / "manifest.json", "{\"version\": 1, \"count\": ");
  EXPECT_THROW(read_dataset(dir.path), FormatError);
  write_text(dir.path / "manifest.json", "{\"version\": 1, \"patch\": 44}");
  EXPECT_THROW(read_dataset(dir.path), FormatError);
}

TEST(Dataset, NonBinaryMaskIsFormatError) {
  TempDir dir("dataset_mask");
  write_dataset(generate_dataset(small_config(1)), dir.path);
  auto img = read_pgm(dir.path / "msk_000000.pgm");
  img.pixels[10] = 7;
  write_pgm(dir.path / "msk_000000.pgm", img);
  EXPECT_THROW(read_dataset(dir.path), FormatError);
}

TEST(Dataset, MissingDirectoryIsIoError) {
  EXPECT_THROW(read_dataset("/nonexistent/seishet/dataset"), IoError);
}
