#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "seishet/errors.hpp"
#include "seishet/tensor.hpp"

namespace seishet {

// IBM System/360 single precision: sign, excess-64 base-16 exponent, 24-bit
// fraction. Every pattern decodes exactly into a double.
inline double ibm_to_ieee(std::uint32_t word) {
  const std::uint32_t fraction = word & 0x00FFFFFFu;
  if (fraction == 0) return (word & 0x80000000u) ? -0.0 : 0.0;
  const int exponent = int((word >> 24) & 0x7Fu) - 64;
  const double magnitude = std::ldexp(double(fraction), 4 * exponent - 24);
  return (word & 0x80000000u) ? -magnitude : magnitude;
}

inline constexpr std::size_t kTextualHeaderBytes = 3200;
inline constexpr std::size_t kBinaryHeaderBytes = 400;
inline constexpr std::size_t kFileHeaderBytes = kTextualHeaderBytes + kBinaryHeaderBytes;
inline constexpr std::size_t kTraceHeaderBytes = 240;

enum class LineAxis { inline_, crossline };

inline std::string_view axis_name(LineAxis a) { return a == LineAxis::inline_ ? "inline" : "crossline"; }

inline LineAxis parse_axis(std::string_view s) {
  if (s == "inline") return LineAxis::inline_;
  if (s == "crossline") return LineAxis::crossline;
  throw ConfigError("unknown line axis '" + std::string(s) + "' (expected inline or crossline)");
}

// Annotation for a line, aligned to its section grid.
inline std::string mask_file_name(LineAxis axis, std::int64_t id) {
  return "mask_" + std::string(axis_name(axis)) + std::to_string(id) + ".pgm";
}

// 1-based byte positions inside the 240-byte trace header.
struct SegyOptions {
  std::size_t inline_byte = 189;
  std::size_t crossline_byte = 193;
};

struct TraceEntry {
  std::int32_t inline_no = 0, crossline_no = 0;
  std::uint64_t offset = 0;  // of the trace header
  std::size_t ordinal = 0;   // 1-based position in the file
};

struct SegyVolume {
  std::filesystem::path path;
  std::string textual_header;
  std::uint16_t sample_interval_us = 0;
  std::size_t samples_per_trace = 0;
  std::uint16_t format = 0;
  std::vector<TraceEntry> traces;
};

namespace detail {

inline std::uint16_t be16(const std::uint8_t* p) { return std::uint16_t((p[0] << 8) | p[1]); }

inline std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void read_exact(std::ifstream& in, std::uint64_t offset, std::uint8_t* dst, std::size_t n,
                       const std::string& what) {
  in.seekg(std::streamoff(offset));
  in.read(reinterpret_cast<char*>(dst), std::streamsize(n));
  if (in.gcount() != std::streamsize(n)) throw FormatError(what);
}

inline std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace detail

// Parses the file headers and indexes every trace by (inline, crossline),
// reading only trace headers.
inline SegyVolume open_volume(const std::filesystem::path& path, const SegyOptions& opt = {}) {
  const std::string name = "'" + path.string() + "'";
  for (auto [byte, label] : {std::pair{opt.inline_byte, "inline"}, std::pair{opt.crossline_byte, "crossline"}}) {
    if (byte < 1 || byte + 3 > kTraceHeaderBytes) {
      throw ConfigError(std::string(label) + " header byte " + std::to_string(byte) + " is outside 1.." +
                        std::to_string(kTraceHeaderBytes - 3));
    }
  }
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot open " + name + ": " + ec.message());
  if (size < kFileHeaderBytes) {
    throw FormatError(name + " is " + std::to_string(size) + " bytes, shorter than the " +
                      std::to_string(kFileHeaderBytes) + "-byte SEG-Y file header");
  }
  auto in = detail::open_binary(path);
  std::vector<std::uint8_t> head(kFileHeaderBytes);
  detail::read_exact(in, 0, head.data(), head.size(), name + ": short read in file header");

  SegyVolume v;
  v.path = path;
  v.textual_header.assign(head.begin(), head.begin() + kTextualHeaderBytes);
  const std::uint8_t* bin = head.data() + kTextualHeaderBytes;
  v.sample_interval_us = detail::be16(bin + 16);
  v.samples_per_trace = detail::be16(bin + 20);
  v.format = detail::be16(bin + 24);
  const std::size_t extended = detail::be16(bin + 104);
  if (v.format != 1 && v.format != 5) {
    throw FormatError(name + ": unsupported data format code " + std::to_string(v.format) +
                      " (only 1 = IBM float and 5 = IEEE float are supported)");
  }
  if (v.samples_per_trace == 0) throw FormatError(name + ": binary header declares 0 samples per trace");

  const std::uint64_t start = kFileHeaderBytes + std::uint64_t(extended) * kTextualHeaderBytes;
  const std::uint64_t trace_bytes = kTraceHeaderBytes + 4 * std::uint64_t(v.samples_per_trace);
  if (size < start) throw FormatError(name + ": file ends inside the extended textual headers");
  const std::uint64_t full = (size - start) / trace_bytes;
  if ((size - start) % trace_bytes != 0) {
    throw FormatError(name + ": trace " + std::to_string(full + 1) + " is truncated (" +
                      std::to_string((size - start) % trace_bytes) + " of " + std::to_string(trace_bytes) +
                      " bytes present)");
  }
  if (full == 0) throw FormatError(name + ": no traces");
  v.traces.reserve(full);
  std::uint8_t th[kTraceHeaderBytes];
  for (std::uint64_t i = 0; i < full; ++i) {
    const std::uint64_t off = start + i * trace_bytes;
    detail::read_exact(in, off, th, kTraceHeaderBytes, name + ": short read in trace " + std::to_string(i + 1));
    v.traces.push_back({std::bit_cast<std::int32_t>(detail::be32(th + opt.inline_byte - 1)),
                        std::bit_cast<std::int32_t>(detail::be32(th + opt.crossline_byte - 1)), off,
                        std::size_t(i + 1)});
  }
  return v;
}

struct SeismicSection {
  Tensor<double> amplitudes;  // samples x traces
  LineAxis axis = LineAxis::inline_;
  std::int64_t line = 0;
  std::vector<double> twt_ms;                // per sample
  std::vector<std::int32_t> trace_numbers;  // orthogonal key per column
};

// Every trace of one inline or crossline, ordered by the other key.
inline SeismicSection read_section(const SegyVolume& v, LineAxis axis, std::int64_t line) {
  const bool by_inline = axis == LineAxis::inline_;
  std::vector<const TraceEntry*> sel;
  std::int32_t lo = INT32_MAX, hi = INT32_MIN;
  for (const auto& t : v.traces) {
    const std::int32_t key = by_inline ? t.inline_no : t.crossline_no;
    lo = std::min(lo, key);
    hi = std::max(hi, key);
    if (key == line) sel.push_back(&t);
  }
  if (sel.empty()) {
    throw NotFoundError(std::string(axis_name(axis)) + " " + std::to_string(line) + " not found in '" +
                        v.path.string() + "'; available " + std::string(axis_name(axis)) + "s " +
                        std::to_string(lo) + ".." + std::to_string(hi));
  }
  std::stable_sort(sel.begin(), sel.end(), [&](const TraceEntry* a, const TraceEntry* b) {
    return by_inline ? a->crossline_no < b->crossline_no : a->inline_no < b->inline_no;
  });

  const std::size_t ns = v.samples_per_trace, nt = sel.size();
  SeismicSection s;
  s.axis = axis;
  s.line = line;
  s.amplitudes = Tensor<double>({ns, nt});
  s.twt_ms.resize(ns);
  for (std::size_t i = 0; i < ns; ++i) s.twt_ms[i] = double(i) * double(v.sample_interval_us) / 1000.0;
  auto in = detail::open_binary(v.path);
  std::vector<std::uint8_t> buf(4 * ns);
  for (std::size_t c = 0; c < nt; ++c) {
    const TraceEntry& t = *sel[c];
    s.trace_numbers.push_back(by_inline ? t.crossline_no : t.inline_no);
    detail::read_exact(in, t.offset + kTraceHeaderBytes, buf.data(), buf.size(),
                       "'" + v.path.string() + "': short read in trace " + std::to_string(t.ordinal));
    for (std::size_t i = 0; i < ns; ++i) {
      const std::uint32_t w = detail::be32(buf.data() + 4 * i);
      const double a = v.format == 1 ? ibm_to_ieee(w) : double(std::bit_cast<float>(w));
      if (!std::isfinite(a)) {
        throw FormatError("'" + v.path.string() + "': trace " + std::to_string(t.ordinal) + " sample " +
                          std::to_string(i) + " is not finite");
      }
      s.amplitudes[i * nt + c] = a;
    }
  }
  return s;
}

}  // namespace seishet
