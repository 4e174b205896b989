// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "getnet/events.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>

#include "getnet/error.hpp"

namespace getnet {

void EventStream::reserve(std::size_t n) {
  t.reserve(n);
  p.reserve(n);
  x.reserve(n);
  y.reserve(n);
}

void EventStream::push_back(std::int64_t ts, std::uint8_t pol,
                            std::uint16_t col, std::uint16_t row) {
  t.push_back(ts);
  p.push_back(pol);
  x.push_back(col);
  y.push_back(row);
}

EventFormat parse_event_format(std::string_view name) {
  if (name == "csv") return EventFormat::Csv;
  if (name == "binary" || name == "bin") return EventFormat::Binary;
  throw Error(ErrorCode::ConfigError,
              "unknown event format '" + std::string(name) + "'");
}

void validate_stream(const EventStream& s) {
  const std::size_t n = s.t.size();
  if (s.p.size() != n || s.x.size() != n || s.y.size() != n) {
    throw Error(ErrorCode::MalformedRecord, "column lengths differ");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && s.t[i] < s.t[i - 1]) {
      throw Error(ErrorCode::NonMonotonicTime,
                  "timestamp decreases at index " + std::to_string(i), i);
    }
    if (s.p[i] > 1) {
      throw Error(ErrorCode::OutOfRange,
                  "polarity not in {0,1} at index " + std::to_string(i), i);
    }
    if (s.x[i] >= s.width || s.y[i] >= s.height) {
      throw Error(ErrorCode::OutOfRange,
                  "coordinate outside sensor at index " + std::to_string(i), i);
    }
  }
}

namespace {

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

bool parse_int(std::string_view field, std::int64_t& out) {
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size();
}

// Integer microseconds; fractional timestamps are floored.
bool parse_timestamp(std::string_view field, std::int64_t& out) {
  if (parse_int(field, out)) return true;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
    return false;
  }
  out = static_cast<std::int64_t>(std::floor(v));
  return true;
}

EventStream parse_csv(const std::string& text, std::uint32_t width,
                      std::uint32_t height) {
  if (width == 0 || height == 0) {
    throw Error(ErrorCode::ConfigError, "CSV input needs sensor width/height");
  }
  if (width > 65536 || height > 65536) {
    throw Error(ErrorCode::ConfigError, "sensor larger than 65536 pixels");
  }
  EventStream s;
  s.width = width;
  s.height = height;
  std::size_t record = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line = trim(std::string_view(text).substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty()) continue;

    std::string_view fields[4];
    std::size_t nf = 0;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      if (nf == 4) { nf = 5; break; }
      fields[nf++] = trim(line.substr(start, comma == std::string_view::npos
                                                 ? std::string_view::npos
                                                 : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (nf != 4) {
      throw Error(ErrorCode::MalformedRecord,
                  "expected 4 fields in record " + std::to_string(record), record);
    }
    std::int64_t ts = 0, pol = 0, col = 0, row = 0;
    if (!parse_timestamp(fields[0], ts) || !parse_int(fields[1], pol) ||
        !parse_int(fields[2], col) || !parse_int(fields[3], row)) {
      throw Error(ErrorCode::MalformedRecord,
                  "unparsable field in record " + std::to_string(record), record);
    }
    if (pol == -1) pol = 0;
    if (pol != 0 && pol != 1) {
      throw Error(ErrorCode::OutOfRange,
                  "polarity not in {0,1} at index " + std::to_string(record), record);
    }
    if (col < 0 || row < 0 || col >= width || row >= height) {
      throw Error(ErrorCode::OutOfRange,
                  "coordinate outside sensor at index " + std::to_string(record),
                  record);
    }
    if (!s.t.empty() && ts < s.t.back()) {
      throw Error(ErrorCode::NonMonotonicTime,
                  "timestamp decreases at index " + std::to_string(record), record);
    }
    s.push_back(ts, static_cast<std::uint8_t>(pol), static_cast<std::uint16_t>(col),
                static_cast<std::uint16_t>(row));
    ++record;
  }
  return s;
}

template <typename U>
void put_le(char* dst, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    dst[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  }
}

template <typename U>
U get_le(const char* src) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(src[i])) << (8 * i);
  }
  return static_cast<U>(v);
}

EventStream parse_binary(const std::string& bytes) {
  if (bytes.size() < kBinaryHeaderBytes) {
    throw Error(ErrorCode::MalformedRecord, "binary file shorter than header");
  }
  const char* h = bytes.data();
  if (std::memcmp(h, "EVT1", 4) != 0) {
    throw Error(ErrorCode::MalformedRecord, "bad magic, expected EVT1");
  }
  if (get_le<std::uint32_t>(h + 4) != 1) {
    throw Error(ErrorCode::MalformedRecord, "unsupported binary version");
  }
  EventStream s;
  s.width = get_le<std::uint32_t>(h + 8);
  s.height = get_le<std::uint32_t>(h + 12);
  const auto count = get_le<std::uint64_t>(h + 16);
  if ((bytes.size() - kBinaryHeaderBytes) / kBinaryRecordBytes != count ||
      (bytes.size() - kBinaryHeaderBytes) % kBinaryRecordBytes != 0) {
    throw Error(ErrorCode::MalformedRecord,
                "record section does not match header count");
  }
  const auto n = static_cast<std::size_t>(count);
  s.t.resize(n);
  s.p.resize(n);
  s.x.resize(n);
  s.y.resize(n);
  const char* rec = h + kBinaryHeaderBytes;
  for (std::size_t i = 0; i < n; ++i, rec += kBinaryRecordBytes) {
    s.t[i] = static_cast<std::int64_t>(get_le<std::uint64_t>(rec));
    s.p[i] = static_cast<std::uint8_t>(rec[8]);
    s.x[i] = get_le<std::uint16_t>(rec + 12);
    s.y[i] = get_le<std::uint16_t>(rec + 14);
  }
  validate_stream(s);
  return s;
}

}  // namespace

EventStream load_events(const std::filesystem::path& path, EventFormat format,
                        std::uint32_t width, std::uint32_t height) {
  const std::string contents = read_all(path);
  return format == EventFormat::Csv ? parse_csv(contents, width, height)
                                    : parse_binary(contents);
}

void save_events_binary(const EventStream& s, const std::filesystem::path& path) {
  std::string buf(kBinaryHeaderBytes + kBinaryRecordBytes * s.size(), '\0');
  char* h = buf.data();
  std::memcpy(h, "EVT1", 4);
  put_le<std::uint32_t>(h + 4, 1);
  put_le<std::uint32_t>(h + 8, s.width);
  put_le<std::uint32_t>(h + 12, s.height);
  put_le<std::uint64_t>(h + 16, s.size());
  char* rec = h + kBinaryHeaderBytes;
  for (std::size_t i = 0; i < s.size(); ++i, rec += kBinaryRecordBytes) {
    put_le<std::uint64_t>(rec, static_cast<std::uint64_t>(s.t[i]));
    rec[8] = static_cast<char>(s.p[i]);
    put_le<std::uint16_t>(rec + 12, s.x[i]);
    put_le<std::uint16_t>(rec + 14, s.y[i]);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

void save_events_csv(const EventStream& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << s.t[i] << ',' << int(s.p[i]) << ',' << s.x[i] << ',' << s.y[i] << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

MotionModel parse_motion_model(std::string_view name) {
  if (name == "uniform_noise") return MotionModel::UniformNoise;
  if (name == "moving_bar") return MotionModel::MovingBar;
  if (name == "rotating_dot") return MotionModel::RotatingDot;
  throw Error(ErrorCode::ConfigError,
              "unknown motion model '" + std::string(name) + "'");
}

double MovingBar::bar_left(std::int64_t t) const {
  return static_cast<double>(width - bar_width) * static_cast<double>(t) /
         static_cast<double>(duration);
}

bool MovingBar::contains(std::int64_t t, std::uint16_t x) const {
  const auto left = static_cast<std::int64_t>(std::floor(bar_left(t)));
  return x >= left && x < left + bar_width;
}

MovingBar moving_bar_geometry(std::uint32_t width, std::uint32_t height,
                              std::int64_t duration) {
  return MovingBar{width, height, duration, std::max<std::uint32_t>(1, width / 8)};
}

EventStream generate_synthetic_stream(std::uint64_t seed, std::size_t n_events,
                                      std::uint32_t width, std::uint32_t height,
                                      std::int64_t duration, MotionModel motion) {
  if (width == 0 || height == 0 || width > 65536 || height > 65536 || duration < 1) {
    throw Error(ErrorCode::ConfigError, "invalid synthetic stream geometry");
  }
  EventStream s;
  s.width = width;
  s.height = height;
  s.t.resize(n_events);
  s.p.resize(n_events);
  s.x.resize(n_events);
  s.y.resize(n_events);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> col(0, width - 1);
  std::uniform_int_distribution<std::uint32_t> row(0, height - 1);
  std::uniform_int_distribution<std::uint32_t> coin(0, 1);

  const MovingBar bar = moving_bar_geometry(width, height, duration);
  std::uniform_int_distribution<std::uint32_t> bar_col(0, bar.bar_width - 1);

  const double cx = 0.5 * (width - 1);
  const double cy = 0.5 * (height - 1);
  const double orbit = 0.25 * std::min(width, height);
  const double dot_r = std::max(1.0, 0.1 * std::min(width, height));

  const double step = static_cast<double>(duration) / static_cast<double>(std::max<std::size_t>(n_events, 1));
  for (std::size_t i = 0; i < n_events; ++i) {
    auto ts = static_cast<std::int64_t>((static_cast<double>(i) + unit(rng)) * step);
    ts = std::min(ts, duration - 1);
    s.t[i] = ts;

    const bool noise = motion == MotionModel::UniformNoise ||
                       unit(rng) < kSyntheticNoiseFraction;
    std::uint32_t ex = 0, ey = 0, ep = 0;
    if (noise) {
      ex = col(rng);
      ey = row(rng);
      ep = coin(rng);
    } else if (motion == MotionModel::MovingBar) {
      const auto left = static_cast<std::uint32_t>(std::floor(bar.bar_left(ts)));
      const std::uint32_t offset = bar_col(rng);
      ex = std::min(left + offset, width - 1);
      ey = row(rng);
      // Leading (right) half brightens, trailing half darkens.
      ep = 2 * offset >= bar.bar_width ? 1 : 0;
    } else {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(ts) /
                           static_cast<double>(duration);
      const double dx_c = cx + orbit * std::cos(angle);
      const double dy_c = cy + orbit * std::sin(angle);
      // Uniform point in the dot's disk.
      const double r = dot_r * std::sqrt(unit(rng));
      const double a = 2.0 * std::numbers::pi * unit(rng);
      const double fx = std::clamp(std::round(dx_c + r * std::cos(a)), 0.0, double(width - 1));
      const double fy = std::clamp(std::round(dy_c + r * std::sin(a)), 0.0, double(height - 1));
      ex = static_cast<std::uint32_t>(fx);
      ey = static_cast<std::uint32_t>(fy);
      ep = coin(rng);
    }
    s.x[i] = static_cast<std::uint16_t>(ex);
    s.y[i] = static_cast<std::uint16_t>(ey);
    s.p[i] = static_cast<std::uint8_t>(ep);
  }
  return s;
}

EventStream time_reversed(const EventStream& s) {
  EventStream r;
  r.width = s.width;
  r.height = s.height;
  const std::size_t n = s.size();
  r.reserve(n);
  if (n == 0) return r;
  const std::int64_t sum = s.t.front() + s.t.back();
  for (std::size_t k = n; k-- > 0;) {
    r.push_back(sum - s.t[k], s.p[k], s.x[k], s.y[k]);
  }
  return r;
}

}  // namespace getnet
