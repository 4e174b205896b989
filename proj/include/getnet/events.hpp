// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace getnet {

/// Columnar asynchronous event stream. Timestamps are integer microseconds,
/// polarity is 0 (OFF) or 1 (ON). The stream is treated as immutable once
/// built; use validate_stream() before handing hand-built data to encoders.
struct EventStream {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::int64_t> t;
  std::vector<std::uint8_t> p;
  std::vector<std::uint16_t> x;
  std::vector<std::uint16_t> y;

  std::size_t size() const noexcept { return t.size(); }
  bool empty() const noexcept { return t.empty(); }
  std::int64_t t_begin() const { return t.front(); }
  std::int64_t t_end() const { return t.back(); }

  void reserve(std::size_t n);
  void push_back(std::int64_t ts, std::uint8_t pol, std::uint16_t col,
                 std::uint16_t row);

  bool operator==(const EventStream&) const = default;
};

enum class EventFormat { Csv, Binary };

EventFormat parse_event_format(std::string_view name);

/// Throws Error{OutOfRange | NonMonotonicTime | MalformedRecord} naming the
/// first offending index.
void validate_stream(const EventStream& stream);

/// CSV rows are `t,p,x,y`; geometry comes from the caller. For the binary
/// format the header geometry wins and `width`/`height` are ignored.
EventStream load_events(const std::filesystem::path& path, EventFormat format,
                        std::uint32_t width = 0, std::uint32_t height = 0);

void save_events_binary(const EventStream& stream,
                        const std::filesystem::path& path);
void save_events_csv(const EventStream& stream,
                     const std::filesystem::path& path);

inline constexpr std::size_t kBinaryHeaderBytes = 24;
inline constexpr std::size_t kBinaryRecordBytes = 16;

enum class MotionModel { UniformNoise, MovingBar, RotatingDot };

MotionModel parse_motion_model(std::string_view name);

/// Geometry of the moving bar. The bar is vertical and sweeps left to right;
/// its left edge at time `t` is bar_left(t).
struct MovingBar {
  std::uint32_t width;
  std::uint32_t height;
  std::int64_t duration;
  std::uint32_t bar_width;

  double bar_left(std::int64_t t) const;
  bool contains(std::int64_t t, std::uint16_t x) const;
};

MovingBar moving_bar_geometry(std::uint32_t width, std::uint32_t height,
                              std::int64_t duration);

/// Fraction of events generated off the structured motion (uniform noise).
inline constexpr double kSyntheticNoiseFraction = 0.05;

/// Deterministic in all arguments. Timestamps lie in [0, duration) and are
/// non-decreasing.
EventStream generate_synthetic_stream(std::uint64_t seed, std::size_t n_events,
                                      std::uint32_t width, std::uint32_t height,
                                      std::int64_t duration,
                                      MotionModel motion);

/// Mirrors the stream in time: t' = t_begin + t_end - t, order reversed so
/// the result stays sorted.
EventStream time_reversed(const EventStream& stream);

}  // namespace getnet
