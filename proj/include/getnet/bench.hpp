// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "getnet/events.hpp"
#include "getnet/group_token.hpp"

namespace getnet {

enum class EncoderKind { GroupToken, Histogram, Voxel };

EncoderKind parse_encoder(std::string_view name);
std::string_view to_string(EncoderKind kind);

/// Reference conversion time in seconds per 1e8 events for each encoder.
double reference_seconds_per_1e8(EncoderKind kind);

struct BenchOptions {
  EncoderKind encoder = EncoderKind::GroupToken;
  std::size_t events = 1'000'000;
  unsigned threads = 1;
  std::size_t runs = 5;
  std::uint64_t seed = 0;
  std::uint32_t width = 128, height = 128;
  GteConfig gte;  // also supplies K for the voxel grid

  void validate() const;  // throws Error{ConfigError}
};

struct HardwareInfo {
  std::string cpu_model;
  unsigned logical_cores = 0;
};

HardwareInfo hardware_info();

struct BenchReport {
  std::string encoder;
  std::size_t events = 0;
  unsigned threads = 0;
  std::vector<double> run_seconds;
  double median_seconds = 0.0;
  double min_seconds = 0.0;
  double throughput = 0.0;  // events / median_seconds
  double reference_seconds = 0.0;  // reference figure scaled to `events`
  HardwareInfo hardware;

  std::string comparison_line() const;
  std::string to_json() const;
  std::string to_text() const;
};

/// Times encoding only; `stream` must already exist.
BenchReport run_encode_bench(const EventStream& stream, const BenchOptions& opts);
/// Generates a uniform-noise stream once, then times it.
BenchReport run_encode_bench(const BenchOptions& opts);

}  // namespace getnet
