// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "getnet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "getnet/error.hpp"

namespace getnet {

EncoderKind parse_encoder(std::string_view name) {
  if (name == "group_token") return EncoderKind::GroupToken;
  if (name == "histogram") return EncoderKind::Histogram;
  if (name == "voxel") return EncoderKind::Voxel;
  throw Error(ErrorCode::ConfigError, "unknown encoder '" + std::string(name) + "'");
}

std::string_view to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::GroupToken: return "group_token";
    case EncoderKind::Histogram: return "histogram";
    case EncoderKind::Voxel: return "voxel";
  }
  return "unknown";
}

double reference_seconds_per_1e8(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::GroupToken: return 0.052;
    case EncoderKind::Histogram: return 0.374;
    case EncoderKind::Voxel: return 0.390;
  }
  return 0.0;
}

void BenchOptions::validate() const {
  if (events == 0) throw Error(ErrorCode::ConfigError, "events must be >= 1");
  if (runs == 0) throw Error(ErrorCode::ConfigError, "runs must be >= 1");
  if (threads == 0) throw Error(ErrorCode::ConfigError, "threads must be >= 1");
  if (width == 0 || height == 0 || width > 65536 || height > 65536) {
    throw Error(ErrorCode::ConfigError, "sensor size out of range");
  }
  gte.validate();
}

HardwareInfo hardware_info() {
  HardwareInfo h;
  h.logical_cores = std::thread::hardware_concurrency();
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        h.cpu_model = line.substr(colon + 1);
        h.cpu_model.erase(0, h.cpu_model.find_first_not_of(' '));
      }
      break;
    }
  }
  if (h.cpu_model.empty()) h.cpu_model = "unknown";
  return h;
}

std::string BenchReport::comparison_line() const {
  std::ostringstream os;
  os << std::setprecision(4) << encoder << ": median " << median_seconds << " s for " << events
     << " events; reference " << reference_seconds << " s at this size (ratio "
     << (reference_seconds > 0 ? median_seconds / reference_seconds : 0.0)
     << "x, hardware differs)";
  return os.str();
}

std::string BenchReport::to_json() const {
  nlohmann::json j;
  j["encoder"] = encoder;
  j["events"] = events;
  j["threads"] = threads;
  j["runs"] = run_seconds.size();
  j["run_seconds"] = run_seconds;
  j["median_seconds"] = median_seconds;
  j["min_seconds"] = min_seconds;
  j["throughput_events_per_second"] = throughput;
  j["reference_seconds"] = reference_seconds;
  j["comparison"] = comparison_line();
  j["hardware"] = {{"cpu_model", hardware.cpu_model}, {"logical_cores", hardware.logical_cores}};
  return j.dump(2);
}

std::string BenchReport::to_text() const {
  std::ostringstream os;
  os << "encoder     " << encoder << '\n'
     << "events      " << events << '\n'
     << "threads     " << threads << '\n'
     << "runs        " << run_seconds.size() << '\n'
     << "median (s)  " << median_seconds << '\n'
     << "min (s)     " << min_seconds << '\n'
     << "throughput  " << throughput << " events/s\n"
     << "cpu         " << hardware.cpu_model << " (" << hardware.logical_cores
     << " logical cores)\n"
     << comparison_line() << '\n';
  return os.str();
}

BenchReport run_encode_bench(const EventStream& stream, const BenchOptions& opts) {
  opts.validate();
  BenchReport r;
  r.encoder = std::string(to_string(opts.encoder));
  r.events = stream.size();
  r.threads = opts.threads;
  r.hardware = hardware_info();
  r.reference_seconds =
      reference_seconds_per_1e8(opts.encoder) * static_cast<double>(stream.size()) / 1e8;
  for (std::size_t i = 0; i < opts.runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    switch (opts.encoder) {
      case EncoderKind::GroupToken: {
        auto rep = encode_group_tokens(stream, opts.gte, opts.threads);
        (void)rep;
        break;
      }
      case EncoderKind::Histogram: {
        auto h = encode_event_histogram(stream, opts.threads);
        (void)h;
        break;
      }
      case EncoderKind::Voxel: {
        auto v = encode_voxel_grid(stream, opts.gte.K, opts.threads);
        (void)v;
        break;
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    r.run_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::vector<double> sorted = r.run_seconds;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  r.median_seconds = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  r.min_seconds = sorted.front();
  r.throughput = r.median_seconds > 0 ? static_cast<double>(r.events) / r.median_seconds : 0.0;
  return r;
}

BenchReport run_encode_bench(const BenchOptions& opts) {
  opts.validate();
  const EventStream stream = generate_synthetic_stream(
      opts.seed, opts.events, opts.width, opts.height,
      static_cast<std::int64_t>(opts.events) * 10, MotionModel::UniformNoise);
  return run_encode_bench(stream, opts);
}

}  // namespace getnet
