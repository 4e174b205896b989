// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "getnet/group_token.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <thread>
#include <type_traits>

#include "getnet/error.hpp"
#include "getnet/ops.hpp"

namespace getnet {

void GteConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (K < 1) fail("K must be >= 1");
  if (P < 1) fail("P must be >= 1");
  if (C < 1) fail("C must be >= 1");
  const bool per_cell = G == 2 * K;
  const bool paired = G == K && K % 2 == 0;
  const bool spatial_only = G == 1 && K == 1;
  if (!per_cell && !paired && !spatial_only) {
    fail("G must be 2K or K (K even); got G=" + std::to_string(G) + ", K=" + std::to_string(K));
  }
}

PatchGrid patch_grid(std::uint32_t width, std::uint32_t height, std::uint32_t patch) {
  if (patch == 0 || width == 0 || height == 0) {
    throw Error(ErrorCode::ConfigError, "patch grid needs non-zero sensor and patch size");
  }
  const std::uint32_t cols = (width + patch - 1) / patch;
  const std::uint32_t rows = (height + patch - 1) / patch;
  return PatchGrid{cols * patch, rows * patch, cols, rows};
}

namespace {

// floor(K·dt / span1) without overflow for any int64 time range.
std::uint32_t time_bin_exact(std::uint64_t dt, std::uint32_t k, std::uint64_t span1) {
  const unsigned __int128 num = static_cast<unsigned __int128>(dt) * k;
  return static_cast<std::uint32_t>(num / span1);
}

unsigned clamp_threads(unsigned threads, std::size_t n) {
  if (threads == 0) threads = 1;
  // Tiny inputs are not worth a worker each.
  const std::size_t max_useful = std::max<std::size_t>(1, n / 4096);
  return static_cast<unsigned>(std::min<std::size_t>(threads, max_useful));
}

// Runs fn(worker, lo, hi) over contiguous event shards.
template <typename Fn>
void for_each_shard(std::size_t n, unsigned workers, Fn&& fn) {
  if (workers <= 1) {
    fn(0u, std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t lo = n * w / workers;
    const std::size_t hi = n * (w + 1) / workers;
    pool.emplace_back([&fn, w, lo, hi] { fn(w, lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

DiscretizedEvents discretize_events(const EventStream& s, const GteConfig& cfg) {
  cfg.validate();
  const PatchGrid grid = patch_grid(s.width, s.height, cfg.P);
  DiscretizedEvents out;
  const std::size_t n = s.size();
  out.d_t.resize(n);
  out.pr.resize(n);
  out.pos.resize(n);
  if (n == 0) return out;
  const std::int64_t t0 = s.t.front();
  const auto span1 = static_cast<std::uint64_t>(s.t.back() - t0) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    out.d_t[i] = time_bin_exact(static_cast<std::uint64_t>(s.t[i] - t0), cfg.K, span1);
    out.pr[i] = s.x[i] % cfg.P + (s.y[i] % cfg.P) * cfg.P;
    out.pos[i] = s.x[i] / cfg.P + (s.y[i] / cfg.P) * grid.cols;
  }
  return out;
}

std::vector<std::uint64_t> linear_event_index(std::span<const std::uint8_t> p,
                                              const DiscretizedEvents& disc,
                                              const GteConfig& cfg, const PatchGrid& grid) {
  const std::size_t n = p.size();
  if (disc.d_t.size() != n || disc.pr.size() != n || disc.pos.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "linear_event_index: array lengths differ");
  }
  const std::uint64_t hw = grid.pixels();
  const std::uint64_t khw = std::uint64_t{cfg.K} * hw;
  const std::uint64_t plane = grid.tokens();  // H·W / P²
  std::vector<std::uint64_t> l(n);
  for (std::size_t i = 0; i < n; ++i) {
    l[i] = khw * p[i] + hw * disc.d_t[i] + plane * disc.pr[i] + disc.pos[i];
  }
  return l;
}

DualBinCount dual_bincount(std::span<const std::uint64_t> l, const EventStream& s,
                           std::size_t bins, unsigned threads) {
  if (l.size() != s.size()) {
    throw Error(ErrorCode::ShapeMismatch, "dual_bincount: index and stream lengths differ");
  }
  const std::size_t n = l.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (l[i] >= bins) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "bin index " + std::to_string(l[i]) + " >= " + std::to_string(bins), i);
    }
  }
  DualBinCount out;
  out.counts.assign(bins, 0);
  out.time_sums.assign(bins, 0.0);
  if (n == 0) return out;
  const std::int64_t t0 = s.t.front();
  const std::int64_t range = s.t.back() - t0;
  const double inv = range > 0 ? 1.0 / static_cast<double>(range) : 0.0;

  const unsigned workers = clamp_threads(threads, n);
  std::vector<DualBinCount> local(workers > 1 ? workers : 0);
  for_each_shard(n, workers, [&](unsigned w, std::size_t lo, std::size_t hi) {
    DualBinCount* dst = &out;
    if (workers > 1) {
      local[w].counts.assign(bins, 0);
      local[w].time_sums.assign(bins, 0.0);
      dst = &local[w];
    }
    for (std::size_t i = lo; i < hi; ++i) {
      dst->counts[l[i]] += 1;
      dst->time_sums[l[i]] += static_cast<double>(s.t[i] - t0) * inv;
    }
  });
  for (const auto& part : local) {
    for (std::size_t b = 0; b < bins; ++b) {
      out.counts[b] += part.counts[b];
      out.time_sums[b] += part.time_sums[b];
    }
  }
  return out;
}

GroupRepresentation build_group_representation(const DualBinCount& bins,
                                               const GteConfig& cfg, const PatchGrid& grid) {
  const std::uint64_t nbins = bin_count(cfg, grid);
  if (bins.counts.size() != nbins || bins.time_sums.size() != nbins) {
    throw Error(ErrorCode::ShapeMismatch, "build_group_representation: expected " +
                                              std::to_string(nbins) + " bins");
  }
  GroupRepresentation rep;
  rep.rows = grid.rows;
  rep.cols = grid.cols;
  rep.channels = cfg.rep_channels();
  rep.data.assign(grid.tokens() * rep.channels, 0.0f);
  const std::size_t tokens = grid.tokens();
  const std::size_t pp = std::size_t{cfg.P} * cfg.P;
  // l = cell·(H·W) + pr·tokens + pos, cell = p·K + d_t.
  for (std::size_t cell = 0; cell < cfg.cells(); ++cell) {
    for (std::size_t pr = 0; pr < pp; ++pr) {
      const std::size_t lbase = cell * grid.pixels() + pr * tokens;
      const std::size_t ch = cell * 2 * pp + pr;
      for (std::size_t pos = 0; pos < tokens; ++pos) {
        float* row = rep.data.data() + pos * rep.channels;
        row[ch] = static_cast<float>(bins.counts[lbase + pos]);
        row[ch + pp] = static_cast<float>(bins.time_sums[lbase + pos]);
      }
    }
  }
  return rep;
}

namespace {

// Plane-major scratch layout: index = (p·K + d_t)·W·H + y·W + x. Events
// arrive in time order, so consecutive events hit one or two planes.
template <typename Acc>
struct PlaneBins {
  std::vector<std::uint32_t> counts;
  std::vector<Acc> time_sums;  // Σ(t - t0) as integers, or Σ weight
  explicit PlaneBins(std::size_t n) : counts(n, 0), time_sums(n, Acc{0}) {}
};

// thr[b] is the smallest offset dt with floor(K·dt / span) >= b.
std::vector<std::uint64_t> bin_thresholds(std::uint32_t k, std::uint64_t span1) {
  std::vector<std::uint64_t> thr(k + 1);
  for (std::uint32_t b = 0; b <= k; ++b) {
    const unsigned __int128 v = (static_cast<unsigned __int128>(b) * span1 + k - 1) / k;
    thr[b] = v > std::numeric_limits<std::uint64_t>::max()
                 ? std::numeric_limits<std::uint64_t>::max()
                 : static_cast<std::uint64_t>(v);
  }
  return thr;
}

// Count and offset sum packed in one word: count in the top kPackedCountBits,
// Σ(dt - base) below. A chunk of L events whose offsets span R cannot overflow
// either field when L < 2^kPackedCountBits and L·R < 2^kPackedSumBits.
constexpr unsigned kPackedCountBits = 20;
constexpr unsigned kPackedSumBits = 64 - kPackedCountBits;

template <typename Acc>
void encode_shard(const EventStream& s, std::size_t lo, std::size_t hi, std::uint32_t k,
                  const std::vector<std::uint64_t>& thr, double inv_range,
                  PlaneBins<Acc>& out) {
  const auto t0 = static_cast<std::uint64_t>(s.t.front());
  const std::size_t plane = std::size_t{s.width} * s.height;
  const std::uint32_t w = s.width;
  const std::int64_t* t = s.t.data();
  const std::uint8_t* p = s.p.data();
  const std::uint16_t* x = s.x.data();
  const std::uint16_t* y = s.y.data();
  std::uint32_t* counts = out.counts.data();
  Acc* sums = out.time_sums.data();
  auto offset = [&](std::size_t i) { return static_cast<std::uint64_t>(t[i]) - t0; };

  if constexpr (!std::is_integral_v<Acc>) {
    std::uint32_t bin = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      const std::uint64_t dt = offset(i);
      // Walks at most one step per event on sorted input.
      while (bin + 1 < k && dt >= thr[bin + 1]) ++bin;
      const std::size_t idx = (std::size_t{p[i]} * k + bin) * plane + std::size_t{y[i]} * w + x[i];
      counts[idx] += 1;
      sums[idx] += static_cast<double>(dt) * inv_range;
    }
  } else {
    (void)inv_range;
    // Below this many events a chunk is cheaper without the packed pass.
    const std::size_t min_packed = std::max<std::size_t>(plane / 2, 64);
    std::vector<std::uint64_t> packed;
    std::size_t a = lo;
    while (a < hi) {
      const std::uint64_t base = offset(a);
      const auto bin = static_cast<std::uint32_t>(
          std::upper_bound(thr.begin(), thr.begin() + k, base) - thr.begin() - 1);
      std::size_t seg_end = hi;
      if (bin + 1 < k) {
        seg_end = static_cast<std::size_t>(
            std::partition_point(t + a, t + hi,
                                 [&](std::int64_t v) {
                                   return static_cast<std::uint64_t>(v) - t0 < thr[bin + 1];
                                 }) -
            t);
      }
      std::size_t len = std::min(seg_end - a, (std::size_t{1} << kPackedCountBits) - 1);
      while (len >= min_packed &&
             static_cast<unsigned __int128>(len) * (offset(a + len - 1) - base) >=
                 (static_cast<unsigned __int128>(1) << kPackedSumBits)) {
        len /= 2;
      }
      const std::size_t b = a + len;
      std::uint32_t* cnt_bin = counts + std::size_t{bin} * plane;
      std::uint64_t* sum_bin = sums + std::size_t{bin} * plane;
      const std::size_t pol_stride = std::size_t{k} * plane;
      if (len < min_packed) {
        for (std::size_t i = a; i < b; ++i) {
          const std::size_t idx = p[i] * pol_stride + std::size_t{y[i]} * w + x[i];
          cnt_bin[idx] += 1;
          sum_bin[idx] += offset(i);
        }
      } else {
        if (packed.empty()) packed.assign(2 * plane, 0);
        constexpr std::uint64_t one = std::uint64_t{1} << kPackedSumBits;
        constexpr std::uint64_t sum_mask = one - 1;
        const auto tb = static_cast<std::uint64_t>(t[a]);
        std::uint64_t* acc = packed.data();
        for (std::size_t i = a; i < b; ++i) {
          acc[p[i] * plane + std::size_t{y[i]} * w + x[i]] +=
              one + (static_cast<std::uint64_t>(t[i]) - tb);
        }
        for (std::size_t pol = 0; pol < 2; ++pol) {
          std::uint64_t* src = acc + pol * plane;
          std::uint32_t* cnt = cnt_bin + pol * pol_stride;
          std::uint64_t* sum = sum_bin + pol * pol_stride;
          for (std::size_t q = 0; q < plane; ++q) {
            const std::uint64_t word = src[q];
            if (word == 0) continue;
            const std::uint64_t n = word >> kPackedSumBits;
            cnt[q] += static_cast<std::uint32_t>(n);
            sum[q] += (word & sum_mask) + n * base;
            src[q] = 0;
          }
        }
      }
      a = b;
    }
  }
}

template <typename Acc>
GroupRepresentation encode_planes(const EventStream& s, const GteConfig& cfg, unsigned threads) {
  const PatchGrid grid = patch_grid(s.width, s.height, cfg.P);
  const std::uint32_t P = cfg.P;
  const std::size_t pp = std::size_t{P} * P;
  const std::size_t plane = std::size_t{s.width} * s.height;
  const std::size_t cells = cfg.cells();
  const std::size_t n = s.size();

  PlaneBins<Acc> bins(cells * plane);
  double inv_range = 0.0;
  if (n > 0) {
    const auto range = static_cast<std::uint64_t>(s.t.back() - s.t.front());
    inv_range = range > 0 ? 1.0 / static_cast<double>(range) : 0.0;
    const auto thr = bin_thresholds(cfg.K, range + 1);
    const unsigned workers = clamp_threads(threads, n);
    std::vector<PlaneBins<Acc>> local;
    for (unsigned w = 1; w < workers; ++w) local.emplace_back(cells * plane);
    for_each_shard(n, workers, [&](unsigned w, std::size_t lo, std::size_t hi) {
      encode_shard(s, lo, hi, cfg.K, thr, inv_range, w == 0 ? bins : local[w - 1]);
    });
    for (const auto& part : local) {
      for (std::size_t b = 0; b < bins.counts.size(); ++b) {
        bins.counts[b] += part.counts[b];
        bins.time_sums[b] += part.time_sums[b];
      }
    }
  }

  GroupRepresentation rep;
  rep.rows = grid.rows;
  rep.cols = grid.cols;
  rep.channels = cfg.rep_channels();
  rep.data.assign(grid.tokens() * rep.channels, 0.0f);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const std::uint32_t* cnt = bins.counts.data() + cell * plane;
    const Acc* sum = bins.time_sums.data() + cell * plane;
    for (std::uint32_t yy = 0; yy < s.height; ++yy) {
      for (std::uint32_t xx = 0; xx < s.width; ++xx) {
        const std::size_t src = std::size_t{yy} * s.width + xx;
        if (cnt[src] == 0) continue;
        const std::size_t pos = std::size_t{yy / P} * grid.cols + xx / P;
        const std::size_t pr = (xx % P) + (yy % P) * P;
        float* row = rep.data.data() + pos * rep.channels + cell * 2 * pp;
        row[pr] = static_cast<float>(cnt[src]);
        if constexpr (std::is_integral_v<Acc>) {
          row[pp + pr] = static_cast<float>(static_cast<double>(sum[src]) * inv_range);
        } else {
          row[pp + pr] = static_cast<float>(sum[src]);
        }
      }
    }
  }
  return rep;
}

}  // namespace

GroupRepresentation encode_group_tokens(const EventStream& s, const GteConfig& cfg,
                                        unsigned threads) {
  cfg.validate();
  if (s.empty()) return encode_planes<std::uint64_t>(s, cfg, threads);
  // Integer offset sums are exact while n·range fits in 64 bits.
  const auto range = static_cast<unsigned __int128>(s.t.back() - s.t.front());
  if (range * s.size() < (static_cast<unsigned __int128>(1) << 64)) {
    return encode_planes<std::uint64_t>(s, cfg, threads);
  }
  return encode_planes<double>(s, cfg, threads);
}

template <typename T>
GteParams<T> zero_gte_params(const GteConfig& cfg) {
  cfg.validate();
  const std::size_t g = cfg.G, c = cfg.C;
  const std::size_t in_per_group = std::size_t{cfg.cells_per_group()} * 2 * cfg.P * cfg.P;
  GteParams<T> p;
  p.conv_w = Tensor<T>::zeros({g * c, in_per_group, 3, 3});
  p.conv_b = Tensor<T>::zeros({g * c});
  p.mlp_w1 = Tensor<T>::zeros({g, c, 2 * c});
  p.mlp_b1 = Tensor<T>::zeros({g, 2 * c});
  p.mlp_w2 = Tensor<T>::zeros({g, 2 * c, c});
  p.mlp_b2 = Tensor<T>::zeros({g, c});
  return p;
}

template <typename T>
Tensor<T> group_token_embed(const Tensor<T>& rep_tokens, std::size_t rows, std::size_t cols,
                            const GteParams<T>& params, const GteConfig& cfg) {
  cfg.validate();
  if (rep_tokens.rank() != 2 || rep_tokens.dim(0) != rows * cols ||
      rep_tokens.dim(1) != cfg.rep_channels()) {
    throw Error(ErrorCode::ShapeMismatch,
                "group_token_embed: representation " + shape_str(rep_tokens.shape()) +
                    " does not match config");
  }
  auto chw = ops::tokens_to_chw(rep_tokens, rows, cols);
  auto conv = ops::grouped_conv2d(chw, params.conv_w, params.conv_b, cfg.G, 1);
  auto tokens = ops::chw_to_tokens(conv);
  auto hidden = ops::gelu(ops::grouped_linear(tokens, params.mlp_w1, params.mlp_b1));
  return ops::grouped_linear(hidden, params.mlp_w2, params.mlp_b2);
}

template <typename T>
Tensor<T> representation_tensor(const GroupRepresentation& rep, const GteConfig& cfg) {
  std::vector<T> data(rep.data.begin(), rep.data.end());
  if (!cfg.time_weights) {
    const std::size_t pp = std::size_t{cfg.P} * cfg.P;
    for (std::size_t tok = 0; tok < rep.tokens(); ++tok)
      for (std::size_t cell = 0; cell < cfg.cells(); ++cell)
        std::fill_n(data.begin() + tok * rep.channels + cell * 2 * pp + pp, pp, T(0));
  }
  return Tensor<T>::from({rep.tokens(), rep.channels}, std::move(data));
}

template <typename T>
Tensor<T> group_token_embed(const GroupRepresentation& rep, const GteParams<T>& params,
                            const GteConfig& cfg) {
  return group_token_embed(representation_tensor<T>(rep, cfg), rep.rows, rep.cols, params, cfg);
}

Tensor<float> encode_event_histogram(const EventStream& s, unsigned threads) {
  const std::size_t cells = std::size_t{s.width} * s.height * 2;
  const std::size_t n = s.size();
  std::vector<std::uint32_t> counts(cells, 0);
  const unsigned workers = clamp_threads(threads, n);
  std::vector<std::vector<std::uint32_t>> local(workers > 1 ? workers : 0);
  for_each_shard(n, workers, [&](unsigned w, std::size_t lo, std::size_t hi) {
    std::uint32_t* dst = counts.data();
    if (workers > 1) {
      local[w].assign(cells, 0);
      dst = local[w].data();
    }
    for (std::size_t i = lo; i < hi; ++i) {
      dst[(std::size_t{s.y[i]} * s.width + s.x[i]) * 2 + s.p[i]] += 1;
    }
  });
  for (const auto& part : local)
    for (std::size_t c = 0; c < cells; ++c) counts[c] += part[c];
  return Tensor<float>::from({s.height, s.width, 2},
                             std::vector<float>(counts.begin(), counts.end()));
}

Tensor<float> encode_voxel_grid(const EventStream& s, std::uint32_t bins, unsigned threads) {
  if (bins == 0) throw Error(ErrorCode::ConfigError, "voxel grid needs >= 1 bin");
  const std::size_t cells = std::size_t{s.width} * s.height * bins;
  const std::size_t n = s.size();
  std::vector<float> grid(cells, 0.0f);
  if (n > 0) {
    const std::int64_t t0 = s.t.front();
    const std::int64_t range = s.t.back() - t0;
    const float norm = range > 0 ? static_cast<float>(bins - 1) / static_cast<float>(range) : 0.0f;
    const unsigned workers = clamp_threads(threads, n);
    std::vector<std::vector<float>> local(workers > 1 ? workers : 0);
    for_each_shard(n, workers, [&](unsigned w, std::size_t lo, std::size_t hi) {
      float* dst = grid.data();
      if (workers > 1) {
        local[w].assign(cells, 0.0f);
        dst = local[w].data();
      }
      for (std::size_t i = lo; i < hi; ++i) {
        const float tn = static_cast<float>(s.t[i] - t0) * norm;
        const auto b = std::min(static_cast<std::uint32_t>(tn), bins - 1);
        const float frac = tn - static_cast<float>(b);
        const float pol = s.p[i] ? 1.0f : -1.0f;
        float* px = dst + (std::size_t{s.y[i]} * s.width + s.x[i]) * bins;
        px[b] += pol * (1.0f - frac);
        if (b + 1 < bins) px[b + 1] += pol * frac;
      }
    });
    for (const auto& part : local)
      for (std::size_t c = 0; c < cells; ++c) grid[c] += part[c];
  }
  return Tensor<float>::from({s.height, s.width, bins}, std::move(grid));
}

template GteParams<float> zero_gte_params(const GteConfig&);
template GteParams<double> zero_gte_params(const GteConfig&);
template Tensor<float> group_token_embed(const Tensor<float>&, std::size_t, std::size_t,
                                         const GteParams<float>&, const GteConfig&);
template Tensor<double> group_token_embed(const Tensor<double>&, std::size_t, std::size_t,
                                          const GteParams<double>&, const GteConfig&);
template Tensor<float> group_token_embed(const GroupRepresentation&, const GteParams<float>&,
                                         const GteConfig&);
template Tensor<double> group_token_embed(const GroupRepresentation&, const GteParams<double>&,
                                          const GteConfig&);
template Tensor<float> representation_tensor(const GroupRepresentation&, const GteConfig&);
template Tensor<double> representation_tensor(const GroupRepresentation&, const GteConfig&);

}  // namespace getnet
