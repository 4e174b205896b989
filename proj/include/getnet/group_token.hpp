// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "getnet/events.hpp"
#include "getnet/tensor.hpp"

namespace getnet {

/// Group Token encoder hyperparameters.
///   K  time intervals, P patch side, G channel groups, C channels per group.
/// G is 2K (one group per polarity/time-bin cell) or K (two adjacent time
/// bins per group, K even). G = K = 1 is accepted as the spatial-only
/// ablation, which merges both polarities into one group.
struct GteConfig {
  std::uint32_t K = 12;
  std::uint32_t P = 4;
  std::uint32_t G = 12;
  std::uint32_t C = 4;
  /// When false the time-weight plane is zeroed before embedding.
  bool time_weights = true;

  /// Throws Error{ConfigError}.
  void validate() const;

  std::uint32_t cells() const { return 2 * K; }
  std::uint32_t cells_per_group() const { return 2 * K / G; }
  /// Channel count of the raw representation: 2K cells · 2 planes · P².
  std::uint32_t rep_channels() const { return 4 * K * P * P; }
  std::uint32_t embed_dim() const { return G * C; }
};

/// Sensor plane after zero-padding right/bottom to a multiple of P.
struct PatchGrid {
  std::uint32_t width;   // padded pixels
  std::uint32_t height;  // padded pixels
  std::uint32_t cols;    // width / P
  std::uint32_t rows;    // height / P
  std::size_t tokens() const { return std::size_t{cols} * rows; }
  std::size_t pixels() const { return std::size_t{width} * height; }
};

PatchGrid patch_grid(std::uint32_t width, std::uint32_t height, std::uint32_t patch);

struct DiscretizedEvents {
  std::vector<std::uint32_t> d_t;
  std::vector<std::uint32_t> pr;
  std::vector<std::uint32_t> pos;
};

/// d_t = floor(K (t - t0) / (t_end - t0 + 1)), pr = x%P + (y%P)·P,
/// pos = x/P + (y/P)·(W/P) on the padded grid.
DiscretizedEvents discretize_events(const EventStream& stream, const GteConfig& cfg);

/// l = K·H·W·p + H·W·d_t + (H·W/P²)·pr + pos with H, W the padded plane.
std::vector<std::uint64_t> linear_event_index(std::span<const std::uint8_t> p,
                                              const DiscretizedEvents& disc,
                                              const GteConfig& cfg, const PatchGrid& grid);

inline std::uint64_t bin_count(const GteConfig& cfg, const PatchGrid& grid) {
  return std::uint64_t{2} * cfg.K * grid.pixels();
}

struct DualBinCount {
  std::vector<std::uint32_t> counts;
  std::vector<double> time_sums;
};

/// Weighted bin count with weights 1 and (t - t0)/(t_end - t0); the ratio is
/// 0 when t_end == t0. Events are sharded over `threads` workers whose local
/// arrays are merged in worker order. Throws Error{IndexOutOfRange}.
DualBinCount dual_bincount(std::span<const std::uint64_t> l, const EventStream& stream,
                           std::size_t bins, unsigned threads = 1);

/// Dense (tokens × 2K·2P²) grid. Token index = pos; channel index =
/// (p·K + d_t)·2P² + s·P² + pr with s = 0 for counts, 1 for time weights.
struct GroupRepresentation {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint32_t channels = 0;
  std::vector<float> data;

  std::size_t tokens() const { return std::size_t{rows} * cols; }
  float at(std::size_t token, std::size_t channel) const {
    return data[token * channels + channel];
  }
};

GroupRepresentation build_group_representation(const DualBinCount& bins,
                                               const GteConfig& cfg, const PatchGrid& grid);

/// Fused encoder: discretization and both bin counts in one pass over the
/// events. Same result as the step-by-step pipeline.
GroupRepresentation encode_group_tokens(const EventStream& stream, const GteConfig& cfg,
                                        unsigned threads = 1);

/// Learnable embedding: 3×3 grouped conv (G groups, (2K/G)·2P² -> C
/// channels each) followed by a per-group MLP C -> 2C -> C.
template <typename T>
struct GteParams {
  Tensor<T> conv_w;  // [G·C, (2K/G)·2P², 3, 3]
  Tensor<T> conv_b;  // [G·C]
  Tensor<T> mlp_w1;  // [G, C, 2C]
  Tensor<T> mlp_b1;  // [G, 2C]
  Tensor<T> mlp_w2;  // [G, 2C, C]
  Tensor<T> mlp_b2;  // [G, C]
};

template <typename T>
GteParams<T> zero_gte_params(const GteConfig& cfg);

template <typename T, typename Fn>
void visit_parameters(GteParams<T>& p, Fn&& fn) {
  fn("conv_w", p.conv_w);
  fn("conv_b", p.conv_b);
  fn("mlp_w1", p.mlp_w1);
  fn("mlp_b1", p.mlp_b1);
  fn("mlp_w2", p.mlp_w2);
  fn("mlp_b2", p.mlp_b2);
}

/// rep_tokens is [tokens, rep_channels] on a rows×cols grid; returns
/// [tokens, G·C]. Throws Error{ShapeMismatch}.
template <typename T>
Tensor<T> group_token_embed(const Tensor<T>& rep_tokens, std::size_t rows, std::size_t cols,
                            const GteParams<T>& params, const GteConfig& cfg);

template <typename T>
Tensor<T> group_token_embed(const GroupRepresentation& rep, const GteParams<T>& params,
                            const GteConfig& cfg);

/// Representation as a constant tensor, honouring cfg.time_weights.
template <typename T>
Tensor<T> representation_tensor(const GroupRepresentation& rep, const GteConfig& cfg);

/// Per-pixel polarity counts, [H, W, 2].
Tensor<float> encode_event_histogram(const EventStream& stream, unsigned threads = 1);

/// Bilinear temporal splat of signed polarity (+1 ON, -1 OFF) onto K bins
/// spanning [t0, t_end], [H, W, K].
Tensor<float> encode_voxel_grid(const EventStream& stream, std::uint32_t bins,
                                unsigned threads = 1);

}  // namespace getnet
