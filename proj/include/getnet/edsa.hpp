// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "getnet/tensor.hpp"

namespace getnet {

/// Attention block wiring. Edsa keeps two residual streams; the other
/// variants run a single stream and exist for ablations.
enum class BlockVariant { SsaOnly, Parallel, SeriesGsaFirst, SeriesSsaFirst, Edsa };

BlockVariant parse_block_variant(std::string_view name);
std::string_view to_string(BlockVariant v);

struct WindowShape {
  std::size_t h = 8;
  std::size_t w = 8;
  std::size_t area() const { return h * w; }
  bool operator==(const WindowShape&) const = default;
};

/// Non-overlapping windows over a rows×cols token grid, zero-padded on the
/// bottom/right up to whole windows.
struct WindowLayout {
  std::size_t rows = 0, cols = 0;
  WindowShape window;
  std::size_t windows = 0;   // M
  /// For each (window, slot) row of the partitioned tensor: source token,
  /// or -1 for padding.
  std::vector<std::int64_t> partition_index;
  /// For each token: its row in the partitioned [M·S] layout.
  std::vector<std::int64_t> reverse_index;

  std::size_t slots() const { return window.area(); }
  bool padded() const { return partition_index.size() != reverse_index.size(); }
};

WindowLayout make_window_layout(std::size_t rows, std::size_t cols, WindowShape window);

/// [rows·cols, D] -> [M, S, D]
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, const WindowLayout& layout);
/// [M, S, D] -> [rows·cols, D]
template <typename T>
Tensor<T> window_reverse(const Tensor<T>& x, const WindowLayout& layout);

/// Swin-style offset index: for slots i=(r1,c1), j=(r2,c2),
/// (r1-r2+h-1)·(2w-1) + (c1-c2+w-1).
std::vector<std::int64_t> relative_position_index(WindowShape window);
/// table[(2h-1)(2w-1)] -> B_p [S, S]
template <typename T>
Tensor<T> build_relative_position_bias(const Tensor<T>& table, WindowShape window);

/// group(i) - group(j) + G - 1 with group(c) = c / C.
std::vector<std::int64_t> relative_group_index(std::size_t groups, std::size_t channels);
/// table[2G-1] -> B_g [G·C, G·C]
template <typename T>
Tensor<T> build_relative_group_bias(const Tensor<T>& table, std::size_t groups,
                                    std::size_t channels);

template <typename T>
struct EdsaParams {
  Tensor<T> w_q, w_k, w_v;     // [D, D]
  Tensor<T> w_qg, w_kg, w_vg;  // [S, S]
  Tensor<T> rpb_table;         // [(2h-1)(2w-1)]
  Tensor<T> rgb_table;         // [2G-1]
  Tensor<T> mlp_w1, mlp_b1;    // [D, 4D], [4D]
  Tensor<T> mlp_w2, mlp_b2;    // [4D, D], [D]
  Tensor<T> ln1_g, ln1_b;      // [D]
  Tensor<T> ln2_g, ln2_b;      // [D]
};

inline constexpr std::size_t kMlpRatio = 4;

/// All weights, biases and tables zero; layer-norm gains one.
template <typename T>
EdsaParams<T> zero_edsa_params(std::size_t groups, std::size_t channels, WindowShape window);

/// Visits parameters in declaration order as fn(name, tensor).
template <typename T, typename Fn>
void visit_parameters(EdsaParams<T>& p, Fn&& fn) {
  fn("w_q", p.w_q);
  fn("w_k", p.w_k);
  fn("w_v", p.w_v);
  fn("w_qg", p.w_qg);
  fn("w_kg", p.w_kg);
  fn("w_vg", p.w_vg);
  fn("rpb_table", p.rpb_table);
  fn("rgb_table", p.rgb_table);
  fn("mlp_w1", p.mlp_w1);
  fn("mlp_b1", p.mlp_b1);
  fn("mlp_w2", p.mlp_w2);
  fn("mlp_b2", p.mlp_b2);
  fn("ln1_g", p.ln1_g);
  fn("ln1_b", p.ln1_b);
  fn("ln2_g", p.ln2_g);
  fn("ln2_b", p.ln2_b);
}

/// Constant [M, S, S] logits mask: -inf on padded key slots. Undefined
/// tensor when the layout has no padding.
template <typename T>
Tensor<T> key_padding_mask(const WindowLayout& layout);

/// Softmax(Q Kᵀ / sqrt(D) + B_p [+ mask]) V per window, Q,K,V = x W_{q,k,v}.
/// x is [M, S, D] (or [S, D]).
template <typename T>
Tensor<T> spatial_self_attention(const Tensor<T>& x, const EdsaParams<T>& params,
                                 const Tensor<T>& pos_bias, const Tensor<T>& mask = {});

/// Channel-to-channel attention per window: Q_g,K_g,V_g = xᵀ W_{qg,kg,vg}
/// ([D, S] each), Softmax(Q_g K_gᵀ / sqrt(S) + B_g) V_g, transposed back.
template <typename T>
Tensor<T> group_self_attention(const Tensor<T>& x, const EdsaParams<T>& params,
                               const Tensor<T>& group_bias);

template <typename T>
struct EdsaState {
  Tensor<T> spatial;  // F_s
  Tensor<T> group;    // F_g
};

/// One block on a token grid described by `layout`. For Edsa:
///   a = SSA(LN1(F_s + F_g)); F_s' = F_s + a; F_g' = F_g + GSA(a);
///   F_s'' = F_s' + MLP(LN2(F_s' + F_g')); returns (F_s'', F_g').
/// Single-stream variants fold F_g into F_s and return F_g = 0.
template <typename T>
EdsaState<T> edsa_block_forward(const EdsaState<T>& state, const EdsaParams<T>& params,
                                const WindowLayout& layout, std::size_t groups,
                                BlockVariant variant = BlockVariant::Edsa);

}  // namespace getnet
