// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "getnet/tensor.hpp"

namespace getnet {

/// Group arithmetic of one overlapping group convolution.
///   group_kernel (GK) = min(G/2 + 1, 3), group_stride (GS) = min(ceil(G/2) - 1, 2);
///   when G/2 == 1 the single output group spans all G inputs.
struct GtaGeometry {
  std::size_t in_groups = 0;         // G
  std::size_t in_channels = 0;       // C, per group
  std::size_t out_groups = 0;        // floor(G/2)
  std::size_t group_kernel = 0;      // GK
  std::size_t group_stride = 0;      // GS
  std::size_t slots = 0;             // GS·(out_groups-1) + GK
  std::size_t pad_groups = 0;        // zero groups appended at the high end
  std::size_t out_channels = 0;      // per output group: 2G·C / floor(G/2)

  std::size_t in_width() const { return in_groups * in_channels; }
  std::size_t out_width() const { return out_groups * out_channels; }
  /// Input groups [first, first + GK) feed output group j.
  std::size_t first_input_group(std::size_t j) const { return j * group_stride; }
};

/// Throws Error{GroupArithmeticError} for G < 2 or a non-integral output
/// group width.
GtaGeometry gta_geometry(std::size_t groups, std::size_t channels);

template <typename T>
struct GtaParams {
  Tensor<T> conv_w;  // [2G·C, GK·C, 3, 3]
  Tensor<T> conv_b;  // [2G·C]
  Tensor<T> ln_g;    // [2G·C]
  Tensor<T> ln_b;    // [2G·C]
};

template <typename T>
GtaParams<T> zero_gta_params(const GtaGeometry& geom);

template <typename T, typename Fn>
void visit_parameters(GtaParams<T>& p, Fn&& fn) {
  fn("conv_w", p.conv_w);
  fn("conv_b", p.conv_b);
  fn("ln_g", p.ln_g);
  fn("ln_b", p.ln_b);
}

/// [rows·cols, G·C] -> [rows·cols, 2G·C]; 3×3 kernel, pad 1, stride 1.
template <typename T>
Tensor<T> overlapping_group_conv(const Tensor<T>& x, std::size_t rows, std::size_t cols,
                                 const GtaParams<T>& params, const GtaGeometry& geom);

template <typename T>
struct GtaOutput {
  Tensor<T> tokens;  // [out_rows·out_cols, 2G·C]
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// overlapping conv -> layer norm over channels -> 3×3 max pool, stride 2,
/// pad 1 (ceil-halves the grid).
template <typename T>
GtaOutput<T> gta_forward(const Tensor<T>& x, std::size_t rows, std::size_t cols,
                         const GtaParams<T>& params, const GtaGeometry& geom);

}  // namespace getnet
