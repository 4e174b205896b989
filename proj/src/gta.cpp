// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "getnet/gta.hpp"

#include <algorithm>
#include <string>

#include "getnet/error.hpp"
#include "getnet/ops.hpp"

namespace getnet {

GtaGeometry gta_geometry(std::size_t groups, std::size_t channels) {
  if (groups < 2) {
    throw Error(ErrorCode::GroupArithmeticError,
                "group aggregation needs G >= 2, got " + std::to_string(groups));
  }
  if (channels == 0) throw Error(ErrorCode::GroupArithmeticError, "C must be >= 1");
  GtaGeometry g;
  g.in_groups = groups;
  g.in_channels = channels;
  g.out_groups = groups / 2;
  g.group_kernel = std::min<std::size_t>(groups / 2 + 1, 3);
  g.group_stride = std::min<std::size_t>((groups + 1) / 2 - 1, 2);
  if (g.out_groups == 1) g.group_kernel = groups;
  g.slots = g.group_stride * (g.out_groups - 1) + g.group_kernel;
  g.pad_groups = g.slots > groups ? g.slots - groups : 0;
  const std::size_t total_out = 2 * groups * channels;
  if (total_out % g.out_groups != 0) {
    throw Error(ErrorCode::GroupArithmeticError,
                "2G·C = " + std::to_string(total_out) + " does not split into " +
                    std::to_string(g.out_groups) + " groups");
  }
  g.out_channels = total_out / g.out_groups;
  return g;
}

template <typename T>
GtaParams<T> zero_gta_params(const GtaGeometry& geom) {
  const std::size_t out = geom.out_width();
  GtaParams<T> p;
  p.conv_w = Tensor<T>::zeros({out, geom.group_kernel * geom.in_channels, 3, 3});
  p.conv_b = Tensor<T>::zeros({out});
  p.ln_g = Tensor<T>::full({out}, T(1));
  p.ln_b = Tensor<T>::zeros({out});
  return p;
}

template <typename T>
Tensor<T> overlapping_group_conv(const Tensor<T>& x, std::size_t rows, std::size_t cols,
                                 const GtaParams<T>& params, const GtaGeometry& geom) {
  if (x.rank() != 2 || x.dim(0) != rows * cols || x.dim(1) != geom.in_width()) {
    throw Error(ErrorCode::ShapeMismatch, "overlapping_group_conv: input " +
                                              shape_str(x.shape()) + " does not match geometry");
  }
  if (params.conv_w.shape() !=
      Shape{geom.out_width(), geom.group_kernel * geom.in_channels, 3, 3}) {
    throw Error(ErrorCode::ShapeMismatch, "overlapping_group_conv: kernel " +
                                              shape_str(params.conv_w.shape()));
  }
  // Channels past G·C read as the zero padding groups.
  auto y = ops::channel_window_conv2d(ops::tokens_to_chw(x, rows, cols), params.conv_w,
                                      params.conv_b, geom.out_groups,
                                      geom.group_stride * geom.in_channels, 1);
  return ops::chw_to_tokens(y);
}

template <typename T>
GtaOutput<T> gta_forward(const Tensor<T>& x, std::size_t rows, std::size_t cols,
                         const GtaParams<T>& params, const GtaGeometry& geom) {
  auto y = overlapping_group_conv(x, rows, cols, params, geom);
  y = ops::layer_norm(y, params.ln_g, params.ln_b);
  auto pooled = ops::maxpool2d(ops::tokens_to_chw(y, rows, cols), 3, 2, 1);
  GtaOutput<T> out;
  out.rows = pooled.dim(1);
  out.cols = pooled.dim(2);
  out.tokens = ops::chw_to_tokens(pooled);
  return out;
}

template GtaParams<float> zero_gta_params(const GtaGeometry&);
template GtaParams<double> zero_gta_params(const GtaGeometry&);
template Tensor<float> overlapping_group_conv(const Tensor<float>&, std::size_t, std::size_t,
                                              const GtaParams<float>&, const GtaGeometry&);
template Tensor<double> overlapping_group_conv(const Tensor<double>&, std::size_t, std::size_t,
                                               const GtaParams<double>&, const GtaGeometry&);
template GtaOutput<float> gta_forward(const Tensor<float>&, std::size_t, std::size_t,
                                      const GtaParams<float>&, const GtaGeometry&);
template GtaOutput<double> gta_forward(const Tensor<double>&, std::size_t, std::size_t,
                                       const GtaParams<double>&, const GtaGeometry&);

}  // namespace getnet
