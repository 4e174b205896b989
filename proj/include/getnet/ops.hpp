// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "getnet/tensor.hpp"

// Differentiable operations. All reductions and convolution sums accumulate
// in double regardless of T. Shape errors throw Error{ShapeMismatch}.
namespace getnet::ops {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, double factor);

/// a + b where b's shape is a trailing suffix of a's (bias rows, bias
/// matrices shared across windows).
template <typename T> Tensor<T> add_broadcast(const Tensor<T>& a, const Tensor<T>& b);

/// 2-D product op(a)·op(b).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false,
                 bool trans_b = false);

/// Batched product over a leading batch axis. Either operand may be rank 2,
/// in which case it is shared by every batch item.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false,
              bool trans_b = false);

template <typename T> Tensor<T> transpose_last2(const Tensor<T>& x);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Row-wise softmax over the last axis, max-subtracted. -inf entries get
/// zero mass.
template <typename T> Tensor<T> softmax_lastdim(const Tensor<T>& x);

/// Normalizes over the last axis, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, double eps = 1e-5);

/// Exact (erf) GELU.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);

/// x[rows, in] · w[in, out] + b[out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

/// Per-group linear map: x[rows, G·in], w[G, in, out], b[G, out].
template <typename T>
Tensor<T> grouped_linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

/// Stride-1 2-D cross-correlation on x[Cin, H, W] where output group j reads
/// the input channel window [j·in_stride, j·in_stride + w.dim(1)). Channels
/// past Cin read as zero. w is [Cout, window, kh, kw], b is [Cout].
template <typename T>
Tensor<T> channel_window_conv2d(const Tensor<T>& x, const Tensor<T>& w,
                                const Tensor<T>& b, std::size_t out_groups,
                                std::size_t in_stride, std::size_t pad);

/// Standard grouped convolution; throws GroupMismatch when Cin or Cout is
/// not divisible by `groups`.
template <typename T>
Tensor<T> grouped_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         std::size_t groups, std::size_t pad = 1);

/// Max pooling on x[C, H, W]; ties resolve to the first index in scan order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t kernel = 3, std::size_t stride = 2,
                    std::size_t pad = 1);

/// out[i] = x[index[i]] along axis 0, or zeros where index[i] < 0.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::int64_t>& index);

/// [rows, D] -> [D]
template <typename T> Tensor<T> mean_rows(const Tensor<T>& x);
template <typename T> Tensor<T> sum(const Tensor<T>& x);

/// Mean cross-entropy of logits [B, n] (or [n]) against integer labels.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels);

/// Token-major [H·W, C] <-> channel-first [C, H, W].
template <typename T>
Tensor<T> tokens_to_chw(const Tensor<T>& x, std::size_t h, std::size_t w);
template <typename T> Tensor<T> chw_to_tokens(const Tensor<T>& x);

}  // namespace getnet::ops
