// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "getnet/edsa.hpp"

#include <cmath>
#include <limits>

#include "getnet/error.hpp"
#include "getnet/ops.hpp"

namespace getnet {

BlockVariant parse_block_variant(std::string_view name) {
  if (name == "ssa_only") return BlockVariant::SsaOnly;
  if (name == "parallel") return BlockVariant::Parallel;
  if (name == "series_gsa_first") return BlockVariant::SeriesGsaFirst;
  if (name == "series_ssa_first") return BlockVariant::SeriesSsaFirst;
  if (name == "edsa") return BlockVariant::Edsa;
  throw Error(ErrorCode::ConfigError, "unknown block variant '" + std::string(name) + "'");
}

std::string_view to_string(BlockVariant v) {
  switch (v) {
    case BlockVariant::SsaOnly: return "ssa_only";
    case BlockVariant::Parallel: return "parallel";
    case BlockVariant::SeriesGsaFirst: return "series_gsa_first";
    case BlockVariant::SeriesSsaFirst: return "series_ssa_first";
    case BlockVariant::Edsa: return "edsa";
  }
  return "edsa";
}

WindowLayout make_window_layout(std::size_t rows, std::size_t cols, WindowShape window) {
  if (rows == 0 || cols == 0 || window.h == 0 || window.w == 0) {
    throw Error(ErrorCode::ShapeMismatch, "window layout needs non-empty grid and window");
  }
  WindowLayout l;
  l.rows = rows;
  l.cols = cols;
  l.window = window;
  const std::size_t wr = (rows + window.h - 1) / window.h;
  const std::size_t wc = (cols + window.w - 1) / window.w;
  l.windows = wr * wc;
  const std::size_t s = window.area();
  l.partition_index.assign(l.windows * s, -1);
  l.reverse_index.assign(rows * cols, -1);
  for (std::size_t m = 0; m < l.windows; ++m) {
    const std::size_t r0 = (m / wc) * window.h;
    const std::size_t c0 = (m % wc) * window.w;
    for (std::size_t k = 0; k < s; ++k) {
      const std::size_t r = r0 + k / window.w;
      const std::size_t c = c0 + k % window.w;
      if (r >= rows || c >= cols) continue;
      const std::size_t token = r * cols + c;
      l.partition_index[m * s + k] = static_cast<std::int64_t>(token);
      l.reverse_index[token] = static_cast<std::int64_t>(m * s + k);
    }
  }
  return l;
}

template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, const WindowLayout& layout) {
  if (x.rank() != 2 || x.dim(0) != layout.rows * layout.cols) {
    throw Error(ErrorCode::ShapeMismatch,
                "window_partition: " + shape_str(x.shape()) + " is not a " +
                    std::to_string(layout.rows) + "x" + std::to_string(layout.cols) + " grid");
  }
  return ops::reshape(ops::gather_rows(x, layout.partition_index),
                      {layout.windows, layout.slots(), x.dim(1)});
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& x, const WindowLayout& layout) {
  if (x.rank() != 3 || x.dim(0) != layout.windows || x.dim(1) != layout.slots()) {
    throw Error(ErrorCode::ShapeMismatch, "window_reverse: " + shape_str(x.shape()) +
                                              " does not match the window layout");
  }
  auto flat = ops::reshape(x, {layout.windows * layout.slots(), x.dim(2)});
  return ops::gather_rows(flat, layout.reverse_index);
}

std::vector<std::int64_t> relative_position_index(WindowShape window) {
  const std::size_t s = window.area();
  const auto h = static_cast<std::int64_t>(window.h);
  const auto w = static_cast<std::int64_t>(window.w);
  std::vector<std::int64_t> idx(s * s);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const auto r1 = static_cast<std::int64_t>(i / window.w), c1 = static_cast<std::int64_t>(i % window.w);
      const auto r2 = static_cast<std::int64_t>(j / window.w), c2 = static_cast<std::int64_t>(j % window.w);
      idx[i * s + j] = (r1 - r2 + h - 1) * (2 * w - 1) + (c1 - c2 + w - 1);
    }
  }
  return idx;
}

template <typename T>
Tensor<T> build_relative_position_bias(const Tensor<T>& table, WindowShape window) {
  const std::size_t expected = (2 * window.h - 1) * (2 * window.w - 1);
  if (table.rank() != 1 || table.numel() != expected) {
    throw Error(ErrorCode::ShapeMismatch, "relative position table needs " +
                                              std::to_string(expected) + " entries, got " +
                                              shape_str(table.shape()));
  }
  const std::size_t s = window.area();
  return ops::reshape(ops::gather_rows(table, relative_position_index(window)), {s, s});
}

std::vector<std::int64_t> relative_group_index(std::size_t groups, std::size_t channels) {
  const std::size_t d = groups * channels;
  std::vector<std::int64_t> idx(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      idx[i * d + j] = static_cast<std::int64_t>(i / channels) -
                       static_cast<std::int64_t>(j / channels) +
                       static_cast<std::int64_t>(groups) - 1;
  return idx;
}

template <typename T>
Tensor<T> build_relative_group_bias(const Tensor<T>& table, std::size_t groups,
                                    std::size_t channels) {
  if (groups == 0 || table.rank() != 1 || table.numel() != 2 * groups - 1) {
    throw Error(ErrorCode::ShapeMismatch, "relative group table needs 2G-1 entries, got " +
                                              shape_str(table.shape()));
  }
  const std::size_t d = groups * channels;
  return ops::reshape(ops::gather_rows(table, relative_group_index(groups, channels)), {d, d});
}

template <typename T>
EdsaParams<T> zero_edsa_params(std::size_t groups, std::size_t channels, WindowShape window) {
  const std::size_t d = groups * channels;
  const std::size_t s = window.area();
  const std::size_t hidden = kMlpRatio * d;
  EdsaParams<T> p;
  p.w_q = Tensor<T>::zeros({d, d});
  p.w_k = Tensor<T>::zeros({d, d});
  p.w_v = Tensor<T>::zeros({d, d});
  p.w_qg = Tensor<T>::zeros({s, s});
  p.w_kg = Tensor<T>::zeros({s, s});
  p.w_vg = Tensor<T>::zeros({s, s});
  p.rpb_table = Tensor<T>::zeros({(2 * window.h - 1) * (2 * window.w - 1)});
  p.rgb_table = Tensor<T>::zeros({2 * groups - 1});
  p.mlp_w1 = Tensor<T>::zeros({d, hidden});
  p.mlp_b1 = Tensor<T>::zeros({hidden});
  p.mlp_w2 = Tensor<T>::zeros({hidden, d});
  p.mlp_b2 = Tensor<T>::zeros({d});
  p.ln1_g = Tensor<T>::full({d}, T(1));
  p.ln1_b = Tensor<T>::zeros({d});
  p.ln2_g = Tensor<T>::full({d}, T(1));
  p.ln2_b = Tensor<T>::zeros({d});
  return p;
}

template <typename T>
Tensor<T> key_padding_mask(const WindowLayout& layout) {
  if (!layout.padded()) return {};
  const std::size_t m = layout.windows, s = layout.slots();
  std::vector<T> mask(m * s * s, T(0));
  for (std::size_t w = 0; w < m; ++w)
    for (std::size_t k = 0; k < s; ++k)
      if (layout.partition_index[w * s + k] < 0)
        for (std::size_t q = 0; q < s; ++q)
          mask[(w * s + q) * s + k] = -std::numeric_limits<T>::infinity();
  return Tensor<T>::from({m, s, s}, std::move(mask));
}

namespace {

template <typename T>
Tensor<T> as_batched(const Tensor<T>& x) {
  if (x.rank() == 2) return ops::reshape(x, {1, x.dim(0), x.dim(1)});
  if (x.rank() != 3) {
    throw Error(ErrorCode::ShapeMismatch, "attention input must be [M,S,D] or [S,D], got " +
                                              shape_str(x.shape()));
  }
  return x;
}

template <typename T>
Tensor<T> like_input(const Tensor<T>& y, const Tensor<T>& x) {
  return x.rank() == 2 ? ops::reshape(y, x.shape()) : y;
}

}  // namespace

template <typename T>
Tensor<T> spatial_self_attention(const Tensor<T>& x, const EdsaParams<T>& params,
                                 const Tensor<T>& pos_bias, const Tensor<T>& mask) {
  auto xb = as_batched(x);
  const std::size_t s = xb.dim(1), d = xb.dim(2);
  if (params.w_q.shape() != Shape{d, d} || pos_bias.shape() != Shape{s, s}) {
    throw Error(ErrorCode::ShapeMismatch, "spatial_self_attention: parameter shapes do not match " +
                                              shape_str(xb.shape()));
  }
  auto q = ops::bmm(xb, params.w_q);
  auto k = ops::bmm(xb, params.w_k);
  auto v = ops::bmm(xb, params.w_v);
  auto logits = ops::scale(ops::bmm(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(d)));
  logits = ops::add_broadcast(logits, pos_bias);
  if (mask.defined()) logits = ops::add(logits, mask);
  return like_input(ops::bmm(ops::softmax_lastdim(logits), v), x);
}

template <typename T>
Tensor<T> group_self_attention(const Tensor<T>& x, const EdsaParams<T>& params,
                               const Tensor<T>& group_bias) {
  auto xb = as_batched(x);
  const std::size_t s = xb.dim(1), d = xb.dim(2);
  if (params.w_qg.shape() != Shape{s, s} || group_bias.shape() != Shape{d, d}) {
    throw Error(ErrorCode::ShapeMismatch, "group_self_attention: parameter shapes do not match " +
                                              shape_str(xb.shape()));
  }
  // xᵀ W: [D, S]
  auto qg = ops::bmm(xb, params.w_qg, true, false);
  auto kg = ops::bmm(xb, params.w_kg, true, false);
  auto vg = ops::bmm(xb, params.w_vg, true, false);
  auto logits = ops::scale(ops::bmm(qg, kg, false, true), 1.0 / std::sqrt(static_cast<double>(s)));
  logits = ops::add_broadcast(logits, group_bias);
  auto out = ops::bmm(ops::softmax_lastdim(logits), vg);  // [M, D, S]
  return like_input(ops::transpose_last2(out), x);
}

template <typename T>
EdsaState<T> edsa_block_forward(const EdsaState<T>& state, const EdsaParams<T>& params,
                                const WindowLayout& layout, std::size_t groups,
                                BlockVariant variant) {
  const Tensor<T>& fs = state.spatial;
  const Tensor<T>& fg = state.group;
  if (fs.rank() != 2 || fs.shape() != fg.shape() || fs.dim(0) != layout.rows * layout.cols ||
      groups == 0 || fs.dim(1) % groups != 0) {
    throw Error(ErrorCode::ShapeMismatch, "edsa_block_forward: bad state " + shape_str(fs.shape()));
  }
  const std::size_t channels = fs.dim(1) / groups;
  const auto pos_bias = build_relative_position_bias(params.rpb_table, layout.window);
  const auto group_bias = build_relative_group_bias(params.rgb_table, groups, channels);
  const auto mask = key_padding_mask<T>(layout);

  auto ssa = [&](const Tensor<T>& windows) {
    return window_reverse(spatial_self_attention(windows, params, pos_bias, mask), layout);
  };
  // GSA mixes slots, so padded slots must hold zeros on entry.
  auto gsa = [&](const Tensor<T>& windows) {
    return window_reverse(group_self_attention(windows, params, group_bias), layout);
  };
  auto mlp = [&](const Tensor<T>& x) {
    auto h = ops::gelu(ops::linear(x, params.mlp_w1, params.mlp_b1));
    return ops::linear(h, params.mlp_w2, params.mlp_b2);
  };

  const auto x = ops::add(fs, fg);
  const auto z = window_partition(ops::layer_norm(x, params.ln1_g, params.ln1_b), layout);

  if (variant == BlockVariant::Edsa) {
    const auto a = ssa(z);
    const auto fs1 = ops::add(fs, a);
    const auto fg1 = ops::add(fg, gsa(window_partition(a, layout)));
    const auto h = ops::layer_norm(ops::add(fs1, fg1), params.ln2_g, params.ln2_b);
    return {ops::add(fs1, mlp(h)), fg1};
  }

  Tensor<T> attn;
  switch (variant) {
    case BlockVariant::SsaOnly:
      attn = ssa(z);
      break;
    case BlockVariant::Parallel:
      attn = ops::add(ssa(z), gsa(z));
      break;
    case BlockVariant::SeriesGsaFirst:
      attn = ssa(window_partition(gsa(z), layout));
      break;
    case BlockVariant::SeriesSsaFirst:
      attn = gsa(window_partition(ssa(z), layout));
      break;
    case BlockVariant::Edsa:
      break;
  }
  const auto y = ops::add(x, attn);
  const auto out = ops::add(y, mlp(ops::layer_norm(y, params.ln2_g, params.ln2_b)));
  return {out, Tensor<T>::zeros(out.shape())};
}

#define GETNET_INSTANTIATE_EDSA(T)                                                             \
  template Tensor<T> window_partition(const Tensor<T>&, const WindowLayout&);                  \
  template Tensor<T> window_reverse(const Tensor<T>&, const WindowLayout&);                    \
  template Tensor<T> build_relative_position_bias(const Tensor<T>&, WindowShape);              \
  template Tensor<T> build_relative_group_bias(const Tensor<T>&, std::size_t, std::size_t);    \
  template EdsaParams<T> zero_edsa_params(std::size_t, std::size_t, WindowShape);              \
  template Tensor<T> key_padding_mask(const WindowLayout&);                                    \
  template Tensor<T> spatial_self_attention(const Tensor<T>&, const EdsaParams<T>&,            \
                                            const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> group_self_attention(const Tensor<T>&, const EdsaParams<T>&,              \
                                          const Tensor<T>&);                                   \
  template EdsaState<T> edsa_block_forward(const EdsaState<T>&, const EdsaParams<T>&,          \
                                           const WindowLayout&, std::size_t, BlockVariant);

GETNET_INSTANTIATE_EDSA(float)
GETNET_INSTANTIATE_EDSA(double)

#undef GETNET_INSTANTIATE_EDSA

}  // namespace getnet
