// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "getnet/tensor.hpp"

namespace getnet {

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  /// Coordinates whose one-sided differences disagree (max-pool switches,
  /// kinks); excluded from the comparison and reported.
  std::size_t skipped = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double eps = 1e-3;
  double tol = 1e-4;
  /// Check at most this many coordinates per tensor (evenly strided);
  /// 0 checks all.
  std::size_t max_coords = 0;
  /// Per-coordinate error is |a - n| / max(|a|, |n|, floor), where
  /// floor = floor_ratio · max_j |n_j| over the tensor. Keeps entries that
  /// are orders of magnitude below the tensor's gradient scale from being
  /// judged on pure truncation noise.
  double floor_ratio = 1e-3;
  /// One-sided slopes differing by more than this fraction of the tensor's
  /// gradient scale mark a kink.
  double kink_ratio = 0.5;
  /// Combine steps eps and eps/2 so the truncation error drops from
  /// O(eps²) to O(eps⁴).
  bool richardson = true;
};

/// Central-difference check of d f / d x. `f` recomputes the scalar loss
/// from the current values of `x` (which is perturbed in place and
/// restored). Analytic gradients come from one backward() pass.
template <typename T>
GradCheckReport finite_diff_check(const std::function<Tensor<T>()>& f, Tensor<T>& x,
                                  const GradCheckOptions& opts = {},
                                  const std::string& name = "x");

/// Checks every tensor in `params` against the same loss; one report each.
template <typename T>
std::vector<GradCheckReport> finite_diff_check_all(
    const std::function<Tensor<T>()>& f,
    std::vector<std::pair<std::string, Tensor<T>>>& params,
    const GradCheckOptions& opts = {});

}  // namespace getnet
