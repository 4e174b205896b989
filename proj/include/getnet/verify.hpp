// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "getnet/gradcheck.hpp"
#include "getnet/model.hpp"

// Finite-difference suites shared by the CLI and the test binaries. All run
// in double precision on small random instances.
namespace getnet {

enum class GradScope { Ops, Block, Model };

GradScope parse_grad_scope(std::string_view name);
std::string_view to_string(GradScope scope);

/// Tolerance applied by each scope: 1e-4 for ops and blocks, 1e-3 for the
/// full model.
double grad_scope_tolerance(GradScope scope);

std::vector<GradCheckReport> gradcheck_ops(std::uint64_t seed = 0);
std::vector<GradCheckReport> gradcheck_block(std::uint64_t seed = 0);
std::vector<GradCheckReport> gradcheck_model(std::uint64_t seed = 0);
std::vector<GradCheckReport> run_gradcheck(GradScope scope, std::uint64_t seed = 0);

/// Overwrites every parameter with N(0, stddev²) samples so that no path
/// through the model is trivially zero.
template <typename T>
void randomize_parameters(ModelParams<T>& params, std::uint64_t seed, double stddev);

}  // namespace getnet
