// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace getnet {

enum class ErrorCode {
  MalformedRecord,
  OutOfRange,
  NonMonotonicTime,
  IoError,
  IndexOutOfRange,
  ShapeMismatch,
  GroupMismatch,
  GroupArithmeticError,
  ConfigError,
  NotScalar,
  EmptyDataset,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library. `index()` carries the offending
/// element (event index, record line, ...) when one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::size_t> index = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
};

}  // namespace getnet
