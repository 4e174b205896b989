// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "getnet/error.hpp"

namespace getnet {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::GroupMismatch: return "GroupMismatch";
    case ErrorCode::GroupArithmeticError: return "GroupArithmeticError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what,
             std::optional<std::size_t> index)
    : std::runtime_error(std::string(to_string(code)) + ": " + what),
      code_(code),
      index_(index) {}

}  // namespace getnet
