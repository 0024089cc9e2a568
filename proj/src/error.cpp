// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ttprompt/error.hpp"

namespace ttprompt {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Capacity: return "capacity";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Io: return "io";
    case ErrorKind::Internal: return "internal";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, std::string_view module, const std::string& message)
    : std::runtime_error("[" + std::string(module) + "] " + message),
      kind_(kind),
      module_(module) {}

void fail(ErrorKind kind, std::string_view module, const std::string& message) {
  throw Error(kind, module, message);
}

}  // namespace ttprompt
