// Copyright 2026 The ttprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ttprompt {

enum class ErrorKind {
  Config,      // invalid configuration or hyperparameters
  Shape,       // dimension mismatch between operands
  Validation,  // malformed input data
  Capacity,    // request exceeds a configured budget
  Numeric,     // non-finite values
  Io,          // file system / format errors
  Internal,
};

const char* to_string(ErrorKind kind) noexcept;

/// Library exception. The message is prefixed with the module that raised it,
/// e.g. "[ept] pattern length 3 does not match bank view count 4".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string_view module, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

[[noreturn]] void fail(ErrorKind kind, std::string_view module, const std::string& message);

}  // namespace ttprompt
