// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace diloco {

/// Shapes or layouts that cannot be combined.
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A precondition on call arguments was violated (empty lists, zero counts).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid experiment configuration. `field()` names the offending path,
/// e.g. `stages[1].H`.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)),
        message_(message) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string field_;
  std::string message_;
};

}  // namespace diloco
