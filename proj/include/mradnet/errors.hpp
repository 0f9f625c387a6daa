// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mradnet {

/// Tensor dimensions do not line up with what an operation requires.
class ShapeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// One or more configuration fields are invalid. All failures are collected
/// so callers can report them together.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
  explicit ConfigError(const std::string& problem)
      : ConfigError(std::vector<std::string>{problem}) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }
  std::vector<std::string> problems_;
};

/// Input files are missing, malformed, or inconsistent.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value appeared where a finite one is required (NaN loss,
/// NaN gradient, ...).
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

}  // namespace mradnet
