// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ral {

// Shape mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Violated precondition of an operation (empty input, B < 2, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite values or numerically invalid input.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed, inconsistent or corrupt dataset / checkpoint.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration (unknown key, bad value).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace ral
