// Copyright 2026 The slimcwd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SLIMCWD_ERROR_HPP
#define SLIMCWD_ERROR_HPP

#include <stdexcept>
#include <string>

namespace slimcwd {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Graph topology or channel bookkeeping is inconsistent.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the operation's domain (epoch out of range, ratio >= 1, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A pruning plan gives different fates to channels that must share one.
class CouplingError : public StructuralError {
 public:
  using StructuralError::StructuralError;
};

/// A pruning plan would leave a layer with no channels.
class DegenerateLayerError : public StructuralError {
 public:
  using StructuralError::StructuralError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value. `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// A required input artifact (checkpoint, plan, report) does not exist.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace slimcwd

#endif  // SLIMCWD_ERROR_HPP
