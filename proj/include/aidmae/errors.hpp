/*
 * Copyright 2026 The AID-MAE Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace aidmae {

// Base class; the CLI maps each subclass onto an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or usage (exit 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing, malformed or inconsistent input data (exit 2).
class DataError : public Error {
 public:
  using Error::Error;
};

// Violated precondition inside the library.
class ContractError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

class DomainError : public ContractError {
 public:
  using ContractError::ContractError;
};

// A metric that is not defined for the given input (e.g. AUROC with one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// Training diverged or failed to make progress (exit 3).
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace aidmae
