// Copyright 2026 The ssldet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace ssldet {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or inconsistent config file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (annotation files, images, datasets).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or binary format violation.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Tensor shape mismatch between an op and its operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced during training or evaluation.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

#define SSLDET_CHECK(cond, ErrType, msg) \
  do {                                    \
    if (!(cond)) throw ErrType(msg);      \
  } while (0)

}  // namespace ssldet
