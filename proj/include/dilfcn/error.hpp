// Copyright 2026 The dilfcn Authors.
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dilfcn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or layer shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced or consumed by an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed graph description or graph that fails validation.
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. Carries the byte (or line) position of the fault.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset, const char* unit = "offset")
      : Error(what + " (at " + unit + " " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Bad input data (labels out of range, missing files, I/O failure).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace dilfcn
