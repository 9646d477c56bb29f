// Copyright 2026 The morphstate Authors
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

namespace morphstate {

enum class ErrorKind {
  kDegenerateFrame,
  kInvalidAlpha,
  kTooShort,
  kEmptyDataset,
  kShapeMismatch,
  kDuplicatePoints,
  kEmptyCluster,
  kNonPositiveWidth,
  kInvalidScenario,
  kInvalidConfig,
  kSchemaVersionMismatch,
  kCorruptRecord,
  kZeroVector,
  kIo,
};

const char* ErrorKindName(ErrorKind kind);

// All library failures are reported through this type; `kind()` lets callers
// and tests distinguish the failure modes without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// CorruptRecord also reports the 1-based line of the offending record.
class CorruptRecordError : public Error {
 public:
  CorruptRecordError(std::size_t line, const std::string& message)
      : Error(ErrorKind::kCorruptRecord,
              "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace morphstate
