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

#include "morphstate/error.hpp"

namespace morphstate {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDegenerateFrame: return "DegenerateFrame";
    case ErrorKind::kInvalidAlpha: return "InvalidAlpha";
    case ErrorKind::kTooShort: return "TooShort";
    case ErrorKind::kEmptyDataset: return "EmptyDataset";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kDuplicatePoints: return "DuplicatePoints";
    case ErrorKind::kEmptyCluster: return "EmptyCluster";
    case ErrorKind::kNonPositiveWidth: return "NonPositiveWidth";
    case ErrorKind::kInvalidScenario: return "InvalidScenario";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kSchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorKind::kCorruptRecord: return "CorruptRecord";
    case ErrorKind::kZeroVector: return "ZeroVector";
    case ErrorKind::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace morphstate
