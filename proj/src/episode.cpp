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

#include "morphstate/episode.hpp"

namespace morphstate {

void Episode::Resize(std::size_t n) {
  const auto rows = static_cast<Eigen::Index>(n);
  time.assign(n, 0.0);
  inputs.setZero(rows, kInputWidth);
  targets.setZero(rows, kOutputWidth);
  poses.assign(n, FramePose{});
  markers.setZero(rows, 3 * output::kFramePointCount);
}

}  // namespace morphstate
