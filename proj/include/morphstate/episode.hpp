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

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "morphstate/geometry.hpp"
#include "morphstate/layout.hpp"

namespace morphstate {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using FramePose = FrameBasis;

inline constexpr int kEpisodeSchemaVersion = 1;

struct EpisodeMeta {
  std::string scenario;
  std::uint64_t seed = 0;
  double dt = kDefaultDt;
  int schema_version = kEpisodeSchemaVersion;
  // 0 is the clean recording; 1.. are augmented copies.
  int variant = 0;
  std::string split = "train";

  // Identity of the underlying recording, shared by all augmented variants.
  std::string SourceId() const { return scenario + "#" + std::to_string(seed); }
};

// Time-aligned records of one run. Row k of every matrix belongs to time[k].
struct Episode {
  EpisodeMeta meta;
  std::vector<double> time;
  RowMatrix inputs;   // N x 21
  RowMatrix targets;  // N x 45
  std::vector<FramePose> poses;
  RowMatrix markers;  // N x 36, world coordinates of the 12 markers

  std::size_t size() const { return time.size(); }
  void Resize(std::size_t n);
};

}  // namespace morphstate
