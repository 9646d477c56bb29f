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

#include <filesystem>

#include "morphstate/estimator.hpp"

namespace morphstate {

// Stateful 20 Hz inference: normalize -> forward -> denormalize with the
// belief threaded between calls. One stream per robot; not thread-safe.
class InferenceStream {
 public:
  struct Output {
    OutputVector estimate;  // physical units
    BeliefState belief;
    bool gap = false;       // a sample was missing before this one
  };

  explicit InferenceStream(const ModelParams& params, double dt = kDefaultDt);

  // A timestamp more than 1.5 dt after the previous one flags a StreamGap on
  // the output; the belief is carried through regardless.
  Output Step(double timestamp, const Eigen::Ref<const Eigen::VectorXd>& sensors);
  void Reset();

  std::size_t gap_count() const { return gaps_; }
  const BeliefState& belief() const { return state_; }

 private:
  const ModelParams* params_;
  double dt_;
  BeliefState state_;
  bool started_ = false;
  double last_time_ = 0.0;
  std::size_t gaps_ = 0;
};

// Runs the stream over every row of `inputs` (belief reset first); returns
// N x 45 estimates in physical units.
RowMatrix PredictSequence(const ModelParams& params, const Eigen::Ref<const RowMatrix>& inputs);

// ---- parameter files ---------------------------------------------------------
//
// JSON document:
//   { "format": "morphstate-params", "version": 1,
//     "architecture": {"input": 21, "latent": 32, "hidden": 32, "gate": 2, "output": 45},
//     "layers": [ {"name": "encoder.weight", "shape": [32, 21], "values": [...]}, ... ],
//     "input_norm": {"mean": [...], "std": [...]},
//     "output_norm": {"mean": [...], "std": [...]},
//     "training_sources": ["scenario#seed", ...] }
// Values are row-major and written in shortest round-trip form, so a
// save/load cycle is bit-exact.

inline constexpr int kParamsFormatVersion = 1;

void SaveParams(const ModelParams& params, const std::filesystem::path& path);
// Throws kSchemaVersionMismatch, kShapeMismatch or kIo.
ModelParams LoadParams(const std::filesystem::path& path);

}  // namespace morphstate
