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

// Batched TBPTT gradient: one window per episode, each starting from that
// episode's carried belief state. Two implementations share one contract:
//
//  * BatchGradientSerial   - reference loop, kept for tests and benchmarks.
//  * BatchGradientParallel - OpenMP over windows.
//
// Both compute every window into its own buffer and reduce the buffers in
// task order, so their results are bit-identical for any thread count.

#include <span>

#include "morphstate/estimator.hpp"

namespace morphstate {

struct WindowTask {
  Eigen::Ref<const RowMatrix> inputs;   // normalized, T x 21
  Eigen::Ref<const RowMatrix> targets;  // normalized, T x 45
};

struct BatchResult {
  double loss = 0.0;  // unscaled sum over all steps of all windows
  Eigen::Index steps = 0;
};

// `states` holds one entry per task: read as the window's initial state,
// overwritten with its final state. `grad` is overwritten with
// scale * d(sum of window losses)/d(weights).
BatchResult BatchGradientSerial(const Weights& weights, std::span<const WindowTask> tasks,
                                double scale, std::span<BeliefState> states, Weights& grad);

BatchResult BatchGradientParallel(const Weights& weights, std::span<const WindowTask> tasks,
                                  double scale, std::span<BeliefState> states, Weights& grad);

// Threads OpenMP will use for the parallel kernel (1 without OpenMP).
int KernelThreadCount();

}  // namespace morphstate
