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

#include "morphstate/gradient_kernels.hpp"

#include <vector>

#include "morphstate/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace morphstate {
namespace {

void CheckStates(std::span<const WindowTask> tasks, std::span<BeliefState> states) {
  if (tasks.size() != states.size()) {
    throw Error(ErrorKind::kShapeMismatch, "one belief state per window task is required");
  }
}

BatchResult Reduce(std::span<const Weights> partial, std::span<const WindowResult> results,
                   std::span<const WindowTask> tasks, std::span<BeliefState> states,
                   Weights& grad) {
  BatchResult out;
  grad.SetZero();
  for (std::size_t i = 0; i < partial.size(); ++i) {
    grad.flat() += partial[i].flat();
    out.loss += results[i].loss;
    out.steps += tasks[i].inputs.rows();
    states[i] = results[i].final_state;
  }
  return out;
}

}  // namespace

BatchResult BatchGradientSerial(const Weights& weights, std::span<const WindowTask> tasks,
                                double scale, std::span<BeliefState> states, Weights& grad) {
  CheckStates(tasks, states);
  std::vector<Weights> partial(tasks.size());
  std::vector<WindowResult> results(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    results[i] = WindowGradient(weights, tasks[i].inputs, tasks[i].targets, states[i], scale,
                                partial[i]);
  }
  return Reduce(partial, results, tasks, states, grad);
}

BatchResult BatchGradientParallel(const Weights& weights, std::span<const WindowTask> tasks,
                                  double scale, std::span<BeliefState> states, Weights& grad) {
  CheckStates(tasks, states);
  std::vector<Weights> partial(tasks.size());
  std::vector<WindowResult> results(tasks.size());
  const auto n = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    results[k] = WindowGradient(weights, tasks[k].inputs, tasks[k].targets, states[k], scale,
                                partial[k]);
  }
  return Reduce(partial, results, tasks, states, grad);
}

int KernelThreadCount() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace morphstate
