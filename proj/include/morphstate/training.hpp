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
#include <functional>
#include <span>
#include <vector>

#include "morphstate/estimator.hpp"

namespace morphstate {

struct TrainConfig {
  int tbptt_len = 50;
  double learning_rate = 1e-3;
  int batch_size = 8;
  int epochs = 40;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
  bool parallel = true;

  // Throws kInvalidConfig.
  void Validate() const;
};

// Adaptive moment estimation over the flat parameter vector.
class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon);
  void Step(Weights& weights, const Weights& grad);
  std::int64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  Weights m_;
  Weights v_;
};

// Rescales grad in place so its 2-norm is at most max_norm; returns the
// norm before clipping.
double ClipGradientNorm(Weights& grad, double max_norm);

// Normalized copy of a dataset, ready for windowing.
struct NormalizedSet {
  std::vector<RowMatrix> inputs;
  std::vector<RowMatrix> targets;
};
NormalizedSet NormalizeDataset(std::span<const Episode> episodes, const NormStats& in,
                               const NormStats& out);

// Mean per-step loss with the belief reset at every episode start.
double MeanLoss(const Weights& weights, const NormalizedSet& data);

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean per-step loss accumulated during the epoch
};

struct TrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<EpochStats> epochs;
};

using EpochCallback = std::function<void(const EpochStats&, const ModelParams&)>;

// Fits normalization on the dataset, initializes weights from config.seed and
// runs TBPTT with the belief carried across windows and reset per episode.
// Deterministic for a fixed seed, independent of thread count.
// Throws kEmptyDataset on an empty dataset.
ModelParams Train(std::span<const Episode> episodes, const TrainConfig& config,
                  TrainReport* report = nullptr, const EpochCallback& on_epoch = {});

}  // namespace morphstate
