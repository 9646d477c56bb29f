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

#include "morphstate/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "morphstate/error.hpp"
#include "morphstate/gradient_kernels.hpp"
#include "morphstate/random.hpp"

namespace morphstate {

void TrainConfig::Validate() const {
  if (tbptt_len < 1) throw Error(ErrorKind::kInvalidConfig, "tbptt_len must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::kInvalidConfig, "learning_rate must be > 0");
  if (batch_size < 1) throw Error(ErrorKind::kInvalidConfig, "batch_size must be >= 1");
  if (epochs < 0) throw Error(ErrorKind::kInvalidConfig, "epochs must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorKind::kInvalidConfig, "Adam betas must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorKind::kInvalidConfig, "epsilon must be > 0");
  if (!(clip_norm > 0.0)) throw Error(ErrorKind::kInvalidConfig, "clip_norm must be > 0");
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::Step(Weights& weights, const Weights& grad) {
  ++t_;
  auto& m = m_.flat();
  auto& v = v_.flat();
  const auto& g = grad.flat();
  m = beta1_ * m + (1.0 - beta1_) * g;
  v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  weights.flat().array() -=
      lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
}

double ClipGradientNorm(Weights& grad, double max_norm) {
  const double norm = grad.flat().norm();
  if (norm > max_norm) grad.flat() *= max_norm / norm;
  return norm;
}

NormalizedSet NormalizeDataset(std::span<const Episode> episodes, const NormStats& in,
                               const NormStats& out) {
  NormalizedSet set;
  set.inputs.reserve(episodes.size());
  set.targets.reserve(episodes.size());
  for (const auto& e : episodes) {
    set.inputs.push_back(NormalizeRows(e.inputs, in));
    set.targets.push_back(NormalizeRows(e.targets, out));
  }
  return set;
}

double MeanLoss(const Weights& weights, const NormalizedSet& data) {
  double total = 0.0;
  Eigen::Index steps = 0;
  for (std::size_t i = 0; i < data.inputs.size(); ++i) {
    total += WindowLoss(weights, data.inputs[i], data.targets[i], BeliefState{}).loss;
    steps += data.inputs[i].rows();
  }
  return steps > 0 ? total / static_cast<double>(steps) : 0.0;
}

ModelParams Train(std::span<const Episode> episodes, const TrainConfig& config,
                  TrainReport* report, const EpochCallback& on_epoch) {
  config.Validate();
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    if (episodes[i].size() > 0) usable.push_back(i);
  }
  if (usable.empty()) throw Error(ErrorKind::kEmptyDataset, "training set has no samples");

  ModelParams params;
  {
    NormStatsAccumulator in_acc(kInputWidth);
    NormStatsAccumulator out_acc(kOutputWidth);
    std::set<std::string> sources;
    for (const auto i : usable) {
      in_acc.Add(episodes[i].inputs);
      out_acc.Add(episodes[i].targets);
      sources.insert(episodes[i].meta.SourceId());
    }
    params.input_norm = in_acc.Finish();
    params.output_norm = out_acc.Finish();
    params.training_sources.assign(sources.begin(), sources.end());
  }
  params.weights = InitWeights(DeriveSeed(config.seed, 0x1417));

  std::vector<Episode> picked;
  picked.reserve(usable.size());
  for (const auto i : usable) picked.push_back(episodes[i]);
  const NormalizedSet data = NormalizeDataset(picked, params.input_norm, params.output_norm);

  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep = TrainReport{};
  rep.initial_loss = MeanLoss(params.weights, data);

  Adam adam(config.learning_rate, config.beta1, config.beta2, config.epsilon);
  const auto batch_gradient = config.parallel ? &BatchGradientParallel : &BatchGradientSerial;
  const Eigen::Index window = config.tbptt_len;
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  std::vector<std::size_t> order(data.inputs.size());
  Weights grad;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(DeriveSeed(config.seed, 0xe90c, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    Eigen::Index epoch_steps = 0;
    for (std::size_t b = 0; b < order.size(); b += batch_size) {
      const std::size_t end = std::min(order.size(), b + batch_size);
      std::vector<BeliefState> carried(end - b);
      Eigen::Index longest = 0;
      for (std::size_t j = b; j < end; ++j) longest = std::max(longest, data.inputs[order[j]].rows());

      for (Eigen::Index start = 0; start < longest; start += window) {
        std::vector<WindowTask> tasks;
        std::vector<std::size_t> slot;
        Eigen::Index steps = 0;
        for (std::size_t j = b; j < end; ++j) {
          const auto& x = data.inputs[order[j]];
          if (start >= x.rows()) continue;
          const Eigen::Index len = std::min(window, x.rows() - start);
          tasks.push_back(WindowTask{x.middleRows(start, len),
                                     data.targets[order[j]].middleRows(start, len)});
          slot.push_back(j - b);
          steps += len;
        }
        std::vector<BeliefState> states(tasks.size());
        for (std::size_t t = 0; t < tasks.size(); ++t) states[t] = carried[slot[t]];

        const BatchResult r = batch_gradient(params.weights, tasks,
                                             1.0 / static_cast<double>(steps), states, grad);
        for (std::size_t t = 0; t < tasks.size(); ++t) carried[slot[t]] = states[t];
        ClipGradientNorm(grad, config.clip_norm);
        adam.Step(params.weights, grad);
        epoch_loss += r.loss;
        epoch_steps += r.steps;
      }
    }
    EpochStats stats{epoch, epoch_loss / static_cast<double>(std::max<Eigen::Index>(1, epoch_steps))};
    rep.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats, params);
  }
  rep.final_loss = MeanLoss(params.weights, data);
  return params;
}

}  // namespace morphstate
