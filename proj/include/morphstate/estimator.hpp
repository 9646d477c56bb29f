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

// Recurrent belief encoder.
//
//   latent    = tanh(We x + be)                     x: 21 normalized inputs
//   hidden'   = tanh(Wh [latent; hidden] + bh)      32-wide belief
//   gate      = tanh(Wg hidden' + bg)               one gate per untrusted channel
//   corrected = gate .* x[tendon]
//   y         = Wo [hidden'; corrected] + bo        45 normalized outputs
//
// Every input feeds the recurrent path; the two tendon-length channels are
// additionally re-weighted by the belief before reaching the output head.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "morphstate/episode.hpp"
#include "morphstate/signal.hpp"

namespace morphstate {

inline constexpr int kLatentWidth = 32;
inline constexpr int kHiddenWidth = 32;
inline constexpr int kGateWidth = input::kUntrustedCount;
inline constexpr int kHeadInputWidth = kHiddenWidth + kGateWidth;

struct LayerInfo {
  const char* name;
  int rows;
  int cols;
  int fan_in;
  Eigen::Index offset;
  Eigen::Index size() const { return static_cast<Eigen::Index>(rows) * cols; }
};

enum Layer : int {
  kEncoderWeight = 0,
  kEncoderBias,
  kRecurrentWeight,
  kRecurrentBias,
  kGateWeight,
  kGateBias,
  kHeadWeight,
  kHeadBias,
  kLayerCount,
};

const std::array<LayerInfo, kLayerCount>& Layers();
Eigen::Index ParameterCount();

template <int R, int C>
using RowMajorMat = Eigen::Matrix<double, R, C, (C == 1 ? Eigen::ColMajor : Eigen::RowMajor)>;

// All trainable values in one flat vector, exposed per layer as fixed-size
// row-major maps. The same type stores gradients and optimizer moments.
class Weights {
 public:
  Weights();

  Eigen::VectorXd& flat() { return data_; }
  const Eigen::VectorXd& flat() const { return data_; }

  template <int R, int C>
  Eigen::Map<RowMajorMat<R, C>> layer(Layer l) {
    return Eigen::Map<RowMajorMat<R, C>>(data_.data() + Layers()[l].offset);
  }
  template <int R, int C>
  Eigen::Map<const RowMajorMat<R, C>> layer(Layer l) const {
    return Eigen::Map<const RowMajorMat<R, C>>(data_.data() + Layers()[l].offset);
  }

  auto encoder_w() { return layer<kLatentWidth, kInputWidth>(kEncoderWeight); }
  auto encoder_w() const { return layer<kLatentWidth, kInputWidth>(kEncoderWeight); }
  auto encoder_b() { return layer<kLatentWidth, 1>(kEncoderBias); }
  auto encoder_b() const { return layer<kLatentWidth, 1>(kEncoderBias); }
  auto recurrent_w() { return layer<kHiddenWidth, kLatentWidth + kHiddenWidth>(kRecurrentWeight); }
  auto recurrent_w() const {
    return layer<kHiddenWidth, kLatentWidth + kHiddenWidth>(kRecurrentWeight);
  }
  auto recurrent_b() { return layer<kHiddenWidth, 1>(kRecurrentBias); }
  auto recurrent_b() const { return layer<kHiddenWidth, 1>(kRecurrentBias); }
  auto gate_w() { return layer<kGateWidth, kHiddenWidth>(kGateWeight); }
  auto gate_w() const { return layer<kGateWidth, kHiddenWidth>(kGateWeight); }
  auto gate_b() { return layer<kGateWidth, 1>(kGateBias); }
  auto gate_b() const { return layer<kGateWidth, 1>(kGateBias); }
  auto head_w() { return layer<kOutputWidth, kHeadInputWidth>(kHeadWeight); }
  auto head_w() const { return layer<kOutputWidth, kHeadInputWidth>(kHeadWeight); }
  auto head_b() { return layer<kOutputWidth, 1>(kHeadBias); }
  auto head_b() const { return layer<kOutputWidth, 1>(kHeadBias); }

  void SetZero() { data_.setZero(); }
  bool AllFinite() const { return data_.allFinite(); }

 private:
  Eigen::VectorXd data_;
};

// Uniform in +-1/sqrt(fan_in) for every layer (biases use their layer's fan-in).
Weights InitWeights(std::uint64_t seed);

struct ModelParams {
  Weights weights;
  NormStats input_norm;
  NormStats output_norm;
  // Source ids (scenario#seed) of every recording used for fitting; evaluation
  // refuses to score these.
  std::vector<std::string> training_sources;
};

// Identity normalization; handy for tests and for models fit on normalized data.
NormStats IdentityNorm(int width);

struct BeliefState {
  Eigen::Matrix<double, kHiddenWidth, 1> hidden = Eigen::Matrix<double, kHiddenWidth, 1>::Zero();
};

using InputVector = Eigen::Matrix<double, kInputWidth, 1>;
using OutputVector = Eigen::Matrix<double, kOutputWidth, 1>;

struct ForwardResult {
  OutputVector prediction;  // normalized
  BeliefState state;
};

// One 20 Hz step on normalized input. Throws kShapeMismatch on a width other
// than 21.
ForwardResult Forward(const ModelParams& params, const Eigen::Ref<const Eigen::VectorXd>& input,
                      const BeliefState& state);
ForwardResult Forward(const Weights& weights, const Eigen::Ref<const Eigen::VectorXd>& input,
                      const BeliefState& state);

// sum_i (f_i - y_i)^2 / (1 + |y_i|).
double Loss(std::span<const double> prediction, std::span<const double> target);
double Loss(const Eigen::Ref<const Eigen::VectorXd>& prediction,
            const Eigen::Ref<const Eigen::VectorXd>& target);

struct WindowResult {
  double loss = 0.0;  // unscaled sum of per-step losses
  BeliefState final_state;
};

// Reverse-mode gradient of scale * sum_t Loss(f(x_t), y_t) over one window
// that starts from `state0`, accumulated into `grad`. No gradient flows into
// state0 (truncation point). inputs/targets are normalized, T x 21 / T x 45.
WindowResult WindowGradient(const Weights& weights, const Eigen::Ref<const RowMatrix>& inputs,
                            const Eigen::Ref<const RowMatrix>& targets, const BeliefState& state0,
                            double scale, Weights& grad);

// Forward-only loss of a window; the oracle side of gradient checks.
WindowResult WindowLoss(const Weights& weights, const Eigen::Ref<const RowMatrix>& inputs,
                        const Eigen::Ref<const RowMatrix>& targets, const BeliefState& state0);

}  // namespace morphstate
