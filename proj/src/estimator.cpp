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

#include "morphstate/estimator.hpp"

#include <cmath>
#include <random>
#include <string>

#include "morphstate/error.hpp"
#include "morphstate/random.hpp"

namespace morphstate {
namespace {

constexpr std::array<LayerInfo, kLayerCount> MakeLayers() {
  std::array<LayerInfo, kLayerCount> layers = {{
      {"encoder.weight", kLatentWidth, kInputWidth, kInputWidth, 0},
      {"encoder.bias", kLatentWidth, 1, kInputWidth, 0},
      {"recurrent.weight", kHiddenWidth, kLatentWidth + kHiddenWidth, kLatentWidth + kHiddenWidth, 0},
      {"recurrent.bias", kHiddenWidth, 1, kLatentWidth + kHiddenWidth, 0},
      {"gate.weight", kGateWidth, kHiddenWidth, kHiddenWidth, 0},
      {"gate.bias", kGateWidth, 1, kHiddenWidth, 0},
      {"head.weight", kOutputWidth, kHeadInputWidth, kHeadInputWidth, 0},
      {"head.bias", kOutputWidth, 1, kHeadInputWidth, 0},
  }};
  Eigen::Index offset = 0;
  for (auto& l : layers) {
    l.offset = offset;
    offset += static_cast<Eigen::Index>(l.rows) * l.cols;
  }
  return layers;
}

constexpr std::array<LayerInfo, kLayerCount> kLayers = MakeLayers();

using Hidden = Eigen::Matrix<double, kHiddenWidth, 1>;
using Latent = Eigen::Matrix<double, kLatentWidth, 1>;
using Gate = Eigen::Matrix<double, kGateWidth, 1>;
using HeadInput = Eigen::Matrix<double, kHeadInputWidth, 1>;
using Concat = Eigen::Matrix<double, kLatentWidth + kHiddenWidth, 1>;

// Activations kept per step for the reverse pass.
struct StepCache {
  Concat concat;  // [latent; hidden_prev]
  Hidden hidden;
  Gate gate;
  Gate untrusted;
  HeadInput head_in;
  OutputVector y;
};

template <typename In>
void StepForward(const Weights& w, const In& x, const Hidden& h_prev, StepCache& c) {
  c.concat.head<kLatentWidth>() = (w.encoder_w() * x + w.encoder_b()).array().tanh().matrix();
  c.concat.tail<kHiddenWidth>() = h_prev;
  c.hidden = (w.recurrent_w() * c.concat + w.recurrent_b()).array().tanh().matrix();
  c.gate = (w.gate_w() * c.hidden + w.gate_b()).array().tanh().matrix();
  c.untrusted = x.template segment<kGateWidth>(input::kTendonLen);
  c.head_in.head<kHiddenWidth>() = c.hidden;
  c.head_in.tail<kGateWidth>() = c.gate.cwiseProduct(c.untrusted);
  c.y = w.head_w() * c.head_in + w.head_b();
}

void CheckWindow(const Eigen::Ref<const RowMatrix>& inputs, const Eigen::Ref<const RowMatrix>& targets) {
  if (inputs.cols() != kInputWidth) {
    throw Error(ErrorKind::kShapeMismatch, "window inputs must be 21 wide");
  }
  if (targets.cols() != kOutputWidth) {
    throw Error(ErrorKind::kShapeMismatch, "window targets must be 45 wide");
  }
  if (inputs.rows() != targets.rows()) {
    throw Error(ErrorKind::kShapeMismatch, "window inputs and targets differ in length");
  }
}

}  // namespace

const std::array<LayerInfo, kLayerCount>& Layers() { return kLayers; }

Eigen::Index ParameterCount() {
  return kLayers.back().offset + kLayers.back().size();
}

Weights::Weights() : data_(Eigen::VectorXd::Zero(ParameterCount())) {}

Weights InitWeights(std::uint64_t seed) {
  Weights w;
  Rng rng(seed);
  for (const auto& l : kLayers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < l.size(); ++i) w.flat()[l.offset + i] = dist(rng);
  }
  return w;
}

NormStats IdentityNorm(int width) {
  return NormStats{Eigen::VectorXd::Zero(width), Eigen::VectorXd::Ones(width)};
}

ForwardResult Forward(const Weights& weights, const Eigen::Ref<const Eigen::VectorXd>& input,
                      const BeliefState& state) {
  if (input.size() != kInputWidth) {
    throw Error(ErrorKind::kShapeMismatch,
                "forward input has width " + std::to_string(input.size()) + ", expected 21");
  }
  StepCache c;
  const InputVector x = input;
  StepForward(weights, x, state.hidden, c);
  ForwardResult r;
  r.prediction = c.y;
  r.state.hidden = c.hidden;
  return r;
}

ForwardResult Forward(const ModelParams& params, const Eigen::Ref<const Eigen::VectorXd>& input,
                      const BeliefState& state) {
  return Forward(params.weights, input, state);
}

double Loss(std::span<const double> prediction, std::span<const double> target) {
  if (prediction.size() != target.size()) {
    throw Error(ErrorKind::kShapeMismatch, "loss operands differ in width");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double e = prediction[i] - target[i];
    sum += e * e / (1.0 + std::abs(target[i]));
  }
  return sum;
}

double Loss(const Eigen::Ref<const Eigen::VectorXd>& prediction,
            const Eigen::Ref<const Eigen::VectorXd>& target) {
  return Loss(std::span<const double>(prediction.data(), static_cast<std::size_t>(prediction.size())),
              std::span<const double>(target.data(), static_cast<std::size_t>(target.size())));
}

WindowResult WindowLoss(const Weights& weights, const Eigen::Ref<const RowMatrix>& inputs,
                        const Eigen::Ref<const RowMatrix>& targets, const BeliefState& state0) {
  CheckWindow(inputs, targets);
  WindowResult r;
  Hidden h = state0.hidden;
  StepCache c;
  for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
    const InputVector x = inputs.row(t).transpose();
    StepForward(weights, x, h, c);
    const OutputVector y = targets.row(t).transpose();
    r.loss += Loss(c.y, y);
    h = c.hidden;
  }
  r.final_state.hidden = h;
  return r;
}

WindowResult WindowGradient(const Weights& weights, const Eigen::Ref<const RowMatrix>& inputs,
                            const Eigen::Ref<const RowMatrix>& targets, const BeliefState& state0,
                            double scale, Weights& grad) {
  CheckWindow(inputs, targets);
  const Eigen::Index steps = inputs.rows();
  WindowResult r;
  r.final_state = state0;
  if (steps == 0) return r;

  std::vector<StepCache> cache(static_cast<std::size_t>(steps));
  Hidden h = state0.hidden;
  for (Eigen::Index t = 0; t < steps; ++t) {
    const InputVector x = inputs.row(t).transpose();
    auto& c = cache[static_cast<std::size_t>(t)];
    StepForward(weights, x, h, c);
    const OutputVector y = targets.row(t).transpose();
    r.loss += Loss(c.y, y);
    h = c.hidden;
  }
  r.final_state.hidden = h;

  auto g_enc_w = grad.encoder_w();
  auto g_enc_b = grad.encoder_b();
  auto g_rec_w = grad.recurrent_w();
  auto g_rec_b = grad.recurrent_b();
  auto g_gate_w = grad.gate_w();
  auto g_gate_b = grad.gate_b();
  auto g_head_w = grad.head_w();
  auto g_head_b = grad.head_b();

  Hidden dh_next = Hidden::Zero();
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const auto& c = cache[static_cast<std::size_t>(t)];
    const OutputVector target = targets.row(t).transpose();
    const OutputVector dy =
        (2.0 * scale) * (c.y - target).cwiseQuotient((1.0 + target.array().abs()).matrix());

    g_head_w.noalias() += dy * c.head_in.transpose();
    g_head_b += dy;
    const HeadInput d_head_in = weights.head_w().transpose() * dy;

    const Gate d_gate = d_head_in.tail<kGateWidth>().cwiseProduct(c.untrusted);
    const Gate d_gate_pre = d_gate.cwiseProduct((1.0 - c.gate.array().square()).matrix());
    g_gate_w.noalias() += d_gate_pre * c.hidden.transpose();
    g_gate_b += d_gate_pre;

    Hidden dh = d_head_in.head<kHiddenWidth>() + weights.gate_w().transpose() * d_gate_pre + dh_next;
    const Hidden d_rec_pre = dh.cwiseProduct((1.0 - c.hidden.array().square()).matrix());
    g_rec_w.noalias() += d_rec_pre * c.concat.transpose();
    g_rec_b += d_rec_pre;
    const Concat d_concat = weights.recurrent_w().transpose() * d_rec_pre;
    dh_next = d_concat.tail<kHiddenWidth>();

    const Latent latent = c.concat.head<kLatentWidth>();
    const Latent d_enc_pre =
        d_concat.head<kLatentWidth>().cwiseProduct((1.0 - latent.array().square()).matrix());
    const InputVector x = inputs.row(t).transpose();
    g_enc_w.noalias() += d_enc_pre * x.transpose();
    g_enc_b += d_enc_pre;
  }
  return r;
}

}  // namespace morphstate
