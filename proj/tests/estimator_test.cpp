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
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "morphstate/inference.hpp"
#include "test_util.hpp"

namespace morphstate {
namespace {

// ---- independent reference: plain loops over the flat parameter vector ----

double P(const Weights& w, Layer l, int r, int c) {
  const auto& info = Layers()[l];
  return w.flat()[info.offset + static_cast<Eigen::Index>(r) * info.cols + c];
}

std::vector<double> RefStep(const Weights& w, const std::vector<double>& x, std::vector<double>& h) {
  std::vector<double> latent(kLatentWidth), hidden(kHiddenWidth), gate(kGateWidth), y(kOutputWidth);
  for (int i = 0; i < kLatentWidth; ++i) {
    double s = P(w, kEncoderBias, i, 0);
    for (int j = 0; j < kInputWidth; ++j) s += P(w, kEncoderWeight, i, j) * x[j];
    latent[i] = std::tanh(s);
  }
  for (int i = 0; i < kHiddenWidth; ++i) {
    double s = P(w, kRecurrentBias, i, 0);
    for (int j = 0; j < kLatentWidth; ++j) s += P(w, kRecurrentWeight, i, j) * latent[j];
    for (int j = 0; j < kHiddenWidth; ++j) s += P(w, kRecurrentWeight, i, kLatentWidth + j) * h[j];
    hidden[i] = std::tanh(s);
  }
  for (int i = 0; i < kGateWidth; ++i) {
    double s = P(w, kGateBias, i, 0);
    for (int j = 0; j < kHiddenWidth; ++j) s += P(w, kGateWeight, i, j) * hidden[j];
    gate[i] = std::tanh(s);
  }
  for (int i = 0; i < kOutputWidth; ++i) {
    double s = P(w, kHeadBias, i, 0);
    for (int j = 0; j < kHiddenWidth; ++j) s += P(w, kHeadWeight, i, j) * hidden[j];
    for (int j = 0; j < kGateWidth; ++j) {
      s += P(w, kHeadWeight, i, kHiddenWidth + j) * gate[j] * x[input::kTendonLen + j];
    }
    y[i] = s;
  }
  h = hidden;
  return y;
}

Weights RandomWeights(std::uint64_t seed, double scale = 1.0) {
  Weights w = InitWeights(seed);
  w.flat() *= scale;
  return w;
}

RowMatrix RandomRows(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

TEST(Layers, ShapesAndCount) {
  const auto& l = Layers();
  EXPECT_EQ(l[kEncoderWeight].rows, 32);
  EXPECT_EQ(l[kEncoderWeight].cols, 21);
  EXPECT_EQ(l[kRecurrentWeight].cols, 64);
  EXPECT_EQ(l[kGateWeight].rows, 2);
  EXPECT_EQ(l[kHeadWeight].rows, 45);
  EXPECT_EQ(l[kHeadWeight].cols, 34);
  EXPECT_EQ(ParameterCount(), 32 * 21 + 32 + 32 * 64 + 32 + 2 * 32 + 2 + 45 * 34 + 45);
  Eigen::Index offset = 0;
  for (const auto& info : l) {
    EXPECT_EQ(info.offset, offset);
    offset += info.size();
  }
}

TEST(InitWeights, WithinFanInBound) {
  const Weights w = InitWeights(3);
  for (const auto& info : Layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(info.fan_in));
    EXPECT_LE(w.flat().segment(info.offset, info.size()).cwiseAbs().maxCoeff(), bound) << info.name;
  }
  EXPECT_EQ(InitWeights(3).flat(), w.flat());
  EXPECT_NE(InitWeights(4).flat(), w.flat());
}

TEST(Forward, ZeroParamsGiveZeroOutput) {
  Weights w;
  w.SetZero();
  std::mt19937_64 rng(1);
  const Eigen::VectorXd x = RandomRows(1, kInputWidth, rng).row(0).transpose();
  const ForwardResult r = Forward(w, x, BeliefState{});
  EXPECT_EQ(r.prediction.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.state.hidden.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Forward, Deterministic) {
  const Weights w = RandomWeights(5);
  std::mt19937_64 rng(2);
  const Eigen::VectorXd x = RandomRows(1, kInputWidth, rng).row(0).transpose();
  const ForwardResult a = Forward(w, x, BeliefState{});
  const ForwardResult b = Forward(w, x, BeliefState{});
  EXPECT_EQ(a.prediction, b.prediction);
  EXPECT_EQ(a.state.hidden, b.state.hidden);
}

TEST(Forward, MatchesUnrolledReference) {
  const Weights w = RandomWeights(7, 2.0);
  std::mt19937_64 rng(3);
  const RowMatrix xs = RandomRows(6, kInputWidth, rng);
  BeliefState state;
  std::vector<double> h(kHiddenWidth, 0.0);
  for (Eigen::Index t = 0; t < xs.rows(); ++t) {
    const Eigen::VectorXd x = xs.row(t).transpose();
    const ForwardResult r = Forward(w, x, state);
    state = r.state;
    const auto ref = RefStep(w, std::vector<double>(x.data(), x.data() + x.size()), h);
    for (int i = 0; i < kOutputWidth; ++i) EXPECT_NEAR(r.prediction[i], ref[i], 1e-12);
    for (int i = 0; i < kHiddenWidth; ++i) {
      EXPECT_NEAR(state.hidden[i], h[i], 1e-12);
      EXPECT_LT(std::abs(state.hidden[i]), 1.0);
    }
  }
}

TEST(Forward, WrongWidth) {
  const Weights w = RandomWeights(1);
  EXPECT_ERROR_KIND(Forward(w, Eigen::VectorXd::Zero(20), BeliefState{}), kShapeMismatch);
}

TEST(Forward, GateOnlySeesTendons) {
  // With the recurrent path frozen (zero encoder), changing a tendon input
  // moves the output only through the gated head columns.
  Weights w = RandomWeights(9);
  w.encoder_w().setZero();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(kInputWidth);
  const auto base = Forward(w, x, BeliefState{}).prediction;
  x[input::kTendonLen] = 1.0;
  const auto moved = Forward(w, x, BeliefState{});
  const double gate = std::tanh(w.gate_b()[0] + (w.gate_w().row(0) * moved.state.hidden)(0));
  const OutputVector expected = base + w.head_w().col(kHiddenWidth) * gate;
  EXPECT_LT((moved.prediction - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Loss, HandCases) {
  const double a[] = {3.0}, b[] = {1.0}, c[] = {1.0}, d[] = {0.0};
  EXPECT_NEAR(Loss(std::span<const double>(a), std::span<const double>(b)), 2.0, 1e-12);
  EXPECT_NEAR(Loss(std::span<const double>(c), std::span<const double>(d)), 1.0, 1e-12);
  EXPECT_EQ(Loss(std::span<const double>(a), std::span<const double>(a)), 0.0);
}

TEST(Loss, SumsOverElementsAndIsNonNegative) {
  std::mt19937_64 rng(4);
  const RowMatrix p = RandomRows(1, 45, rng), t = RandomRows(1, 45, rng);
  double expected = 0.0;
  for (int i = 0; i < 45; ++i) expected += std::pow(p(0, i) - t(0, i), 2) / (1.0 + std::abs(t(0, i)));
  const Eigen::VectorXd pv = p.row(0).transpose(), tv = t.row(0).transpose();
  EXPECT_NEAR(Loss(pv, tv), expected, 1e-12);
  EXPECT_GT(Loss(pv, tv), 0.0);
}

TEST(Loss, WeightDecreasesWithTargetMagnitude) {
  double prev = INFINITY;
  for (int i = 0; i < 100; ++i) {
    const double y = -0.05 * i;  // |y| increasing
    const double f[] = {y + 0.3}, t[] = {y};
    const double l = Loss(std::span<const double>(f), std::span<const double>(t));
    EXPECT_LT(l, prev);
    prev = l;
  }
}

double FdCheck(const Weights& w, const RowMatrix& xs, const RowMatrix& ys, const BeliefState& s0) {
  Weights grad;
  grad.SetZero();
  WindowGradient(w, xs, ys, s0, 1.0, grad);
  const double h = 1e-5;
  double worst = 0.0;
  Weights probe = w;
  for (Eigen::Index i = 0; i < ParameterCount(); ++i) {
    const double keep = probe.flat()[i];
    probe.flat()[i] = keep + h;
    const double up = WindowLoss(probe, xs, ys, s0).loss;
    probe.flat()[i] = keep - h;
    const double down = WindowLoss(probe, xs, ys, s0).loss;
    probe.flat()[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(grad.flat()[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

TEST(WindowGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 3; ++trial) {
    const Weights w = RandomWeights(100 + trial, 1.5);
    const Eigen::Index len = 2 + trial;
    const RowMatrix xs = RandomRows(len, kInputWidth, rng), ys = RandomRows(len, kOutputWidth, rng);
    BeliefState s0;
    s0.hidden = RandomRows(1, kHiddenWidth, rng).row(0).transpose().array().tanh();
    EXPECT_LT(FdCheck(w, xs, ys, s0), 1e-4) << "trial " << trial;
  }
}

TEST(WindowGradient, ZeroAtPerfectFit) {
  const Weights w = RandomWeights(12);
  std::mt19937_64 rng(5);
  const RowMatrix xs = RandomRows(4, kInputWidth, rng);
  RowMatrix ys(4, kOutputWidth);
  BeliefState s;
  for (Eigen::Index t = 0; t < 4; ++t) {
    const auto r = Forward(w, Eigen::VectorXd(xs.row(t).transpose()), s);
    ys.row(t) = r.prediction.transpose();
    s = r.state;
  }
  Weights grad;
  grad.SetZero();
  const WindowResult res = WindowGradient(w, xs, ys, BeliefState{}, 1.0, grad);
  EXPECT_EQ(res.loss, 0.0);
  EXPECT_EQ(grad.flat().cwiseAbs().maxCoeff(), 0.0);
}

TEST(WindowGradient, ScaleIsLinearAndAccumulates) {
  const Weights w = RandomWeights(13);
  std::mt19937_64 rng(6);
  const RowMatrix xs = RandomRows(5, kInputWidth, rng), ys = RandomRows(5, kOutputWidth, rng);
  Weights g1, g2;
  g1.SetZero();
  g2.SetZero();
  WindowGradient(w, xs, ys, BeliefState{}, 1.0, g1);
  WindowGradient(w, xs, ys, BeliefState{}, 2.0, g2);
  EXPECT_EQ(g2.flat(), 2.0 * g1.flat());
  WindowGradient(w, xs, ys, BeliefState{}, 1.0, g1);  // accumulates
  EXPECT_LT((g1.flat() - g2.flat()).cwiseAbs().maxCoeff(), 1e-12 * g2.flat().cwiseAbs().maxCoeff());
}

TEST(WindowGradient, FinalStateMatchesForward) {
  const Weights w = RandomWeights(14);
  std::mt19937_64 rng(7);
  const RowMatrix xs = RandomRows(5, kInputWidth, rng), ys = RandomRows(5, kOutputWidth, rng);
  Weights g;
  g.SetZero();
  const auto a = WindowGradient(w, xs, ys, BeliefState{}, 1.0, g);
  const auto b = WindowLoss(w, xs, ys, BeliefState{});
  EXPECT_EQ(a.final_state.hidden, b.final_state.hidden);
  EXPECT_EQ(a.loss, b.loss);
}

// ---- inference stream and parameter files -----------------------------------

ModelParams RandomParams(std::uint64_t seed) {
  ModelParams p;
  p.weights = RandomWeights(seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  p.input_norm.mean = Eigen::VectorXd::NullaryExpr(kInputWidth, [&] { return u(rng) - 1.0; });
  p.input_norm.std = Eigen::VectorXd::NullaryExpr(kInputWidth, [&] { return u(rng); });
  p.output_norm.mean = Eigen::VectorXd::NullaryExpr(kOutputWidth, [&] { return u(rng) - 1.0; });
  p.output_norm.std = Eigen::VectorXd::NullaryExpr(kOutputWidth, [&] { return u(rng); });
  p.training_sources = {"a#1", "b#2"};
  return p;
}

TEST(InferenceStream, NormalizesForwardsDenormalizes) {
  const ModelParams p = RandomParams(21);
  std::mt19937_64 rng(8);
  const RowMatrix xs = RandomRows(10, kInputWidth, rng);
  InferenceStream stream(p);
  BeliefState s;
  for (Eigen::Index k = 0; k < xs.rows(); ++k) {
    const Eigen::VectorXd raw = xs.row(k).transpose();
    const auto out = stream.Step(0.05 * k, raw);
    const auto ref = Forward(p.weights, Normalize(raw, p.input_norm), s);
    s = ref.state;
    EXPECT_LT((out.estimate - Denormalize(ref.prediction, p.output_norm)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_FALSE(out.gap);
  }
  const RowMatrix seq = PredictSequence(p, xs);
  InferenceStream again(p);
  for (Eigen::Index k = 0; k < xs.rows(); ++k) {
    EXPECT_EQ(seq.row(k).transpose(), again.Step(0.05 * k, xs.row(k).transpose()).estimate);
  }
}

TEST(InferenceStream, FlagsGapAndCarriesBelief) {
  const ModelParams p = RandomParams(22);
  InferenceStream stream(p);
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(kInputWidth);
  stream.Step(0.0, x);
  stream.Step(0.05, x);
  const BeliefState before = stream.belief();
  const auto out = stream.Step(0.20, x);  // two samples missing
  EXPECT_TRUE(out.gap);
  EXPECT_EQ(stream.gap_count(), 1u);
  const auto ref = Forward(p.weights, Normalize(x, p.input_norm), before);
  EXPECT_EQ(out.belief.hidden, ref.state.hidden);
  EXPECT_FALSE(stream.Step(0.25, x).gap);
}

TEST(Params, SaveLoadIsBitExact) {
  const ModelParams p = RandomParams(23);
  const auto path = std::filesystem::temp_directory_path() / "morphstate_params_test.json";
  SaveParams(p, path);
  const ModelParams q = LoadParams(path);
  EXPECT_EQ(p.weights.flat(), q.weights.flat());
  EXPECT_EQ(p.input_norm.mean, q.input_norm.mean);
  EXPECT_EQ(p.input_norm.std, q.input_norm.std);
  EXPECT_EQ(p.output_norm.mean, q.output_norm.mean);
  EXPECT_EQ(p.output_norm.std, q.output_norm.std);
  EXPECT_EQ(p.training_sources, q.training_sources);
  std::filesystem::remove(path);
}

TEST(Params, RejectsVersionAndShape) {
  const ModelParams p = RandomParams(24);
  const auto path = std::filesystem::temp_directory_path() / "morphstate_params_bad.json";
  SaveParams(p, path);
  nlohmann::json j;
  std::ifstream(path) >> j;

  nlohmann::json bumped = j;
  bumped["version"] = kParamsFormatVersion + 1;
  std::ofstream(path) << bumped.dump();
  EXPECT_ERROR_KIND(LoadParams(path), kSchemaVersionMismatch);

  nlohmann::json reshaped = j;
  reshaped["layers"][0]["shape"] = {31, 21};
  std::ofstream(path) << reshaped.dump();
  EXPECT_ERROR_KIND(LoadParams(path), kShapeMismatch);

  EXPECT_ERROR_KIND(LoadParams(path.string() + ".missing"), kIo);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace morphstate
