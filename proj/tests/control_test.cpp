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


#include "morphstate/control.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace morphstate {
namespace {

TEST(PidStep, MatchedMeasurementIsPureFeedforward) {
  const PIDStep out = PidStep(PIDState{}, 0.37, 0.37, kYawGains);
  EXPECT_DOUBLE_EQ(out.command, 0.37);
  EXPECT_EQ(out.state.integral, 0.0);
  EXPECT_EQ(out.state.k, 1);
}

TEST(PidStep, LinearGainsFirstStep) {
  const PIDStep out = PidStep(PIDState{}, 0.4, 0.0, kLinearGains);
  EXPECT_NEAR(out.command, 0.84, 1e-15);
  EXPECT_DOUBLE_EQ(out.state.prev_error, 0.4);
}

TEST(PidStep, DerivativeUsesPreviousError) {
  const PIDGains d_only{0.0, 0.0, 2.0, 0.5};
  PIDState s;
  s.prev_error = 0.1;
  const PIDStep out = PidStep(s, 1.0, 0.7, d_only);  // e = 0.3
  EXPECT_NEAR(out.command, 1.0 + 2.0 * (0.3 - 0.1), 1e-15);
}

TEST(PidStep, IntegralFollowsGeometricSeries) {
  const double e = 0.2;
  for (const double alpha : {0.0, 0.5, 0.9, 0.99}) {
    const PIDGains gains{0.0, 1.0, 0.0, alpha};
    PIDState s;
    for (int k = 1; k <= 400; ++k) {
      const PIDStep out = PidStep(s, e, 0.0, gains);
      s = out.state;
      const double expected = e * (1.0 - std::pow(alpha, k)) / (1.0 - alpha);
      ASSERT_NEAR(s.integral, expected, 1e-12) << "alpha " << alpha << " k " << k;
      ASSERT_LE(std::abs(s.integral), e / (1.0 - alpha) + 1e-12);
      ASSERT_NEAR(out.command, e + expected, 1e-12);
    }
  }
}

TEST(PidStep, WindDownBoundHoldsForRandomErrors) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const PIDGains gains{0.3, 0.7, 0.1, 0.95};
  const double bound = 1.0 / (1.0 - gains.alpha);
  PIDState s;
  for (int k = 0; k < 5000; ++k) {
    s = PidStep(s, u(rng), u(rng) * 0.0, gains).state;  // |e| <= 1
    ASSERT_LE(std::abs(s.integral), bound + 1e-12);
  }
}

TEST(PidStep, ResetClears) {
  PIDState s = PidStep(PIDState{}, 1.0, 0.0, kYawGains).state;
  s.Reset();
  EXPECT_EQ(s.integral, 0.0);
  EXPECT_EQ(s.prev_error, 0.0);
  EXPECT_EQ(s.k, 0);
}

TEST(PIDGains, Validate) {
  EXPECT_NO_THROW(kYawGains.Validate());
  EXPECT_ERROR_KIND((PIDGains{1, 0, 0, 1.0}.Validate()), kInvalidConfig);
  EXPECT_ERROR_KIND((PIDGains{1, 0, 0, -0.1}.Validate()), kInvalidConfig);
  EXPECT_ERROR_KIND((PIDGains{NAN, 0, 0, 0.5}.Validate()), kInvalidConfig);
}

TEST(MixWheels, Examples) {
  WheelCommand w = MixWheels({0.4, 0.0}, 0.5);
  EXPECT_DOUBLE_EQ(w.left, 0.4);
  EXPECT_DOUBLE_EQ(w.right, 0.4);
  w = MixWheels({0.0, 1.0}, 0.5);
  EXPECT_DOUBLE_EQ(w.left, -0.25);
  EXPECT_DOUBLE_EQ(w.right, 0.25);
  const WheelCommand a = MixWheels({0.1, 0.7}, 0.3);
  const WheelCommand b = MixWheels({0.1, -0.7}, 0.3);
  EXPECT_DOUBLE_EQ(a.left, b.right);
  EXPECT_DOUBLE_EQ(a.right, b.left);
}

TEST(MixWheels, InverseRecoversTwist) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0), w(0.05, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const TwistCommand cmd{0.4 * u(rng), u(rng)};
    const double width = w(rng);
    const WheelCommand m = MixWheels(cmd, width);
    EXPECT_NEAR(0.5 * (m.left + m.right), cmd.u_x, 1e-12);
    EXPECT_NEAR((m.right - m.left) / width, cmd.u_phi, 1e-12);
  }
}

TEST(MixWheels, NonPositiveWidth) {
  EXPECT_ERROR_KIND(MixWheels({0.1, 0.1}, 0.0), kNonPositiveWidth);
  EXPECT_ERROR_KIND(MixWheels({0.1, 0.1}, -0.2), kNonPositiveWidth);
  EXPECT_ERROR_KIND(MixWheels({0.1, 0.1}, NAN), kNonPositiveWidth);
}

TEST(SaturateWheels, PreservesRatio) {
  const WheelCommand w = SaturateWheels({0.2, 1.0}, 0.5);
  EXPECT_DOUBLE_EQ(w.right, 0.5);
  EXPECT_DOUBLE_EQ(w.left, 0.1);
  const WheelCommand inside = SaturateWheels({-0.3, 0.4}, 0.5);
  EXPECT_EQ(inside.left, -0.3);
  EXPECT_EQ(inside.right, 0.4);
  const WheelCommand neg = SaturateWheels({-1.0, 0.5}, 0.5);
  EXPECT_DOUBLE_EQ(neg.left, -0.5);
  EXPECT_DOUBLE_EQ(neg.right, 0.25);
}

RobotShape FlatShape(double width) {
  std::vector<Point3> pts;
  for (int i = 0; i < 12; ++i) pts.emplace_back(0.5 * std::cos(0.5 * i), 0.5 * std::sin(0.5 * i), 0.0);
  return ReconstructShape(pts, width);
}

TEST(ClosedLoopStep, ZeroGainsIsOpenLoop) {
  ControllerGains gains;
  gains.linear = PIDGains{0, 0, 0, 0.5};
  gains.yaw = PIDGains{0, 0, 0, 0.5};
  gains.wheel_limit = 10.0;
  const RobotShape shape = FlatShape(0.42);
  Eigen::VectorXd est = Eigen::VectorXd::Random(kOutputWidth);
  const TwistCommand sp{0.3, -0.6};
  const ClosedLoopOutput out = ClosedLoopStep(est, sp, shape, ControllerState{}, gains);
  const WheelCommand open = MixWheels(sp, 0.42);
  EXPECT_EQ(out.wheels.left, open.left);
  EXPECT_EQ(out.wheels.right, open.right);
}

TEST(ClosedLoopStep, UsesForwardAndYawChannels) {
  ControllerGains gains;
  gains.wheel_limit = 10.0;
  Eigen::VectorXd est = Eigen::VectorXd::Zero(kOutputWidth);
  est[output::kLinVel] = 0.1;
  est[output::kAngVel + 2] = 0.2;
  const ClosedLoopOutput out = ClosedLoopStep(est, {0.4, 0.0}, FlatShape(0.5), ControllerState{}, gains);
  EXPECT_NEAR(out.corrected.u_x, 0.4 + 0.3 + 0.1 * 0.3, 1e-15);
  // e = -0.2: -0.2 * (1 + 0.01 + 0.01) feedback on zero setpoint
  EXPECT_NEAR(out.corrected.u_phi, -0.2 * 1.02, 1e-15);
  EXPECT_EQ(out.state.linear.k, 1);
  EXPECT_ERROR_KIND(ClosedLoopStep(est, {0.4, 0.0}, FlatShape(0.0), ControllerState{}, gains),
                    kNonPositiveWidth);
  Eigen::VectorXd short_est = Eigen::VectorXd::Zero(10);
  EXPECT_ERROR_KIND(ClosedLoopStep(short_est, {0.4, 0.0}, FlatShape(0.5), ControllerState{}, gains),
                    kShapeMismatch);
}

// First-order wheel plant, right wheel delivering 75% of its command.
double SteadyYawError(bool closed) {
  const double dt = 0.05, tau = 0.1, width = 0.5;
  const RobotShape shape = FlatShape(width);
  const TwistCommand sp{0.3, 0.0};
  ControllerGains gains;
  ControllerState state;
  double left = 0.0, right = 0.0;
  Eigen::VectorXd est = Eigen::VectorXd::Zero(kOutputWidth);
  double yaw = 0.0;
  for (int k = 0; k < 2000; ++k) {
    WheelCommand cmd;
    if (closed) {
      const ClosedLoopOutput out = ClosedLoopStep(est, sp, shape, state, gains);
      cmd = out.wheels;
      state = out.state;
    } else {
      cmd = SaturateWheels(MixWheels(sp, width), gains.wheel_limit);
    }
    const double a = dt / (tau + dt);
    left += a * (cmd.left - left);
    right += a * (0.75 * cmd.right - right);
    yaw = (right - left) / width;
    est[output::kLinVel] = 0.5 * (left + right);
    est[output::kAngVel + 2] = yaw;
  }
  return std::abs(yaw - sp.u_phi);
}

TEST(ClosedLoopStep, ReducesYawErrorOnDeficientWheel) {
  const double open = SteadyYawError(false);
  const double closed = SteadyYawError(true);
  EXPECT_NEAR(open, 0.15, 1e-9);
  EXPECT_LT(closed, open);
}

}  // namespace
}  // namespace morphstate
