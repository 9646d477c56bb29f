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

#include <utility>

#include "morphstate/layout.hpp"
#include "morphstate/shape.hpp"

namespace morphstate {

struct PIDGains {
  double kp = 1.0;
  double ki = 0.0;
  double kd = 0.0;
  double alpha = 0.99;  // wind-down coefficient, must be < 1

  // Throws kInvalidConfig unless 0 <= alpha < 1 and gains are finite.
  void Validate() const;
};

// Defaults tuned at 20 Hz.
inline constexpr PIDGains kLinearGains{1.0, 0.0, 0.1, 0.99};
inline constexpr PIDGains kYawGains{1.0, 0.01, 0.01, 0.99};

struct PIDState {
  double integral = 0.0;    // sum_i alpha^(k-i) e_i
  double prev_error = 0.0;  // e_(k-1)
  long k = 0;

  void Reset() { *this = PIDState{}; }
};

struct PIDStep {
  double command;
  PIDState state;
};

// e = desired - measured; integral' = alpha * integral + e;
// command = desired + kp e + ki integral' + kd (e - e_prev).
PIDStep PidStep(const PIDState& state, double desired, double measured, const PIDGains& gains);

struct TwistCommand {
  double u_x = 0.0;    // m/s forward
  double u_phi = 0.0;  // rad/s yaw
};

struct WheelCommand {
  double left = 0.0;
  double right = 0.0;
};

// left = u_x - W/2 u_phi, right = u_x + W/2 u_phi. Throws kNonPositiveWidth.
WheelCommand MixWheels(const TwistCommand& cmd, double width);

// Scales both wheels by the same factor so neither exceeds `limit`,
// preserving the commanded curvature.
WheelCommand SaturateWheels(const WheelCommand& cmd, double limit);

struct ControllerState {
  PIDState linear;
  PIDState yaw;
};

struct ControllerGains {
  PIDGains linear = kLinearGains;
  PIDGains yaw = kYawGains;
  double wheel_limit = 0.5;  // m/s
};

struct ClosedLoopOutput {
  WheelCommand wheels;
  TwistCommand corrected;
  ControllerState state;
};

// PID on forward speed (vs. estimated lin_vel.x) and yaw rate (vs. estimated
// ang_vel.z), then mixing with the shape's width and saturation.
ClosedLoopOutput ClosedLoopStep(const Eigen::Ref<const Eigen::VectorXd>& estimate,
                                const TwistCommand& setpoint, const RobotShape& shape,
                                const ControllerState& state, const ControllerGains& gains);

}  // namespace morphstate
