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

#include <algorithm>
#include <cmath>
#include <string>

#include "morphstate/error.hpp"

namespace morphstate {

void PIDGains::Validate() const {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw Error(ErrorKind::kInvalidConfig, "wind-down alpha must be in [0, 1), got " + std::to_string(alpha));
  }
  if (!std::isfinite(kp) || !std::isfinite(ki) || !std::isfinite(kd)) {
    throw Error(ErrorKind::kInvalidConfig, "PID gains must be finite");
  }
}

PIDStep PidStep(const PIDState& state, double desired, double measured, const PIDGains& gains) {
  const double e = desired - measured;
  PIDStep out;
  out.state.integral = gains.alpha * state.integral + e;
  out.state.prev_error = e;
  out.state.k = state.k + 1;
  out.command = desired + gains.kp * e + gains.ki * out.state.integral + gains.kd * (e - state.prev_error);
  return out;
}

WheelCommand MixWheels(const TwistCommand& cmd, double width) {
  if (!(width > 0.0)) {
    throw Error(ErrorKind::kNonPositiveWidth, "wheel mixing needs W > 0, got " + std::to_string(width));
  }
  const double half = 0.5 * width * cmd.u_phi;
  return WheelCommand{cmd.u_x - half, cmd.u_x + half};
}

WheelCommand SaturateWheels(const WheelCommand& cmd, double limit) {
  const double peak = std::max(std::abs(cmd.left), std::abs(cmd.right));
  if (peak <= limit || peak == 0.0) return cmd;
  const double s = limit / peak;
  return WheelCommand{cmd.left * s, cmd.right * s};
}

ClosedLoopOutput ClosedLoopStep(const Eigen::Ref<const Eigen::VectorXd>& estimate,
                                const TwistCommand& setpoint, const RobotShape& shape,
                                const ControllerState& state, const ControllerGains& gains) {
  if (estimate.size() != kOutputWidth) {
    throw Error(ErrorKind::kShapeMismatch, "closed loop needs a 45-wide estimate");
  }
  const PIDStep lin = PidStep(state.linear, setpoint.u_x, estimate[output::kLinVel], gains.linear);
  const PIDStep yaw = PidStep(state.yaw, setpoint.u_phi, estimate[output::kAngVel + 2], gains.yaw);
  ClosedLoopOutput out;
  out.corrected = TwistCommand{lin.command, yaw.command};
  out.wheels = SaturateWheels(MixWheels(out.corrected, shape.width), gains.wheel_limit);
  out.state = ControllerState{lin.state, yaw.state};
  return out;
}

}  // namespace morphstate
