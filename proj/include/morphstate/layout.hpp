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

// Channel layout of the 21-wide proprioceptive input and the 45-wide state
// target. Every module indexes through these constants.

namespace morphstate {

inline constexpr int kInputWidth = 21;
inline constexpr int kOutputWidth = 45;

namespace input {
inline constexpr int kGravity = 0;        // 3, IMU gravity direction
inline constexpr int kLinAccel = 3;       // 3, m/s^2
inline constexpr int kAngVel = 6;         // 3, rad/s
inline constexpr int kWheelCmd = 9;       // 2, left/right m/s
inline constexpr int kMotorCurrent = 11;  // 4, A (FL, FR, BL, BR)
inline constexpr int kMotorVel = 15;      // 4, m/s (FL, FR, BL, BR)
inline constexpr int kTendonLen = 19;     // 2, m; the untrusted subset
inline constexpr int kUntrustedCount = 2;
}  // namespace input

namespace output {
inline constexpr int kFramePointCount = 12;
inline constexpr int kFramePoints = 0;  // 36, point j at 3j..3j+2
inline constexpr int kLinVel = 36;      // 3, m/s
inline constexpr int kAngVel = 39;      // 3, rad/s
inline constexpr int kGravity = 42;     // 3, unit vector
}  // namespace output

// Wheel/motor order used by the current and velocity channels.
enum Wheel : int { kFrontLeft = 0, kFrontRight = 1, kBackLeft = 2, kBackRight = 3 };
inline constexpr int kWheelCount = 4;

inline constexpr double kDefaultDt = 0.05;  // 20 Hz

}  // namespace morphstate
