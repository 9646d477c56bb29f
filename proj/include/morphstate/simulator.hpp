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

// Desk-scale stand-in for a compliant two-rod morphing robot and the motion
// capture rig that observes it.
//
// The morph family is analytic, not an elastic-rod model: a flat ring of 12
// markers (6 per rod) whose two halves fold up about the front-back axis as
// the morph parameter m goes from 0 (circle) to 1 (sphere-like), while the
// front and back ends are pinched inward. Drive is a four-wheel differential
// base whose track width follows the fold. Sensors are synthesized from the
// same state, so the mapping geometry -> sensors is consistent by
// construction.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "morphstate/control.hpp"
#include "morphstate/episode.hpp"
#include "morphstate/geometry.hpp"
#include "morphstate/random.hpp"

namespace morphstate {

struct ModelParams;

struct RobotDescription {
  double radius = 0.5;          // m, flat ring (1.0 m span)
  double fold_max_deg = 60.0;   // fold angle at m = 1
  double pinch = 0.2;           // relative front/back compression at m = 1

  // Marker indices: rod A is 0..5 (front -> back through the left side), rod
  // B is 6..11 (back -> front through the right side).
  std::array<int, kWheelCount> wheel_marker = {1, 10, 4, 7};  // FL, FR, BL, BR
  std::vector<int> left_ids = {1, 4};
  std::vector<int> right_ids = {10, 7};

  double tendon_max = 0.40;   // m at m = 0
  double tendon_span = 0.20;  // m shortened at m = 1
  double morph_rate = 0.25;   // 1/s, winch-limited

  double top_speed = 0.4;     // m/s
  double top_yaw_rate = 1.0;  // rad/s

  double wheel_tau = 0.1;     // s, first-order wheel response
  double turn_scrub = 0.1;    // yaw efficiency loss at m = 1 (skid steering)
  double roll_radius = 0.5;   // m, effective radius when rolling

  double current_idle = 0.15;   // A
  double current_load = 0.60;   // A at m = 1 (frame bending load)
  double current_speed = 1.2;   // A per m/s
  double payload_tilt_deg = 10.0;  // payload pitch at m = 1

  double payload_freq_hz = 1.5;
  double payload_damping = 0.12;
  double payload_accel_gain = 0.05;  // rad per m/s^2 of static deflection

  double noise_gravity = 0.005;
  double noise_accel = 0.05;
  double noise_gyro = 0.01;
  double noise_encoder = 0.005;
  double noise_current = 0.02;
  double noise_tendon = 0.002;
  double noise_marker = 0.0005;  // motion capture, m

  double slip_lo = 0.9;
  double slip_hi = 1.0;
  double slip_segment_s = 5.0;

  double target_ema_alpha = 0.3;

  // Throws kInvalidConfig when W(m) <= 0 somewhere, markers collide, or a
  // parameter is out of range.
  void Validate() const;

  double FoldAngle(double m) const;
  double Width(double m) const;  // equals EstimateWidth over the motor clusters
  double TurnEfficiency(double m) const { return 1.0 - turn_scrub * m; }
  double TendonLength(double m) const { return tendon_max - tendon_span * m; }
  double MorphFromTendon(double length) const { return (tendon_max - length) / tendon_span; }

  // Marker positions in the body frame (ring center at the origin).
  std::array<Point3, 12> BodyMarkers(double m) const;
  // Front/back/left/right from the motor markers.
  ReferencePoints ReferenceFromMarkers(std::span<const Point3> markers) const;
};

struct WorldPose {
  Point3 position = Point3::Zero();
  Mat3 orientation = Mat3::Identity();
};

// Markers of morph m under a rigid pose, world coordinates.
std::array<Point3, 12> MarkerPositions(const RobotDescription& desc, double m, const WorldPose& pose);

struct SchedulePoint {
  double t = 0.0;
  std::optional<double> u_x;
  std::optional<double> u_phi;
  std::optional<double> morph;
  std::optional<double> roll_rate;
};

struct RandomSegments {
  double segment_lo = 2.0;
  double segment_hi = 5.0;
  double u_x_lo = 0.0, u_x_hi = 0.0;
  double u_phi_lo = 0.0, u_phi_hi = 0.0;
  std::vector<double> morph_choices;  // empty: morph left alone
  double p_static = 0.2;              // chance a segment has zero commands
};

struct FaultSpec {
  std::array<double, kWheelCount> wheel_gain = {1.0, 1.0, 1.0, 1.0};  // FL, FR, BL, BR
  bool tendon_detach = false;
  double tendon_reading_morph = 0.4;  // what the winch encoders report when detached
  std::vector<std::pair<double, double>> dropouts;  // stale-sensor intervals, s
};

struct Scenario {
  std::string name;
  double duration = 10.0;
  double dt = kDefaultDt;
  std::uint64_t seed = 0;
  double initial_morph = 0.0;
  double initial_heading_deg = 0.0;
  std::vector<SchedulePoint> schedule;
  std::optional<RandomSegments> random_segments;
  FaultSpec faults;
  std::array<double, 2> terrain_tilt_deg = {0.0, 0.0};  // roll, pitch
  double disturbance = 0.0;   // payload impulse intensity
  double noise_scale = 1.0;   // 0 disables every stochastic effect except slip
  bool slip = true;

  // Throws kInvalidScenario.
  void Validate() const;
};

Scenario ScenarioFromJson(const nlohmann::json& j);
nlohmann::json ScenarioToJson(const Scenario& s);
Scenario LoadScenario(const std::filesystem::path& path);

struct SimState {
  double time = 0.0;
  WorldPose pose;
  double morph = 0.0;
  double morph_target = 0.0;
  std::array<double, kWheelCount> wheel = {0.0, 0.0, 0.0, 0.0};  // wheel speed before slip
  WheelCommand command;  // last left/right command
  double slip = 1.0;
  Vec3 lin_vel = Vec3::Zero();  // world
  Vec3 ang_vel = Vec3::Zero();  // world
  double payload_roll = 0.0, payload_roll_rate = 0.0;
  double payload_pitch = 0.0, payload_pitch_rate = 0.0;
};

struct StepCommand {
  WheelCommand wheels;
  double roll_rate = 0.0;          // rad/s; nonzero rolls the whole body
  Vec3 roll_direction = Vec3::UnitX();  // world, on the terrain plane
};

// Explicit Euler at dt: morph slews toward its target, wheels lag their
// (fault-scaled) commands, forward speed is the mean effective wheel speed and
// yaw rate the left/right difference over W(m). Orientation is
// re-orthonormalized every step.
SimState Step(const SimState& state, const RobotDescription& desc, const StepCommand& cmd,
              const FaultSpec& faults, double dt);

// One 21-wide proprioceptive sample. `rng` drives sensor noise scaled by
// noise_scale.
Eigen::VectorXd SynthesizeSensors(const SimState& state, const SimState& prev,
                                  const RobotDescription& desc, const Scenario& scenario,
                                  double dt, Rng& rng);

// Ground-truth targets from a raw world-marker stream through the same
// frame / transform / differentiation / smoothing chain used for training.
struct DerivedTargets {
  RowMatrix targets;  // N x 45
  std::vector<FramePose> poses;
};
DerivedTargets DeriveTargets(const Eigen::Ref<const RowMatrix>& markers,
                             const RobotDescription& desc, double dt);

enum class ControlMode {
  kOpenLoop,              // mix with a fixed width
  kOpenLoopDynamicWidth,  // mix with the estimated width, no PID
  kClosedLoop,            // estimated width + feedforward PID
};

const char* ControlModeName(ControlMode mode);
ControlMode ParseControlMode(const std::string& name);

struct ControllerSpec {
  ControlMode mode = ControlMode::kOpenLoop;
  double fixed_width = 0.5;
  double min_width = 0.1;  // estimated widths below this fall back to fixed_width
  ControllerGains gains;
  const ModelParams* estimator = nullptr;  // required by the estimator-driven modes
};

struct TrajectoryLog {
  static constexpr std::array<const char*, 18> kColumns = {
      "t",       "x",         "y",           "z",         "heading",   "v_true",
      "yaw_true", "u_x_set",  "u_phi_set",   "u_x_cmd",   "u_phi_cmd", "wheel_left",
      "wheel_right", "v_est", "yaw_est",     "width_est", "width_true", "morph"};
  std::string scenario;
  std::string mode;
  RowMatrix rows;  // N x kColumns.size()
  RowMatrix estimates;  // N x 45 when an estimator ran, else empty

  Eigen::Index size() const { return rows.rows(); }
  double at(Eigen::Index k, const char* column) const;
  static int ColumnIndex(const char* column);
};

struct ScenarioRun {
  Episode episode;
  TrajectoryLog log;
};

// Deterministic for identical (desc, scenario, controller). Throws
// kInvalidScenario, or kInvalidConfig when an estimator-driven mode has no
// estimator.
ScenarioRun RunScenario(const RobotDescription& desc, const Scenario& scenario,
                        const ControllerSpec& controller = {});

}  // namespace morphstate
