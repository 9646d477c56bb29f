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

#include "morphstate/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "morphstate/error.hpp"
#include "morphstate/inference.hpp"
#include "morphstate/shape.hpp"
#include "morphstate/signal.hpp"

namespace morphstate {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kGravity = 9.81;
const Vec3 kDown(0.0, 0.0, -1.0);

// Independent random streams so that, e.g., the command schedule does not
// change when the noise level does.
enum Stream : std::uint64_t { kSchedule = 1, kSlip, kSensor, kMarker, kDisturb };

Mat3 Orthonormalize(const Mat3& r) {
  Vec3 x = r.col(0).normalized();
  Vec3 y = r.col(1) - x.dot(r.col(1)) * x;
  y.normalize();
  Mat3 out;
  out.col(0) = x;
  out.col(1) = y;
  out.col(2) = x.cross(y);
  return out;
}

Mat3 TerrainRotation(const std::array<double, 2>& tilt_deg) {
  return (Eigen::AngleAxisd(tilt_deg[0] * kDeg, Vec3::UnitX()) *
          Eigen::AngleAxisd(tilt_deg[1] * kDeg, Vec3::UnitY()))
      .toRotationMatrix();
}

[[noreturn]] void BadScenario(const std::string& msg) {
  throw Error(ErrorKind::kInvalidScenario, msg);
}

bool Finite(double v) { return std::isfinite(v); }

}  // namespace

// ---- robot -------------------------------------------------------------------

void RobotDescription::Validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorKind::kInvalidConfig, msg); };
  if (!(radius > 0.0)) bad("robot radius must be positive");
  if (!(fold_max_deg >= 0.0 && fold_max_deg < 89.0)) bad("fold_max_deg must be in [0, 89)");
  if (!(pinch >= 0.0 && pinch < 0.9)) bad("pinch must be in [0, 0.9)");
  if (!(tendon_span > 0.0 && tendon_max > tendon_span)) bad("tendon lengths must stay positive");
  if (!(morph_rate > 0.0)) bad("morph_rate must be positive");
  if (!(wheel_tau >= 0.0)) bad("wheel_tau must be non-negative");
  if (!(turn_scrub >= 0.0 && turn_scrub < 1.0)) bad("turn_scrub must be in [0, 1)");
  if (!(slip_lo > 0.0 && slip_lo <= slip_hi && slip_hi <= 1.0)) bad("slip range must be in (0, 1]");
  if (!(slip_segment_s > 0.0)) bad("slip_segment_s must be positive");
  if (!(target_ema_alpha > 0.0 && target_ema_alpha <= 1.0)) bad("target_ema_alpha must be in (0, 1]");
  for (double n : {noise_gravity, noise_accel, noise_gyro, noise_encoder, noise_current,
                   noise_tendon, noise_marker}) {
    if (!(n >= 0.0)) bad("noise levels must be non-negative");
  }
  std::set<int> seen;
  for (int id : left_ids) seen.insert(id);
  for (int id : right_ids) {
    if (seen.count(id)) bad("left and right clusters share a marker");
  }
  for (int id : wheel_marker) {
    if (id < 0 || id >= 12) bad("wheel marker index out of range");
  }
  if (!(Width(1.0) > 0.0)) bad("track width collapses");
}

double RobotDescription::FoldAngle(double m) const { return fold_max_deg * kDeg * m; }

double RobotDescription::Width(double m) const {
  // Motor markers sit at +-45 deg and +-135 deg on the ring.
  return 2.0 * radius * std::sin(std::numbers::pi / 4.0) * std::cos(FoldAngle(m));
}

std::array<Point3, 12> RobotDescription::BodyMarkers(double m) const {
  const double beta = FoldAngle(m);
  const double squeeze = 1.0 - pinch * m;
  std::array<Point3, 12> out;
  for (int j = 0; j < 12; ++j) {
    const double th = (15.0 + 30.0 * j) * kDeg;
    const double s = std::sin(th);
    out[j] = Point3(radius * std::cos(th) * squeeze, radius * s * std::cos(beta),
                    radius * std::abs(s) * std::sin(beta));
  }
  return out;
}

ReferencePoints RobotDescription::ReferenceFromMarkers(std::span<const Point3> markers) const {
  if (markers.size() != 12) throw Error(ErrorKind::kShapeMismatch, "expected 12 markers");
  const Point3& fl = markers[wheel_marker[kFrontLeft]];
  const Point3& fr = markers[wheel_marker[kFrontRight]];
  const Point3& bl = markers[wheel_marker[kBackLeft]];
  const Point3& br = markers[wheel_marker[kBackRight]];
  return ReferencePoints{0.5 * (fl + fr), 0.5 * (bl + br), 0.5 * (fl + bl), 0.5 * (fr + br)};
}

std::array<Point3, 12> MarkerPositions(const RobotDescription& desc, double m, const WorldPose& pose) {
  auto pts = desc.BodyMarkers(m);
  for (auto& p : pts) p = pose.orientation * p + pose.position;
  return pts;
}

// ---- scenarios ---------------------------------------------------------------

void Scenario::Validate() const {
  if (name.empty()) BadScenario("scenario needs a name");
  if (!(duration > 0.0 && Finite(duration))) BadScenario("duration must be positive");
  if (!(dt > 0.0 && dt <= duration)) BadScenario("dt must be in (0, duration]");
  if (std::llround(duration / dt) < 2) BadScenario("scenario shorter than two steps");
  if (!(initial_morph >= 0.0 && initial_morph <= 1.0)) BadScenario("initial_morph must be in [0, 1]");
  double last = 0.0;
  for (const auto& p : schedule) {
    if (!(p.t >= last && Finite(p.t))) BadScenario("schedule times must be non-decreasing and >= 0");
    last = p.t;
    if (p.morph && !(*p.morph >= 0.0 && *p.morph <= 1.0)) BadScenario("morph must be in [0, 1]");
    for (const auto& v : {p.u_x, p.u_phi, p.roll_rate}) {
      if (v && !Finite(*v)) BadScenario("schedule values must be finite");
    }
  }
  if (random_segments) {
    const auto& r = *random_segments;
    if (!(r.segment_lo > 0.0 && r.segment_lo <= r.segment_hi)) BadScenario("bad segment length range");
    if (!(r.u_x_lo <= r.u_x_hi && r.u_phi_lo <= r.u_phi_hi)) BadScenario("bad command range");
    if (!(r.p_static >= 0.0 && r.p_static <= 1.0)) BadScenario("p_static must be in [0, 1]");
    for (double m : r.morph_choices) {
      if (!(m >= 0.0 && m <= 1.0)) BadScenario("morph choices must be in [0, 1]");
    }
  }
  for (double g : faults.wheel_gain) {
    if (!(g > 0.0 && g <= 1.0)) BadScenario("wheel gains must be in (0, 1]");
  }
  if (!(faults.tendon_reading_morph >= 0.0 && faults.tendon_reading_morph <= 1.0)) {
    BadScenario("tendon_reading_morph must be in [0, 1]");
  }
  for (const auto& [a, b] : faults.dropouts) {
    if (!(a < b)) BadScenario("dropout intervals need start < end");
  }
  for (double t : terrain_tilt_deg) {
    if (!(std::abs(t) < 45.0)) BadScenario("terrain tilt must be under 45 deg");
  }
  if (!(disturbance >= 0.0 && noise_scale >= 0.0)) BadScenario("disturbance and noise_scale must be >= 0");
}

namespace {

template <typename T>
T Get(const nlohmann::json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

std::optional<double> GetOpt(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

void CheckKeys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) BadScenario(std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      BadScenario("unknown key '" + key + "' in " + where);
    }
  }
}

std::pair<double, double> Range(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return {0.0, 0.0};
  if (!it->is_array() || it->size() != 2) BadScenario(std::string(key) + " must be [lo, hi]");
  return {(*it)[0].get<double>(), (*it)[1].get<double>()};
}

}  // namespace

Scenario ScenarioFromJson(const nlohmann::json& j) {
  Scenario s;
  try {
    CheckKeys(j,
              {"name", "description", "duration", "dt", "seed", "initial_morph", "initial_heading_deg",
               "schedule", "random_segments", "faults", "terrain_tilt_deg", "disturbance",
               "noise_scale", "slip"},
              "scenario");
    s.name = Get<std::string>(j, "name", "");
    s.duration = Get(j, "duration", s.duration);
    s.dt = Get(j, "dt", s.dt);
    s.seed = Get<std::uint64_t>(j, "seed", 0);
    s.initial_morph = Get(j, "initial_morph", 0.0);
    s.initial_heading_deg = Get(j, "initial_heading_deg", 0.0);
    s.disturbance = Get(j, "disturbance", 0.0);
    s.noise_scale = Get(j, "noise_scale", 1.0);
    s.slip = Get(j, "slip", true);
    if (auto it = j.find("terrain_tilt_deg"); it != j.end()) {
      if (!it->is_array() || it->size() != 2) BadScenario("terrain_tilt_deg must be [roll, pitch]");
      s.terrain_tilt_deg = {(*it)[0].get<double>(), (*it)[1].get<double>()};
    }
    for (const auto& e : j.value("schedule", nlohmann::json::array())) {
      CheckKeys(e, {"t", "u_x", "u_phi", "morph", "roll_rate"}, "schedule entry");
      SchedulePoint p;
      p.t = Get(e, "t", 0.0);
      p.u_x = GetOpt(e, "u_x");
      p.u_phi = GetOpt(e, "u_phi");
      p.morph = GetOpt(e, "morph");
      p.roll_rate = GetOpt(e, "roll_rate");
      s.schedule.push_back(p);
    }
    if (auto it = j.find("random_segments"); it != j.end()) {
      const auto& r = *it;
      CheckKeys(r, {"segment_s", "u_x", "u_phi", "morph_choices", "p_static"}, "random_segments");
      RandomSegments rs;
      if (r.contains("segment_s")) std::tie(rs.segment_lo, rs.segment_hi) = Range(r, "segment_s");
      std::tie(rs.u_x_lo, rs.u_x_hi) = Range(r, "u_x");
      std::tie(rs.u_phi_lo, rs.u_phi_hi) = Range(r, "u_phi");
      rs.morph_choices = Get<std::vector<double>>(r, "morph_choices", {});
      rs.p_static = Get(r, "p_static", rs.p_static);
      s.random_segments = rs;
    }
    if (auto it = j.find("faults"); it != j.end()) {
      const auto& f = *it;
      CheckKeys(f, {"wheel_gain", "tendon_detach", "tendon_reading_morph", "dropouts"}, "faults");
      if (auto g = f.find("wheel_gain"); g != f.end()) {
        if (!g->is_array() || g->size() != kWheelCount) BadScenario("wheel_gain needs 4 entries (FL, FR, BL, BR)");
        for (int i = 0; i < kWheelCount; ++i) s.faults.wheel_gain[i] = (*g)[i].get<double>();
      }
      s.faults.tendon_detach = Get(f, "tendon_detach", false);
      s.faults.tendon_reading_morph = Get(f, "tendon_reading_morph", s.faults.tendon_reading_morph);
      for (const auto& d : f.value("dropouts", nlohmann::json::array())) {
        if (!d.is_array() || d.size() != 2) BadScenario("dropouts are [start, end] pairs");
        s.faults.dropouts.emplace_back(d[0].get<double>(), d[1].get<double>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    BadScenario(std::string("malformed scenario: ") + e.what());
  }
  s.Validate();
  return s;
}

nlohmann::json ScenarioToJson(const Scenario& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["duration"] = s.duration;
  j["dt"] = s.dt;
  j["seed"] = s.seed;
  j["initial_morph"] = s.initial_morph;
  j["initial_heading_deg"] = s.initial_heading_deg;
  j["terrain_tilt_deg"] = s.terrain_tilt_deg;
  j["disturbance"] = s.disturbance;
  j["noise_scale"] = s.noise_scale;
  j["slip"] = s.slip;
  auto& sched = j["schedule"] = nlohmann::json::array();
  for (const auto& p : s.schedule) {
    nlohmann::json e{{"t", p.t}};
    if (p.u_x) e["u_x"] = *p.u_x;
    if (p.u_phi) e["u_phi"] = *p.u_phi;
    if (p.morph) e["morph"] = *p.morph;
    if (p.roll_rate) e["roll_rate"] = *p.roll_rate;
    sched.push_back(e);
  }
  if (s.random_segments) {
    const auto& r = *s.random_segments;
    j["random_segments"] = {{"segment_s", {r.segment_lo, r.segment_hi}},
                            {"u_x", {r.u_x_lo, r.u_x_hi}},
                            {"u_phi", {r.u_phi_lo, r.u_phi_hi}},
                            {"morph_choices", r.morph_choices},
                            {"p_static", r.p_static}};
  }
  auto& f = j["faults"];
  f["wheel_gain"] = s.faults.wheel_gain;
  f["tendon_detach"] = s.faults.tendon_detach;
  f["tendon_reading_morph"] = s.faults.tendon_reading_morph;
  f["dropouts"] = nlohmann::json::array();
  for (const auto& [a, b] : s.faults.dropouts) f["dropouts"].push_back({a, b});
  return j;
}

Scenario LoadScenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open scenario " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    BadScenario(path.string() + ": " + e.what());
  }
  return ScenarioFromJson(j);
}

// ---- dynamics ----------------------------------------------------------------

SimState Step(const SimState& state, const RobotDescription& desc, const StepCommand& cmd,
              const FaultSpec& faults, double dt) {
  SimState next = state;
  next.time = state.time + dt;
  next.command = cmd.wheels;

  const double dm = state.morph_target - state.morph;
  const double max_dm = desc.morph_rate * dt;
  next.morph = state.morph + std::clamp(dm, -max_dm, max_dm);

  const double lag = desc.wheel_tau > dt ? dt / desc.wheel_tau : 1.0;
  const std::array<double, kWheelCount> side = {cmd.wheels.left, cmd.wheels.right, cmd.wheels.left,
                                                cmd.wheels.right};
  for (int i = 0; i < kWheelCount; ++i) {
    const double target = side[i] * faults.wheel_gain[i];
    next.wheel[i] = state.wheel[i] + lag * (target - state.wheel[i]);
  }

  const Mat3& r = state.pose.orientation;
  if (cmd.roll_rate != 0.0) {
    const Vec3 normal = r.col(2);
    Vec3 dir = cmd.roll_direction - cmd.roll_direction.dot(normal) * normal;
    dir.normalize();
    next.ang_vel = cmd.roll_rate * normal.cross(dir);
    next.lin_vel = cmd.roll_rate * desc.roll_radius * dir;
  } else {
    const double left = state.slip * 0.5 * (next.wheel[kFrontLeft] + next.wheel[kBackLeft]);
    const double right = state.slip * 0.5 * (next.wheel[kFrontRight] + next.wheel[kBackRight]);
    const double v = 0.5 * (left + right);
    const double yaw = desc.TurnEfficiency(state.morph) * (right - left) / desc.Width(state.morph);
    next.ang_vel = yaw * r.col(2);
    next.lin_vel = v * r.col(0);
  }

  next.pose.position = state.pose.position + next.lin_vel * dt;
  const double angle = next.ang_vel.norm() * dt;
  if (angle > 0.0) {
    next.pose.orientation =
        Orthonormalize(Eigen::AngleAxisd(angle, next.ang_vel.normalized()).toRotationMatrix() * r);
  }

  // Payload on its tendon mount: a damped oscillator pulled off-center by the
  // body-frame acceleration.
  const Vec3 accel = (next.lin_vel - state.lin_vel) / dt;
  const double w0 = 2.0 * std::numbers::pi * desc.payload_freq_hz;
  const double c = 2.0 * desc.payload_damping * w0;
  const double a_fwd = r.col(0).dot(accel);
  const double a_lat = r.col(1).dot(accel) + r.col(0).dot(next.lin_vel) * r.col(2).dot(next.ang_vel);
  const double pitch_acc = -w0 * w0 * (state.payload_pitch - desc.payload_accel_gain * a_fwd) -
                           c * state.payload_pitch_rate;
  const double roll_acc = -w0 * w0 * (state.payload_roll + desc.payload_accel_gain * a_lat) -
                          c * state.payload_roll_rate;
  next.payload_pitch_rate = state.payload_pitch_rate + pitch_acc * dt;
  next.payload_pitch = state.payload_pitch + next.payload_pitch_rate * dt;
  next.payload_roll_rate = state.payload_roll_rate + roll_acc * dt;
  next.payload_roll = state.payload_roll + next.payload_roll_rate * dt;
  return next;
}

Eigen::VectorXd SynthesizeSensors(const SimState& state, const SimState& prev,
                                  const RobotDescription& desc, const Scenario& scenario,
                                  double dt, Rng& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  const double scale = scenario.noise_scale;
  auto noise = [&](double sigma) { return scale > 0.0 && sigma > 0.0 ? scale * sigma * unit(rng) : 0.0; };

  const double m = state.morph;
  const Mat3 payload = state.pose.orientation *
                       (Eigen::AngleAxisd(desc.payload_tilt_deg * kDeg * m + state.payload_pitch,
                                          Vec3::UnitY()) *
                        Eigen::AngleAxisd(state.payload_roll, Vec3::UnitX()))
                           .toRotationMatrix();
  const Mat3 pt = payload.transpose();

  Eigen::VectorXd x(kInputWidth);
  const Vec3 g = pt * kDown;
  const Vec3 accel = (state.lin_vel - prev.lin_vel) / dt;
  const Vec3 specific = pt * (accel + Vec3(0.0, 0.0, kGravity));
  const Vec3 gyro = pt * state.ang_vel + Vec3(state.payload_roll_rate, state.payload_pitch_rate, 0.0);
  for (int i = 0; i < 3; ++i) {
    x[input::kGravity + i] = g[i] + noise(desc.noise_gravity);
    x[input::kLinAccel + i] = specific[i] + noise(desc.noise_accel);
    x[input::kAngVel + i] = gyro[i] + noise(desc.noise_gyro);
  }
  x[input::kWheelCmd] = state.command.left;
  x[input::kWheelCmd + 1] = state.command.right;
  for (int i = 0; i < kWheelCount; ++i) {
    const double w = state.wheel[i];
    x[input::kMotorCurrent + i] = desc.current_idle + desc.current_load * m +
                                  desc.current_speed * std::abs(w) + noise(desc.noise_current);
    x[input::kMotorVel + i] = state.slip * w + noise(desc.noise_encoder);
  }
  const double m_read = scenario.faults.tendon_detach ? scenario.faults.tendon_reading_morph : m;
  for (int i = 0; i < input::kUntrustedCount; ++i) {
    x[input::kTendonLen + i] = desc.TendonLength(m_read) + noise(desc.noise_tendon);
  }
  return x;
}

DerivedTargets DeriveTargets(const Eigen::Ref<const RowMatrix>& markers,
                             const RobotDescription& desc, double dt) {
  if (markers.cols() != 36) throw Error(ErrorKind::kShapeMismatch, "markers must be N x 36");
  const Eigen::Index n = markers.rows();
  DerivedTargets out;
  out.targets.resize(n, kOutputWidth);
  out.poses.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    std::array<Point3, 12> pts;
    for (int j = 0; j < 12; ++j) pts[j] = markers.row(k).segment<3>(3 * j).transpose();
    const FramePose frame = BuildComplianceFrame(desc.ReferenceFromMarkers(pts));
    out.poses[k] = frame;
    for (int j = 0; j < 12; ++j) {
      out.targets.row(k).segment<3>(output::kFramePoints + 3 * j) = WorldToFrame(frame, pts[j]).transpose();
    }
    out.targets.row(k).segment<3>(output::kGravity) = ExpressVectorInFrame(frame, kDown).transpose();
  }
  const TimeSeries vel = EmaFilter(FiniteDifferenceVelocity(out.poses, dt), desc.target_ema_alpha);
  out.targets.middleCols<3>(output::kLinVel) = vel.samples.leftCols<3>();
  out.targets.middleCols<3>(output::kAngVel) = vel.samples.rightCols<3>();
  return out;
}

// ---- scenario runner -----------------------------------------------------------

const char* ControlModeName(ControlMode mode) {
  switch (mode) {
    case ControlMode::kOpenLoop: return "open_loop";
    case ControlMode::kOpenLoopDynamicWidth: return "open_loop_dynamic_width";
    case ControlMode::kClosedLoop: return "closed_loop";
  }
  return "?";
}

ControlMode ParseControlMode(const std::string& name) {
  for (auto m : {ControlMode::kOpenLoop, ControlMode::kOpenLoopDynamicWidth, ControlMode::kClosedLoop}) {
    if (name == ControlModeName(m)) return m;
  }
  throw Error(ErrorKind::kInvalidConfig, "unknown control mode '" + name + "'");
}

int TrajectoryLog::ColumnIndex(const char* column) {
  const std::string_view want(column);
  for (std::size_t i = 0; i < kColumns.size(); ++i) {
    if (want == kColumns[i]) return static_cast<int>(i);
  }
  throw Error(ErrorKind::kShapeMismatch, "no trajectory column " + std::string(column));
}

double TrajectoryLog::at(Eigen::Index k, const char* column) const {
  return rows(k, ColumnIndex(column));
}

namespace {

struct Setpoint {
  double u_x = 0.0;
  double u_phi = 0.0;
  double morph = 0.0;
  double roll_rate = 0.0;
};

// Flattens random segments and explicit entries into one time-ordered list;
// explicit entries win ties.
std::vector<SchedulePoint> ExpandSchedule(const Scenario& s) {
  std::vector<SchedulePoint> out;
  if (s.random_segments) {
    const auto& r = *s.random_segments;
    Rng rng(DeriveSeed(s.seed, kSchedule));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto draw = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
    for (double t = 0.0; t < s.duration;) {
      SchedulePoint p;
      p.t = t;
      const bool still = u01(rng) < r.p_static;
      p.u_x = still ? 0.0 : draw(r.u_x_lo, r.u_x_hi);
      p.u_phi = still ? 0.0 : draw(r.u_phi_lo, r.u_phi_hi);
      if (!r.morph_choices.empty()) {
        p.morph = r.morph_choices[static_cast<std::size_t>(u01(rng) * r.morph_choices.size()) %
                                  r.morph_choices.size()];
      }
      out.push_back(p);
      t += draw(r.segment_lo, r.segment_hi);
    }
  }
  out.insert(out.end(), s.schedule.begin(), s.schedule.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const SchedulePoint& a, const SchedulePoint& b) { return a.t < b.t; });
  return out;
}

bool InDropout(const FaultSpec& f, double t) {
  return std::any_of(f.dropouts.begin(), f.dropouts.end(),
                     [t](const auto& d) { return t >= d.first && t < d.second; });
}

}  // namespace

ScenarioRun RunScenario(const RobotDescription& desc, const Scenario& scenario,
                        const ControllerSpec& controller) {
  scenario.Validate();
  desc.Validate();
  if (controller.mode != ControlMode::kOpenLoop && controller.estimator == nullptr) {
    throw Error(ErrorKind::kInvalidConfig,
                std::string(ControlModeName(controller.mode)) + " needs an estimator");
  }
  const double dt = scenario.dt;
  const auto n = static_cast<Eigen::Index>(std::llround(scenario.duration / dt));
  const auto schedule = ExpandSchedule(scenario);

  Rng slip_rng(DeriveSeed(scenario.seed, kSlip));
  Rng sensor_rng(DeriveSeed(scenario.seed, kSensor));
  Rng marker_rng(DeriveSeed(scenario.seed, kMarker));
  Rng disturb_rng(DeriveSeed(scenario.seed, kDisturb));
  std::uniform_real_distribution<double> slip_dist(desc.slip_lo, desc.slip_hi);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> unit(0.0, 1.0);

  const Mat3 terrain = TerrainRotation(scenario.terrain_tilt_deg);
  SimState state;
  state.pose.orientation =
      terrain * Eigen::AngleAxisd(scenario.initial_heading_deg * kDeg, Vec3::UnitZ()).toRotationMatrix();
  state.morph = state.morph_target = scenario.initial_morph;
  state.slip = scenario.slip ? slip_dist(slip_rng) : 1.0;
  const Vec3 roll_direction = state.pose.orientation.col(0);
  SimState prev = state;

  std::optional<InferenceStream> stream;
  if (controller.estimator) stream.emplace(*controller.estimator, dt);

  ScenarioRun run;
  Episode& ep = run.episode;
  ep.meta.scenario = scenario.name;
  ep.meta.seed = scenario.seed;
  ep.meta.dt = dt;
  ep.Resize(static_cast<std::size_t>(n));
  TrajectoryLog& log = run.log;
  log.scenario = scenario.name;
  log.mode = ControlModeName(controller.mode);
  log.rows.resize(n, static_cast<Eigen::Index>(TrajectoryLog::kColumns.size()));
  if (stream) log.estimates.resize(n, kOutputWidth);

  Setpoint sp;
  sp.morph = scenario.initial_morph;
  std::size_t next_entry = 0;
  double next_slip_change = desc.slip_segment_s;
  ControllerState ctrl;
  const auto nominal = desc.BodyMarkers(0.0);
  RobotShape shape = ReconstructShape(nominal, desc.Width(0.0));
  Eigen::VectorXd sensors;
  const double marker_sigma = desc.noise_marker * scenario.noise_scale;

  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    while (next_entry < schedule.size() && schedule[next_entry].t <= t + 1e-9) {
      const auto& e = schedule[next_entry++];
      if (e.u_x) sp.u_x = *e.u_x;
      if (e.u_phi) sp.u_phi = *e.u_phi;
      if (e.morph) sp.morph = *e.morph;
      if (e.roll_rate) sp.roll_rate = *e.roll_rate;
    }
    state.morph_target = sp.morph;
    if (scenario.slip && t >= next_slip_change) {
      state.slip = slip_dist(slip_rng);
      next_slip_change += desc.slip_segment_s;
    }
    if (scenario.disturbance > 0.0 && u01(disturb_rng) < 0.05) {
      state.payload_pitch_rate += scenario.disturbance * unit(disturb_rng);
      state.payload_roll_rate += scenario.disturbance * unit(disturb_rng);
    }

    // Motion capture.
    ep.time[k] = t;
    const auto markers = MarkerPositions(desc, state.morph, state.pose);
    for (int j = 0; j < 12; ++j) {
      for (int i = 0; i < 3; ++i) {
        ep.markers(k, 3 * j + i) = markers[j][i] + (marker_sigma > 0.0 ? marker_sigma * unit(marker_rng) : 0.0);
      }
    }

    // Proprioception; a dropout repeats the last sample.
    if (k == 0 || !InDropout(scenario.faults, t)) {
      sensors = SynthesizeSensors(state, prev, desc, scenario, dt, sensor_rng);
    }
    ep.inputs.row(k) = sensors.transpose();

    Eigen::VectorXd estimate;
    double width_est = std::nan("");
    if (stream) {
      estimate = stream->Step(t, sensors).estimate;
      log.estimates.row(k) = estimate.transpose();
      const auto pts = UnpackPoints({estimate.data(), 36});
      width_est = EstimateWidth(pts, desc.left_ids, desc.right_ids);
      if (controller.mode == ControlMode::kClosedLoop && width_est >= controller.min_width) {
        try {
          shape = ReconstructShape(pts, width_est);
        } catch (const Error&) {
          // keep the previous shape
        }
      }
    }

    StepCommand cmd;
    cmd.roll_direction = roll_direction;
    TwistCommand corrected{sp.u_x, sp.u_phi};
    const TwistCommand setpoint{sp.u_x, sp.u_phi};
    if (sp.roll_rate != 0.0) {
      cmd.roll_rate = sp.roll_rate;
    } else {
      switch (controller.mode) {
        case ControlMode::kOpenLoop:
          cmd.wheels = SaturateWheels(MixWheels(setpoint, controller.fixed_width),
                                      controller.gains.wheel_limit);
          break;
        case ControlMode::kOpenLoopDynamicWidth: {
          const double w = width_est >= controller.min_width ? width_est : controller.fixed_width;
          cmd.wheels = SaturateWheels(MixWheels(setpoint, w), controller.gains.wheel_limit);
          break;
        }
        case ControlMode::kClosedLoop: {
          if (!(width_est >= controller.min_width)) shape.width = controller.fixed_width;
          const auto out = ClosedLoopStep(estimate, setpoint, shape, ctrl, controller.gains);
          cmd.wheels = out.wheels;
          corrected = out.corrected;
          ctrl = out.state;
          break;
        }
      }
    }

    const Mat3& r = state.pose.orientation;
    const std::array<double, TrajectoryLog::kColumns.size()> row = {
        t,
        state.pose.position.x(),
        state.pose.position.y(),
        state.pose.position.z(),
        std::atan2(r(1, 0), r(0, 0)),
        r.col(0).dot(state.lin_vel),
        r.col(2).dot(state.ang_vel),
        sp.u_x,
        sp.u_phi,
        corrected.u_x,
        corrected.u_phi,
        cmd.wheels.left,
        cmd.wheels.right,
        stream ? estimate[output::kLinVel] : std::nan(""),
        stream ? estimate[output::kAngVel + 2] : std::nan(""),
        width_est,
        desc.Width(state.morph),
        state.morph};
    for (std::size_t c = 0; c < row.size(); ++c) log.rows(k, static_cast<Eigen::Index>(c)) = row[c];

    prev = state;
    state = Step(state, desc, cmd, scenario.faults, dt);
  }

  DerivedTargets derived = DeriveTargets(ep.markers, desc, dt);
  ep.targets = std::move(derived.targets);
  ep.poses = std::move(derived.poses);
  return run;
}

}  // namespace morphstate
