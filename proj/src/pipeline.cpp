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

#include "morphstate/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "morphstate/error.hpp"
#include "morphstate/inference.hpp"
#include "morphstate/shape.hpp"

namespace morphstate {
namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

void AppendDouble(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

std::string Fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::ofstream OpenOut(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

std::ifstream OpenIn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return in;
}

// Splits a comma-separated record into doubles; false on any malformed field.
bool ParseRecord(const std::string& line, std::vector<double>& values) {
  values.clear();
  const char* p = line.data();
  const char* end = p + line.size();
  while (p <= end) {
    const char* comma = std::find(p, end, ',');
    double v;
    auto res = std::from_chars(p, comma, v);
    if (res.ec != std::errc() || res.ptr != comma) return false;
    values.push_back(v);
    p = comma + 1;
  }
  return true;
}

}  // namespace

// ---- episode files -------------------------------------------------------------

std::vector<std::string> EpisodeColumnNames() {
  std::vector<std::string> cols = {"t"};
  for (int i = 0; i < kInputWidth; ++i) cols.push_back("in" + std::to_string(i));
  for (int i = 0; i < kOutputWidth; ++i) cols.push_back("target" + std::to_string(i));
  for (const char* v : {"origin", "ex", "ey", "ez"}) {
    for (const char* a : {"x", "y", "z"}) cols.push_back(std::string("pose_") + v + "_" + a);
  }
  for (int j = 0; j < 12; ++j) {
    for (const char* a : {"x", "y", "z"}) cols.push_back("marker" + std::to_string(j) + "_" + a);
  }
  return cols;
}

void WriteEpisode(const Episode& ep, std::ostream& out) {
  const std::size_t n = ep.size();
  if (static_cast<std::size_t>(ep.inputs.rows()) != n || static_cast<std::size_t>(ep.targets.rows()) != n ||
      ep.poses.size() != n || static_cast<std::size_t>(ep.markers.rows()) != n) {
    throw Error(ErrorKind::kShapeMismatch, "episode record counts disagree");
  }
  nlohmann::json header = {{"format", "morphstate-episode"},
                           {"version", ep.meta.schema_version},
                           {"scenario", ep.meta.scenario},
                           {"seed", ep.meta.seed},
                           {"dt", ep.meta.dt},
                           {"steps", n},
                           {"split", ep.meta.split},
                           {"variant", ep.meta.variant},
                           {"columns", EpisodeColumnNames()}};
  out << header.dump() << '\n';
  std::string line;
  for (std::size_t k = 0; k < n; ++k) {
    line.clear();
    AppendDouble(line, ep.time[k]);
    auto add_row = [&](const auto& row) {
      for (Eigen::Index i = 0; i < row.size(); ++i) {
        line.push_back(',');
        AppendDouble(line, row[i]);
      }
    };
    add_row(ep.inputs.row(k));
    add_row(ep.targets.row(k));
    const FramePose& pose = ep.poses[k];
    for (const Vec3* v : {&pose.origin, &pose.ex, &pose.ey, &pose.ez}) add_row(*v);
    add_row(ep.markers.row(k));
    line.push_back('\n');
    out << line;
  }
  if (!out) throw Error(ErrorKind::kIo, "episode write failed");
}

void WriteEpisode(const Episode& episode, const std::filesystem::path& path) {
  auto out = OpenOut(path);
  WriteEpisode(episode, out);
}

Episode ReadEpisode(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CorruptRecordError(1, "missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw CorruptRecordError(1, "header is not JSON");
  }
  if (!header.is_object() || header.value("format", "") != "morphstate-episode") {
    throw CorruptRecordError(1, "not an episode file");
  }
  Episode ep;
  std::size_t steps = 0;
  try {
    const int version = header.at("version").get<int>();
    if (version != kEpisodeSchemaVersion) {
      throw Error(ErrorKind::kSchemaVersionMismatch,
                  "episode schema version " + std::to_string(version) + ", expected " +
                      std::to_string(kEpisodeSchemaVersion));
    }
    ep.meta.schema_version = version;
    ep.meta.scenario = header.at("scenario").get<std::string>();
    ep.meta.seed = header.at("seed").get<std::uint64_t>();
    ep.meta.dt = header.at("dt").get<double>();
    ep.meta.split = header.value("split", "train");
    ep.meta.variant = header.value("variant", 0);
    steps = header.at("steps").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptRecordError(1, std::string("bad header: ") + e.what());
  }
  if (!(ep.meta.dt > 0.0)) throw CorruptRecordError(1, "dt must be positive");
  ep.Resize(steps);
  std::vector<double> v;
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t line_no = k + 2;
    if (!std::getline(in, line)) throw CorruptRecordError(line_no, "file ends early");
    if (!ParseRecord(line, v) || v.size() != static_cast<std::size_t>(kEpisodeColumns)) {
      throw CorruptRecordError(line_no, "expected " + std::to_string(kEpisodeColumns) + " numeric fields");
    }
    ep.time[k] = v[0];
    if (k > 0 && std::abs(v[0] - ep.time[k - 1] - ep.meta.dt) > 1e-9) {
      throw CorruptRecordError(line_no, "timestamp does not advance by dt");
    }
    std::size_t c = 1;
    for (int i = 0; i < kInputWidth; ++i) ep.inputs(k, i) = v[c++];
    for (int i = 0; i < kOutputWidth; ++i) ep.targets(k, i) = v[c++];
    FramePose& pose = ep.poses[k];
    for (Vec3* vec : {&pose.origin, &pose.ex, &pose.ey, &pose.ez}) {
      for (int i = 0; i < 3; ++i) (*vec)[i] = v[c++];
    }
    for (int i = 0; i < 36; ++i) ep.markers(k, i) = v[c++];
  }
  if (std::getline(in, line) && !line.empty()) {
    throw CorruptRecordError(steps + 2, "records beyond the declared step count");
  }
  return ep;
}

Episode ReadEpisode(const std::filesystem::path& path) {
  auto in = OpenIn(path);
  return ReadEpisode(in);
}

std::string EpisodeFileName(const EpisodeMeta& meta) {
  std::string name = meta.scenario + "_s" + std::to_string(meta.seed);
  if (meta.variant > 0) name += "_v" + std::to_string(meta.variant);
  return name + ".episode";
}

std::vector<Episode> ReadEpisodeDir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::kIo, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".episode") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Episode> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(ReadEpisode(f));
  return out;
}

// ---- configuration -----------------------------------------------------------

namespace {

[[noreturn]] void BadConfig(const std::string& msg) { throw Error(ErrorKind::kInvalidConfig, msg); }

// Named double fields of the robot description, shared by reader and writer.
std::vector<std::pair<const char*, double RobotDescription::*>> RobotFields() {
  using R = RobotDescription;
  return {{"radius", &R::radius},
          {"fold_max_deg", &R::fold_max_deg},
          {"pinch", &R::pinch},
          {"tendon_max", &R::tendon_max},
          {"tendon_span", &R::tendon_span},
          {"morph_rate", &R::morph_rate},
          {"top_speed", &R::top_speed},
          {"top_yaw_rate", &R::top_yaw_rate},
          {"wheel_tau", &R::wheel_tau},
          {"turn_scrub", &R::turn_scrub},
          {"roll_radius", &R::roll_radius},
          {"current_idle", &R::current_idle},
          {"current_load", &R::current_load},
          {"current_speed", &R::current_speed},
          {"payload_tilt_deg", &R::payload_tilt_deg},
          {"payload_freq_hz", &R::payload_freq_hz},
          {"payload_damping", &R::payload_damping},
          {"payload_accel_gain", &R::payload_accel_gain},
          {"noise_gravity", &R::noise_gravity},
          {"noise_accel", &R::noise_accel},
          {"noise_gyro", &R::noise_gyro},
          {"noise_encoder", &R::noise_encoder},
          {"noise_current", &R::noise_current},
          {"noise_tendon", &R::noise_tendon},
          {"noise_marker", &R::noise_marker},
          {"slip_lo", &R::slip_lo},
          {"slip_hi", &R::slip_hi},
          {"slip_segment_s", &R::slip_segment_s},
          {"target_ema_alpha", &R::target_ema_alpha}};
}

void RejectUnknown(const nlohmann::json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) BadConfig(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      BadConfig("unknown key '" + key + "' in " + where);
    }
  }
}

nlohmann::json GainsToJson(const PIDGains& g) {
  return {{"kp", g.kp}, {"ki", g.ki}, {"kd", g.kd}, {"alpha", g.alpha}};
}

PIDGains GainsFromJson(const nlohmann::json& j, PIDGains g, const std::string& where) {
  RejectUnknown(j, {"kp", "ki", "kd", "alpha"}, where);
  g.kp = j.value("kp", g.kp);
  g.ki = j.value("ki", g.ki);
  g.kd = j.value("kd", g.kd);
  g.alpha = j.value("alpha", g.alpha);
  return g;
}

}  // namespace

void PipelineConfig::Validate() const {
  robot.Validate();
  train.Validate();
  gains.linear.Validate();
  gains.yaw.Validate();
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) BadConfig("validation_fraction must be in [0, 1)");
  if (augment_copies < 0) BadConfig("augment copies must be >= 0");
  if (!(fixed_width > 0.0)) BadConfig("fixed_width must be positive");
  if (!(min_width > 0.0)) BadConfig("min_width must be positive");
  if (!(gains.wheel_limit > 0.0)) BadConfig("wheel_limit must be positive");
  if (!(offcourse_threshold > 0.0)) BadConfig("offcourse_threshold must be positive");
  if (!(steady_state_fraction > 0.0 && steady_state_fraction <= 1.0)) BadConfig("steady_state_fraction must be in (0, 1]");
  for (const auto& d : dataset) {
    if (d.seeds < 1) BadConfig("dataset entry " + d.scenario + " needs seeds >= 1");
  }
  AugmentSpec probe = MakeAugmentSpec(IdentityNorm(kInputWidth), augment, 0);
  probe.Validate();
}

ControllerSpec PipelineConfig::Controller(const ModelParams* estimator) const {
  ControllerSpec spec;
  spec.mode = control_mode;
  spec.fixed_width = fixed_width;
  spec.min_width = min_width;
  spec.gains = gains;
  spec.estimator = estimator;
  return spec;
}

PipelineConfig ConfigFromJson(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    RejectUnknown(j, {"robot", "scenario", "augment", "train", "control"}, "config");
    if (auto it = j.find("robot"); it != j.end()) {
      const auto fields = RobotFields();
      std::vector<std::string> allowed = {"wheel_marker", "left_ids", "right_ids"};
      for (const auto& [name, _] : fields) allowed.emplace_back(name);
      RejectUnknown(*it, allowed, "robot");
      for (const auto& [name, member] : fields) c.robot.*member = it->value(name, c.robot.*member);
      if (it->contains("wheel_marker")) c.robot.wheel_marker = it->at("wheel_marker").get<std::array<int, 4>>();
      if (it->contains("left_ids")) c.robot.left_ids = it->at("left_ids").get<std::vector<int>>();
      if (it->contains("right_ids")) c.robot.right_ids = it->at("right_ids").get<std::vector<int>>();
    }
    if (auto it = j.find("scenario"); it != j.end()) {
      RejectUnknown(*it, {"dir", "dataset", "seed_base", "validation_fraction"}, "scenario");
      c.scenario_dir = it->value("dir", c.scenario_dir.string());
      c.seed_base = it->value("seed_base", c.seed_base);
      c.validation_fraction = it->value("validation_fraction", c.validation_fraction);
      for (const auto& e : it->value("dataset", nlohmann::json::array())) {
        RejectUnknown(e, {"file", "seeds"}, "dataset entry");
        c.dataset.push_back({e.at("file").get<std::string>(), e.value("seeds", 1)});
      }
    }
    if (auto it = j.find("augment"); it != j.end()) {
      RejectUnknown(*it, {"gaussian", "sine", "sine_freq_hz", "offset", "untrusted_offset", "copies", "seed"},
                    "augment");
      auto& a = c.augment;
      a.gaussian = it->value("gaussian", a.gaussian);
      a.sine = it->value("sine", a.sine);
      if (it->contains("sine_freq_hz")) {
        const auto band = it->at("sine_freq_hz").get<std::array<double, 2>>();
        a.sine_freq_lo = band[0];
        a.sine_freq_hi = band[1];
      }
      a.offset = it->value("offset", a.offset);
      a.untrusted_offset = it->value("untrusted_offset", a.untrusted_offset);
      c.augment_copies = it->value("copies", c.augment_copies);
      c.augment_seed = it->value("seed", c.augment_seed);
    }
    if (auto it = j.find("train"); it != j.end()) {
      RejectUnknown(*it, {"tbptt", "learning_rate", "batch_size", "epochs", "beta1", "beta2", "epsilon",
                          "clip_norm", "seed", "parallel"},
                    "train");
      auto& t = c.train;
      t.tbptt_len = it->value("tbptt", t.tbptt_len);
      t.learning_rate = it->value("learning_rate", t.learning_rate);
      t.batch_size = it->value("batch_size", t.batch_size);
      t.epochs = it->value("epochs", t.epochs);
      t.beta1 = it->value("beta1", t.beta1);
      t.beta2 = it->value("beta2", t.beta2);
      t.epsilon = it->value("epsilon", t.epsilon);
      t.clip_norm = it->value("clip_norm", t.clip_norm);
      t.seed = it->value("seed", t.seed);
      t.parallel = it->value("parallel", t.parallel);
    }
    if (auto it = j.find("control"); it != j.end()) {
      RejectUnknown(*it, {"mode", "fixed_width", "min_width", "wheel_limit", "linear", "yaw",
                          "offcourse_threshold", "steady_state_fraction"},
                    "control");
      if (it->contains("mode")) c.control_mode = ParseControlMode(it->at("mode").get<std::string>());
      c.fixed_width = it->value("fixed_width", c.fixed_width);
      c.min_width = it->value("min_width", c.min_width);
      c.gains.wheel_limit = it->value("wheel_limit", c.gains.wheel_limit);
      if (it->contains("linear")) c.gains.linear = GainsFromJson(it->at("linear"), c.gains.linear, "control.linear");
      if (it->contains("yaw")) c.gains.yaw = GainsFromJson(it->at("yaw"), c.gains.yaw, "control.yaw");
      c.offcourse_threshold = it->value("offcourse_threshold", c.offcourse_threshold);
      c.steady_state_fraction = it->value("steady_state_fraction", c.steady_state_fraction);
    }
  } catch (const nlohmann::json::exception& e) {
    BadConfig(std::string("malformed config: ") + e.what());
  }
  c.Validate();
  return c;
}

nlohmann::json ConfigToJson(const PipelineConfig& c) {
  nlohmann::json j;
  auto& robot = j["robot"];
  for (const auto& [name, member] : RobotFields()) robot[name] = c.robot.*member;
  robot["wheel_marker"] = c.robot.wheel_marker;
  robot["left_ids"] = c.robot.left_ids;
  robot["right_ids"] = c.robot.right_ids;
  auto& sc = j["scenario"];
  sc["dir"] = c.scenario_dir.string();
  sc["seed_base"] = c.seed_base;
  sc["validation_fraction"] = c.validation_fraction;
  sc["dataset"] = nlohmann::json::array();
  for (const auto& d : c.dataset) sc["dataset"].push_back({{"file", d.scenario}, {"seeds", d.seeds}});
  j["augment"] = {{"gaussian", c.augment.gaussian},
                  {"sine", c.augment.sine},
                  {"sine_freq_hz", {c.augment.sine_freq_lo, c.augment.sine_freq_hi}},
                  {"offset", c.augment.offset},
                  {"untrusted_offset", c.augment.untrusted_offset},
                  {"copies", c.augment_copies},
                  {"seed", c.augment_seed}};
  j["train"] = {{"tbptt", c.train.tbptt_len},         {"learning_rate", c.train.learning_rate},
                {"batch_size", c.train.batch_size},   {"epochs", c.train.epochs},
                {"beta1", c.train.beta1},             {"beta2", c.train.beta2},
                {"epsilon", c.train.epsilon},         {"clip_norm", c.train.clip_norm},
                {"seed", c.train.seed},               {"parallel", c.train.parallel}};
  j["control"] = {{"mode", ControlModeName(c.control_mode)},
                  {"fixed_width", c.fixed_width},
                  {"min_width", c.min_width},
                  {"wheel_limit", c.gains.wheel_limit},
                  {"linear", GainsToJson(c.gains.linear)},
                  {"yaw", GainsToJson(c.gains.yaw)},
                  {"offcourse_threshold", c.offcourse_threshold},
                  {"steady_state_fraction", c.steady_state_fraction}};
  return j;
}

PipelineConfig LoadConfig(const std::filesystem::path& path) {
  auto in = OpenIn(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    BadConfig(path.string() + ": " + e.what());
  }
  PipelineConfig c = ConfigFromJson(j);
  if (c.scenario_dir.is_relative()) c.scenario_dir = path.parent_path() / c.scenario_dir;
  return c;
}

void AssignSplits(std::vector<Episode>& episodes, double validation_fraction) {
  std::map<std::string, std::vector<std::uint64_t>> seeds;
  for (const auto& ep : episodes) seeds[ep.meta.scenario].push_back(ep.meta.seed);
  std::map<std::string, std::uint64_t> first_val;
  for (auto& [name, list] : seeds) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    const auto held = static_cast<std::size_t>(std::llround(validation_fraction * list.size()));
    first_val[name] = held == 0 ? UINT64_MAX : list[list.size() - held];
  }
  for (auto& ep : episodes) {
    ep.meta.split = ep.meta.seed >= first_val[ep.meta.scenario] ? "val" : "train";
  }
}

std::vector<Episode> SimulateDataset(const PipelineConfig& config) {
  std::vector<Scenario> jobs;
  for (const auto& entry : config.dataset) {
    const Scenario base = LoadScenario(config.scenario_dir / entry.scenario);
    for (int i = 0; i < entry.seeds; ++i) {
      Scenario s = base;
      s.seed = config.seed_base + static_cast<std::uint64_t>(i);
      jobs.push_back(std::move(s));
    }
  }
  std::vector<Episode> out(jobs.size());
  const ControllerSpec open_loop = config.Controller(nullptr);
  const auto count = static_cast<long>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) {
    ControllerSpec c = open_loop;
    c.mode = ControlMode::kOpenLoop;
    out[i] = RunScenario(config.robot, jobs[i], c).episode;
  }
  AssignSplits(out, config.validation_fraction);
  return out;
}

std::vector<Episode> SelectSplit(std::span<const Episode> episodes, const std::string& split) {
  std::vector<Episode> out;
  for (const auto& ep : episodes) {
    if (ep.meta.split == split) out.push_back(ep);
  }
  return out;
}

// ---- metrics -------------------------------------------------------------------

double GravityAngleError(const Vec3& pred, const Vec3& truth) {
  const double np = pred.norm();
  const double nt = truth.norm();
  if (np == 0.0 || nt == 0.0) throw Error(ErrorKind::kZeroVector, "gravity angle of a zero vector");
  const double c = std::clamp(pred.dot(truth) / (np * nt), -1.0, 1.0);
  return std::acos(c) * kRadToDeg;
}

namespace {

struct Accum {
  long steps = 0;
  double frame_sq = 0.0;
  double gravity_sq = 0.0;
  std::array<double, 3> lin_sq{};
  std::array<double, 3> ang_sq{};

  void Add(const Accum& o) {
    steps += o.steps;
    frame_sq += o.frame_sq;
    gravity_sq += o.gravity_sq;
    for (int i = 0; i < 3; ++i) {
      lin_sq[i] += o.lin_sq[i];
      ang_sq[i] += o.ang_sq[i];
    }
  }

  MetricsRow Row(const std::string& name) const {
    MetricsRow r;
    r.scenario = name;
    r.steps = steps;
    if (steps == 0) return r;
    const double n = static_cast<double>(steps);
    r.frame_mm = 1000.0 * std::sqrt(frame_sq / (36.0 * n));
    r.gravity_deg = std::sqrt(gravity_sq / n);
    for (int i = 0; i < 3; ++i) {
      r.lin_mm_s[i] = 1000.0 * std::sqrt(lin_sq[i] / n);
      r.ang_deg_s[i] = kRadToDeg * std::sqrt(ang_sq[i] / n);
    }
    r.lin_mean_mm_s = (r.lin_mm_s[0] + r.lin_mm_s[1] + r.lin_mm_s[2]) / 3.0;
    r.ang_mean_deg_s = (r.ang_deg_s[0] + r.ang_deg_s[1] + r.ang_deg_s[2]) / 3.0;
    return r;
  }
};

Accum ScoreOne(const Episode& ep, const RowMatrix& pred) {
  if (pred.rows() != ep.targets.rows() || pred.cols() != kOutputWidth) {
    throw Error(ErrorKind::kShapeMismatch, "prediction shape does not match episode " + ep.meta.SourceId());
  }
  Accum a;
  a.steps = pred.rows();
  for (Eigen::Index k = 0; k < pred.rows(); ++k) {
    const auto p = pred.row(k);
    const auto t = ep.targets.row(k);
    a.frame_sq += (p.segment<36>(output::kFramePoints) - t.segment<36>(output::kFramePoints)).squaredNorm();
    const Vec3 gp = p.segment<3>(output::kGravity).transpose();
    const Vec3 gt = t.segment<3>(output::kGravity).transpose();
    const double g = gp == gt ? 0.0 : GravityAngleError(gp, gt);
    a.gravity_sq += g * g;
    for (int i = 0; i < 3; ++i) {
      a.lin_sq[i] += std::pow(p[output::kLinVel + i] - t[output::kLinVel + i], 2);
      a.ang_sq[i] += std::pow(p[output::kAngVel + i] - t[output::kAngVel + i], 2);
    }
  }
  return a;
}

}  // namespace

const MetricsRow* MetricsReport::Find(const std::string& scenario) const {
  for (const auto& r : rows) {
    if (r.scenario == scenario) return &r;
  }
  return nullptr;
}

std::string MetricsReport::Table() const {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-28s %7s %9s %8s %9s %9s %9s %9s %9s %9s %9s %9s\n", "scenario", "steps",
                "frame_mm", "grav_deg", "vx_mm/s", "vy_mm/s", "vz_mm/s", "v_mean", "wx_deg/s", "wy_deg/s",
                "wz_deg/s", "w_mean");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-28s %7ld %9.2f %8.3f %9.2f %9.2f %9.2f %9.2f %9.3f %9.3f %9.3f %9.3f\n",
                  r.scenario.c_str(), r.steps, r.frame_mm, r.gravity_deg, r.lin_mm_s[0], r.lin_mm_s[1],
                  r.lin_mm_s[2], r.lin_mean_mm_s, r.ang_deg_s[0], r.ang_deg_s[1], r.ang_deg_s[2],
                  r.ang_mean_deg_s);
    out << buf;
  }
  return out.str();
}

std::string MetricsReport::Csv() const {
  std::string out =
      "scenario,steps,frame_mm,gravity_deg,lin_x_mm_s,lin_y_mm_s,lin_z_mm_s,lin_mean_mm_s,"
      "ang_roll_deg_s,ang_pitch_deg_s,ang_yaw_deg_s,ang_mean_deg_s\n";
  for (const auto& r : rows) {
    out += r.scenario + "," + std::to_string(r.steps);
    for (double v : {r.frame_mm, r.gravity_deg, r.lin_mm_s[0], r.lin_mm_s[1], r.lin_mm_s[2], r.lin_mean_mm_s,
                     r.ang_deg_s[0], r.ang_deg_s[1], r.ang_deg_s[2], r.ang_mean_deg_s}) {
      out += ",";
      AppendDouble(out, v);
    }
    out += "\n";
  }
  return out;
}

MetricsReport ScorePredictions(std::span<const Episode> episodes, std::span<const RowMatrix> predictions) {
  if (episodes.size() != predictions.size()) {
    throw Error(ErrorKind::kShapeMismatch, "one prediction matrix per episode expected");
  }
  if (episodes.empty()) throw Error(ErrorKind::kEmptyDataset, "nothing to evaluate");
  std::map<std::string, Accum> per;
  Accum all;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const Accum a = ScoreOne(episodes[i], predictions[i]);
    per[episodes[i].meta.scenario].Add(a);
    all.Add(a);
  }
  MetricsReport report;
  for (const auto& [name, a] : per) report.rows.push_back(a.Row(name));
  report.rows.push_back(all.Row("all"));
  return report;
}

MetricsReport Evaluate(const ModelParams& params, std::span<const Episode> episodes) {
  for (const auto& ep : episodes) {
    const std::string id = ep.meta.SourceId();
    if (std::find(params.training_sources.begin(), params.training_sources.end(), id) !=
        params.training_sources.end()) {
      throw Error(ErrorKind::kInvalidConfig, "episode " + id + " was used for training");
    }
  }
  std::vector<RowMatrix> predictions(episodes.size());
  const auto count = static_cast<long>(episodes.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) predictions[i] = PredictSequence(params, episodes[i].inputs);
  return ScorePredictions(episodes, predictions);
}

// ---- trajectory comparison -------------------------------------------------------

namespace {

Eigen::Vector2d StartDir(const TrajectoryLog& log) {
  const double h = log.at(0, "heading");
  return {std::cos(h), std::sin(h)};
}

Eigen::Vector2d Offset(const TrajectoryLog& log, Eigen::Index k) {
  return {log.at(k, "x") - log.at(0, "x"), log.at(k, "y") - log.at(0, "y")};
}

}  // namespace

double LateralDeviation(const TrajectoryLog& log, Eigen::Index k) {
  const Eigen::Vector2d d = StartDir(log);
  const Eigen::Vector2d o = Offset(log, k);
  return d.x() * o.y() - d.y() * o.x();
}

double Progress(const TrajectoryLog& log, Eigen::Index k) { return StartDir(log).dot(Offset(log, k)); }

double LateralAtDistance(const TrajectoryLog& log, double distance) {
  if (log.size() == 0) throw Error(ErrorKind::kTooShort, "empty trajectory");
  for (Eigen::Index k = 0; k < log.size(); ++k) {
    if (Progress(log, k) >= distance) return LateralDeviation(log, k);
  }
  return LateralDeviation(log, log.size() - 1);
}

TrajectorySummary SummarizeTrajectory(const TrajectoryLog& log, double offcourse_threshold,
                                      double steady_fraction) {
  if (log.size() < 2) throw Error(ErrorKind::kTooShort, "trajectory needs at least two samples");
  TrajectorySummary s;
  s.scenario = log.scenario;
  s.mode = log.mode;
  const Eigen::Index n = log.size();
  Eigen::Index stop = n - 1;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (std::abs(LateralDeviation(log, k)) > offcourse_threshold) {
      stop = k;
      s.offcourse_time_s = log.at(k, "t");
      break;
    }
  }
  double travel = 0.0;
  for (Eigen::Index k = 0; k <= stop; ++k) travel = std::max(travel, Progress(log, k));
  s.travel_m = travel;
  s.final_lateral_m = LateralDeviation(log, n - 1);
  const auto first = static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * (1.0 - steady_fraction)));
  double err = 0.0;
  for (Eigen::Index k = first; k < n; ++k) err += std::abs(log.at(k, "yaw_true") - log.at(k, "u_phi_set"));
  s.steady_yaw_error = err / static_cast<double>(n - first);
  return s;
}

std::vector<TrajectorySummary> CompareTrajectories(std::span<const TrajectoryLog> logs,
                                                   double offcourse_threshold, double steady_fraction) {
  std::vector<TrajectorySummary> out;
  for (const auto& log : logs) out.push_back(SummarizeTrajectory(log, offcourse_threshold, steady_fraction));
  return out;
}

std::string ComparisonTable(std::span<const TrajectorySummary> rows) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-26s %-24s %9s %11s %10s %14s\n", "scenario", "mode", "travel_m",
                "offcourse_s", "final_lat", "yaw_err_rad/s");
  out << buf;
  for (const auto& r : rows) {
    const std::string when = r.offcourse_time_s < 0.0 ? "never" : Fixed(r.offcourse_time_s, 2);
    std::snprintf(buf, sizeof(buf), "%-26s %-24s %9.3f %11s %10.3f %14.4f\n", r.scenario.c_str(), r.mode.c_str(),
                  r.travel_m, when.c_str(), r.final_lateral_m, r.steady_yaw_error);
    out << buf;
  }
  return out.str();
}

std::string ComparisonCsv(std::span<const TrajectorySummary> rows) {
  std::string out = "scenario,mode,travel_m,offcourse_time_s,final_lateral_m,steady_yaw_error_rad_s\n";
  for (const auto& r : rows) {
    out += r.scenario + "," + r.mode;
    for (double v : {r.travel_m, r.offcourse_time_s, r.final_lateral_m, r.steady_yaw_error}) {
      out += ",";
      AppendDouble(out, v);
    }
    out += "\n";
  }
  return out;
}

void WriteTrajectoryCsv(const TrajectoryLog& log, const std::filesystem::path& path) {
  std::string text = "# morphstate-trajectory scenario=" + log.scenario + " mode=" + log.mode + "\n";
  for (std::size_t c = 0; c < TrajectoryLog::kColumns.size(); ++c) {
    if (c) text += ",";
    text += TrajectoryLog::kColumns[c];
  }
  text += "\n";
  for (Eigen::Index k = 0; k < log.rows.rows(); ++k) {
    for (Eigen::Index c = 0; c < log.rows.cols(); ++c) {
      if (c) text += ",";
      const double v = log.rows(k, c);
      if (std::isnan(v)) {
        text += "nan";
      } else {
        AppendDouble(text, v);
      }
    }
    text += "\n";
  }
  WriteText(path, text);
}

TrajectoryLog ReadTrajectoryCsv(const std::filesystem::path& path) {
  auto in = OpenIn(path);
  std::string line;
  TrajectoryLog log;
  if (!std::getline(in, line) || line.rfind("# morphstate-trajectory", 0) != 0) {
    throw CorruptRecordError(1, path.string() + " is not a trajectory log");
  }
  std::istringstream meta(line.substr(24));
  std::string token;
  while (meta >> token) {
    if (token.rfind("scenario=", 0) == 0) log.scenario = token.substr(9);
    if (token.rfind("mode=", 0) == 0) log.mode = token.substr(5);
  }
  if (!std::getline(in, line)) throw CorruptRecordError(2, "missing column header");
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell == "nan") {
        row.push_back(std::nan(""));
        continue;
      }
      double v;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw CorruptRecordError(line_no, "bad number '" + cell + "'");
      }
      row.push_back(v);
    }
    if (row.size() != TrajectoryLog::kColumns.size()) throw CorruptRecordError(line_no, "wrong column count");
    rows.push_back(std::move(row));
  }
  log.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(TrajectoryLog::kColumns.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t c = 0; c < rows[k].size(); ++c) log.rows(k, c) = rows[k][c];
  }
  return log;
}

void WriteShapeCsv(const TrajectoryLog& log, const std::filesystem::path& path, int every,
                   int samples_per_rod) {
  if (log.estimates.rows() == 0) throw Error(ErrorKind::kEmptyDataset, "trajectory has no estimates");
  if (every < 1 || samples_per_rod < 2) throw Error(ErrorKind::kInvalidConfig, "bad shape sampling");
  std::string text = "t,rod,i,x,y,z\n";
  for (Eigen::Index k = 0; k < log.estimates.rows(); k += every) {
    const auto pts = UnpackPoints({log.estimates.row(k).data(), 36});
    RobotShape shape = ReconstructShape(pts, 1.0);
    const RodSpline* rods[2] = {&shape.rod_a, &shape.rod_b};
    for (int r = 0; r < 2; ++r) {
      const auto samples = SampleShape(*rods[r], samples_per_rod);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        AppendDouble(text, log.at(k, "t"));
        text += r == 0 ? ",a," : ",b,";
        text += std::to_string(i);
        for (int a = 0; a < 3; ++a) {
          text += ",";
          AppendDouble(text, samples[i][a]);
        }
        text += "\n";
      }
    }
  }
  WriteText(path, text);
}

void WriteLossCsv(std::span<const EpochStats> epochs, const std::filesystem::path& path) {
  std::string text = "epoch,train_loss\n";
  for (const auto& e : epochs) {
    text += std::to_string(e.epoch) + ",";
    AppendDouble(text, e.train_loss);
    text += "\n";
  }
  WriteText(path, text);
}

std::vector<EpochStats> ReadLossCsv(const std::filesystem::path& path) {
  auto in = OpenIn(path);
  std::string line;
  std::getline(in, line);
  std::vector<EpochStats> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> v;
    if (!ParseRecord(line, v) || v.size() != 2) throw CorruptRecordError(line_no, "expected epoch,train_loss");
    out.push_back({static_cast<int>(v[0]), v[1]});
  }
  return out;
}

// ---- plots ---------------------------------------------------------------------

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

// Tick spacing of 1, 2 or 5 times a power of ten giving about `target` ticks.
double NiceStep(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  return mag * (r < 1.5 ? 1.0 : r < 3.5 ? 2.0 : r < 7.5 ? 5.0 : 10.0);
}

}  // namespace

std::string LinePlotSvg(const std::string& title, const std::string& x_label, const std::string& y_label,
                        std::span<const PlotSeries> series, bool equal_aspect) {
  constexpr double kW = 720, kH = 480, kL = 70, kR = 170, kT = 40, kB = 55;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-9) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-9) y0 -= 0.5, y1 += 0.5;
  const double pw = kW - kL - kR, ph = kH - kT - kB;
  if (equal_aspect) {
    const double scale = std::max((x1 - x0) / pw, (y1 - y0) / ph);
    const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
    x0 = cx - 0.5 * scale * pw, x1 = cx + 0.5 * scale * pw;
    y0 = cy - 0.5 * scale * ph, y1 = cy + 0.5 * scale * ph;
  } else {
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad, y1 += pad;
  }
  auto px = [&](double x) { return kL + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kT + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kL << "\" y=\"24\" font-size=\"15\">" << Escape(title) << "</text>\n"
      << "<rect x=\"" << kL << "\" y=\"" << kT << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  const double xs = NiceStep(x1 - x0, 6), ys = NiceStep(y1 - y0, 6);
  for (double x = std::ceil(x0 / xs) * xs; x <= x1 + 1e-12; x += xs) {
    svg << "<line x1=\"" << Fixed(px(x), 1) << "\" y1=\"" << kT << "\" x2=\"" << Fixed(px(x), 1) << "\" y2=\""
        << kT + ph << "\" stroke=\"#e5e5e5\"/>\n"
        << "<text x=\"" << Fixed(px(x), 1) << "\" y=\"" << kT + ph + 16 << "\" text-anchor=\"middle\">"
        << Fixed(std::abs(x) < 1e-12 ? 0.0 : x, xs < 1 ? 2 : 0) << "</text>\n";
  }
  for (double y = std::ceil(y0 / ys) * ys; y <= y1 + 1e-12; y += ys) {
    svg << "<line x1=\"" << kL << "\" y1=\"" << Fixed(py(y), 1) << "\" x2=\"" << kL + pw << "\" y2=\""
        << Fixed(py(y), 1) << "\" stroke=\"#e5e5e5\"/>\n"
        << "<text x=\"" << kL - 6 << "\" y=\"" << Fixed(py(y) + 4, 1) << "\" text-anchor=\"end\">"
        << Fixed(std::abs(y) < 1e-12 ? 0.0 : y, ys < 1 ? (ys < 0.1 ? 3 : 2) : 0) << "</text>\n";
  }
  svg << "<text x=\"" << kL + pw / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">" << Escape(x_label)
      << "</text>\n"
      << "<text x=\"16\" y=\"" << kT + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << kT + ph / 2 << ")\">" << Escape(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i) {
      if (!std::isfinite(series[s].x[i]) || !std::isfinite(series[s].y[i])) continue;
      svg << Fixed(px(series[s].x[i]), 1) << "," << Fixed(py(series[s].y[i]), 1) << " ";
    }
    svg << "\"/>\n";
    const double ly = kT + 14 + 18.0 * static_cast<double>(s);
    svg << "<line x1=\"" << kL + pw + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kL + pw + 30 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << kL + pw + 36 << "\" y=\"" << ly << "\">" << Escape(series[s].label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

namespace {

PlotSeries Column(const TrajectoryLog& log, const char* xcol, const char* ycol, const std::string& label) {
  PlotSeries s;
  s.label = label;
  for (Eigen::Index k = 0; k < log.size(); ++k) {
    s.x.push_back(log.at(k, xcol));
    s.y.push_back(log.at(k, ycol));
  }
  return s;
}

}  // namespace

std::string TrajectorySvg(std::span<const TrajectoryLog> logs) {
  std::vector<PlotSeries> series;
  for (const auto& log : logs) series.push_back(Column(log, "x", "y", log.mode));
  return LinePlotSvg("Trajectory (top-down)", "x [m]", "y [m]", series, true);
}

std::string YawTrackingSvg(std::span<const TrajectoryLog> logs) {
  std::vector<PlotSeries> series;
  if (!logs.empty()) series.push_back(Column(logs.front(), "t", "u_phi_set", "setpoint"));
  for (const auto& log : logs) series.push_back(Column(log, "t", "yaw_true", log.mode));
  return LinePlotSvg("Yaw-rate tracking", "t [s]", "yaw rate [rad/s]", series);
}

std::string LossSvg(std::span<const EpochStats> epochs) {
  PlotSeries s;
  s.label = "train loss";
  for (const auto& e : epochs) {
    s.x.push_back(e.epoch);
    s.y.push_back(e.train_loss);
  }
  return LinePlotSvg("Training loss", "epoch", "mean loss per step", std::span<const PlotSeries>(&s, 1));
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  auto out = OpenOut(path);
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace morphstate
