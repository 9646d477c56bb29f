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

// Dataset persistence, configuration, evaluation metrics and reporting.

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "morphstate/episode.hpp"
#include "morphstate/estimator.hpp"
#include "morphstate/signal.hpp"
#include "morphstate/simulator.hpp"
#include "morphstate/training.hpp"

namespace morphstate {

// ---- episode files -------------------------------------------------------------
//
// Line 1 is a JSON header:
//   {"format":"morphstate-episode","version":1,"scenario":...,"seed":...,
//    "dt":...,"steps":N,"split":...,"variant":...,"columns":[...]}
// followed by N comma-separated records of 115 values:
//   t, input[21], target[45], pose origin/ex/ey/ez [12], marker xyz [36]
// Values are written in shortest round-trip form, so reading back is exact.

inline constexpr int kEpisodeColumns = 1 + kInputWidth + kOutputWidth + 12 + 36;

std::vector<std::string> EpisodeColumnNames();

void WriteEpisode(const Episode& episode, std::ostream& out);
void WriteEpisode(const Episode& episode, const std::filesystem::path& path);
// Throws kSchemaVersionMismatch, CorruptRecordError (with the 1-based line)
// or kIo.
Episode ReadEpisode(std::istream& in);
Episode ReadEpisode(const std::filesystem::path& path);

// Every *.episode file in a directory, in file-name order.
std::vector<Episode> ReadEpisodeDir(const std::filesystem::path& dir);
std::string EpisodeFileName(const EpisodeMeta& meta);

// ---- configuration -----------------------------------------------------------

struct DatasetEntry {
  std::string scenario;  // file name, relative to the scenario directory
  int seeds = 1;
};

struct PipelineConfig {
  RobotDescription robot;

  std::filesystem::path scenario_dir = "scenarios";
  std::vector<DatasetEntry> dataset;
  std::uint64_t seed_base = 1000;
  double validation_fraction = 0.2;

  AugmentFractions augment;
  int augment_copies = 3;
  std::uint64_t augment_seed = 7;

  TrainConfig train;

  ControlMode control_mode = ControlMode::kClosedLoop;
  double fixed_width = 0.5;
  double min_width = 0.1;
  ControllerGains gains;

  double offcourse_threshold = 0.5;  // m lateral deviation
  double steady_state_fraction = 0.25;

  // Throws kInvalidConfig.
  void Validate() const;
  ControllerSpec Controller(const ModelParams* estimator) const;
};

// Sections: robot / scenario / augment / train / control. Missing keys keep
// their defaults; unknown keys are rejected.
PipelineConfig ConfigFromJson(const nlohmann::json& j);
nlohmann::json ConfigToJson(const PipelineConfig& config);
PipelineConfig LoadConfig(const std::filesystem::path& path);

// Simulates every dataset entry (seeds seed_base, seed_base + 1, ...) and
// tags whole episodes train/val, stratified by scenario: the last
// round(fraction * seeds) seeds of each scenario are held out.
std::vector<Episode> SimulateDataset(const PipelineConfig& config);
void AssignSplits(std::vector<Episode>& episodes, double validation_fraction);

// Episodes whose meta.split matches.
std::vector<Episode> SelectSplit(std::span<const Episode> episodes, const std::string& split);

// ---- metrics -------------------------------------------------------------------

// Angle between two vectors in degrees. Throws kZeroVector.
double GravityAngleError(const Vec3& pred, const Vec3& truth);

struct MetricsRow {
  std::string scenario;
  long steps = 0;
  double frame_mm = 0.0;    // frame-point RMSE
  double gravity_deg = 0.0; // RMS of the per-step gravity angle
  std::array<double, 3> lin_mm_s{};   // x, y, z
  double lin_mean_mm_s = 0.0;
  std::array<double, 3> ang_deg_s{};  // roll, pitch, yaw
  double ang_mean_deg_s = 0.0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;  // one per scenario, then the pooled "all" row

  const MetricsRow* Find(const std::string& scenario) const;
  std::string Table() const;
  std::string Csv() const;
};

// Scores predictions (physical units, one N x 45 matrix per episode) against
// the episodes' targets, pooled per scenario and over everything.
MetricsReport ScorePredictions(std::span<const Episode> episodes,
                               std::span<const RowMatrix> predictions);

// Runs inference over each episode (belief reset per episode) and scores it.
// Throws kInvalidConfig if an episode's recording was used for training.
MetricsReport Evaluate(const ModelParams& params, std::span<const Episode> episodes);

// ---- trajectory comparison -------------------------------------------------------

struct TrajectorySummary {
  std::string scenario;
  std::string mode;
  double travel_m = 0.0;          // progress along the start heading before going off-course
  double offcourse_time_s = -1.0; // -1 when the run never left the corridor
  double final_lateral_m = 0.0;
  double steady_yaw_error = 0.0;  // rad/s, mean |yaw - setpoint| over the final window
};

// Lateral offset from the line through the start position along the start
// heading, and progress along it.
double LateralDeviation(const TrajectoryLog& log, Eigen::Index k);
double Progress(const TrajectoryLog& log, Eigen::Index k);
// Lateral deviation when progress first reaches `distance` (the last sample's
// deviation if it never does).
double LateralAtDistance(const TrajectoryLog& log, double distance);

TrajectorySummary SummarizeTrajectory(const TrajectoryLog& log, double offcourse_threshold = 0.5,
                                      double steady_fraction = 0.25);
std::vector<TrajectorySummary> CompareTrajectories(std::span<const TrajectoryLog> logs,
                                                   double offcourse_threshold = 0.5,
                                                   double steady_fraction = 0.25);
std::string ComparisonTable(std::span<const TrajectorySummary> rows);
std::string ComparisonCsv(std::span<const TrajectorySummary> rows);

void WriteTrajectoryCsv(const TrajectoryLog& log, const std::filesystem::path& path);
TrajectoryLog ReadTrajectoryCsv(const std::filesystem::path& path);

// Spline samples of the estimated shape every `every` steps:
// t, rod, i, x, y, z in the compliance frame.
void WriteShapeCsv(const TrajectoryLog& log, const std::filesystem::path& path, int every = 20,
                   int samples_per_rod = 24);

void WriteLossCsv(std::span<const EpochStats> epochs, const std::filesystem::path& path);
std::vector<EpochStats> ReadLossCsv(const std::filesystem::path& path);

// ---- plots ---------------------------------------------------------------------

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Static line plot with axes, ticks and a legend.
std::string LinePlotSvg(const std::string& title, const std::string& x_label,
                        const std::string& y_label, std::span<const PlotSeries> series,
                        bool equal_aspect = false);

std::string TrajectorySvg(std::span<const TrajectoryLog> logs);  // top-down x/y
std::string YawTrackingSvg(std::span<const TrajectoryLog> logs); // yaw rate vs time
std::string LossSvg(std::span<const EpochStats> epochs);

void WriteText(const std::filesystem::path& path, const std::string& text);

}  // namespace morphstate
