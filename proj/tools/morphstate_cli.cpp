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

// Command-line front end:
//   morphstate simulate | augment | train | eval | run | report
// Every subcommand exits 0 on success and 1 with a message on error.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "morphstate/error.hpp"
#include "morphstate/inference.hpp"
#include "morphstate/pipeline.hpp"

namespace fs = std::filesystem;
using namespace morphstate;

namespace {

PipelineConfig ConfigOrDefault(const std::string& path) {
  return path.empty() ? PipelineConfig{} : LoadConfig(path);
}

void WriteAll(const std::vector<Episode>& episodes, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& ep : episodes) WriteEpisode(ep, dir / EpisodeFileName(ep.meta));
}

// ---- simulate -------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::vector<std::string> scenarios;
  int seeds = 1;
  std::uint64_t seed_base = 0;
  bool seed_base_set = false;
  std::string split = "train";
  std::string out;
};

int Simulate(const SimulateArgs& a) {
  PipelineConfig cfg = ConfigOrDefault(a.config);
  std::vector<Episode> episodes;
  if (a.scenarios.empty()) {
    if (cfg.dataset.empty()) throw Error(ErrorKind::kInvalidConfig, "no --scenario given and the config has no dataset");
    episodes = SimulateDataset(cfg);
  } else {
    for (const auto& file : a.scenarios) {
      const Scenario base = LoadScenario(file);
      for (int i = 0; i < a.seeds; ++i) {
        Scenario s = base;
        s.seed = (a.seed_base_set ? a.seed_base : base.seed) + static_cast<std::uint64_t>(i);
        Episode ep = RunScenario(cfg.robot, s).episode;
        ep.meta.split = a.split;
        episodes.push_back(std::move(ep));
      }
    }
  }
  WriteAll(episodes, a.out);
  long steps = 0;
  for (const auto& ep : episodes) steps += static_cast<long>(ep.size());
  std::fprintf(stderr, "simulate: %zu episodes, %ld steps -> %s\n", episodes.size(), steps, a.out.c_str());
  return 0;
}

// ---- augment --------------------------------------------------------------------

struct AugmentArgs {
  std::string config;
  std::string in;
  std::string out;
};

int Augment(const AugmentArgs& a) {
  const PipelineConfig cfg = ConfigOrDefault(a.config);
  const auto all = ReadEpisodeDir(a.in);
  std::vector<Episode> train;
  std::vector<Episode> rest;
  for (const auto& ep : all) {
    if (ep.meta.variant != 0) continue;
    (ep.meta.split == "train" ? train : rest).push_back(ep);
  }
  if (train.empty()) throw Error(ErrorKind::kEmptyDataset, "no clean train-split episodes in " + a.in);
  std::vector<RowMatrix> blocks;
  for (const auto& ep : train) blocks.push_back(ep.inputs);
  const NormStats stats = FitNormStats(blocks);
  auto augmented = AugmentDataset(train, stats, cfg.augment, cfg.augment_seed, cfg.augment_copies);
  WriteAll(augmented, a.out);
  WriteAll(rest, a.out);  // held-out episodes pass through untouched
  std::fprintf(stderr, "augment: %zu train episodes -> %zu, %zu held out copied\n", train.size(),
               augmented.size(), rest.size());
  return 0;
}

// ---- train ----------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string loss;
  int epochs = 0;
  bool serial = false;
  bool quiet = false;
};

int TrainCmd(const TrainArgs& a) {
  PipelineConfig cfg = ConfigOrDefault(a.config);
  if (a.epochs > 0) cfg.train.epochs = a.epochs;
  if (a.serial) cfg.train.parallel = false;
  const auto episodes = SelectSplit(ReadEpisodeDir(a.data), "train");
  if (episodes.empty()) throw Error(ErrorKind::kEmptyDataset, "no train-split episodes in " + a.data);
  TrainReport report;
  const ModelParams params = Train(episodes, cfg.train, &report, [&](const EpochStats& s, const ModelParams&) {
    if (!a.quiet) std::fprintf(stderr, "epoch %3d  loss %.6f\n", s.epoch, s.train_loss);
  });
  SaveParams(params, a.out);
  if (!a.loss.empty()) WriteLossCsv(report.epochs, a.loss);
  std::fprintf(stderr, "train: %zu episodes, loss %.5f -> %.5f, params -> %s\n", episodes.size(),
               report.initial_loss, report.final_loss, a.out.c_str());
  return 0;
}

// ---- eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string params;
  std::vector<std::string> data;
  std::string split = "val";
  std::string csv;
};

int Eval(const EvalArgs& a) {
  const ModelParams params = LoadParams(a.params);
  std::vector<Episode> episodes;
  for (const auto& dir : a.data) {
    for (auto& ep : ReadEpisodeDir(dir)) {
      if (ep.meta.variant == 0 && (a.split == "all" || ep.meta.split == a.split)) episodes.push_back(std::move(ep));
    }
  }
  if (episodes.empty()) throw Error(ErrorKind::kEmptyDataset, "no '" + a.split + "' episodes to evaluate");
  const MetricsReport report = Evaluate(params, episodes);
  std::fputs(report.Table().c_str(), stdout);
  if (!a.csv.empty()) WriteText(a.csv, report.Csv());
  return 0;
}

// ---- run ------------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::string params;
  std::string scenario;
  std::string mode;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string shape;
  int shape_every = 20;
};

int Run(const RunArgs& a) {
  const PipelineConfig cfg = ConfigOrDefault(a.config);
  Scenario scenario = LoadScenario(a.scenario);
  if (a.seed_set) scenario.seed = a.seed;
  ModelParams params;
  ControllerSpec controller = cfg.Controller(nullptr);
  if (!a.mode.empty()) controller.mode = ParseControlMode(a.mode);
  if (!a.params.empty()) {
    params = LoadParams(a.params);
    controller.estimator = &params;
  }
  const ScenarioRun run = RunScenario(cfg.robot, scenario, controller);
  WriteTrajectoryCsv(run.log, a.out);
  if (!a.shape.empty()) WriteShapeCsv(run.log, a.shape, a.shape_every);
  const auto summary = SummarizeTrajectory(run.log, cfg.offcourse_threshold, cfg.steady_state_fraction);
  std::fputs(ComparisonTable(std::span<const TrajectorySummary>(&summary, 1)).c_str(), stdout);
  return 0;
}

// ---- report ---------------------------------------------------------------------

struct ReportArgs {
  std::string config;
  std::vector<std::string> logs;
  std::string loss;
  std::string out;
};

int Report(const ReportArgs& a) {
  const PipelineConfig cfg = ConfigOrDefault(a.config);
  std::vector<TrajectoryLog> logs;
  for (const auto& f : a.logs) logs.push_back(ReadTrajectoryCsv(f));
  const fs::path out(a.out);
  fs::create_directories(out);
  if (!logs.empty()) {
    const auto rows = CompareTrajectories(logs, cfg.offcourse_threshold, cfg.steady_state_fraction);
    const std::string table = ComparisonTable(rows);
    std::fputs(table.c_str(), stdout);
    WriteText(out / "comparison.txt", table);
    WriteText(out / "comparison.csv", ComparisonCsv(rows));
    WriteText(out / "trajectory.svg", TrajectorySvg(logs));
    WriteText(out / "yaw_tracking.svg", YawTrackingSvg(logs));
  }
  if (!a.loss.empty()) WriteText(out / "loss.svg", LossSvg(ReadLossCsv(a.loss)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proprioceptive state estimation and control for a morphing robot (simulated)"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run scenarios and write episode files");
  s->add_option("--config", sim.config, "Pipeline config (robot model, dataset list)")->check(CLI::ExistingFile);
  s->add_option("--scenario", sim.scenarios, "Scenario file(s); default: the config's dataset")->check(CLI::ExistingFile);
  s->add_option("--seeds", sim.seeds, "Seeds per scenario")->check(CLI::PositiveNumber);
  auto* sb = s->add_option("--seed-base", sim.seed_base, "First seed (default: the scenario's own)");
  s->add_option("--split", sim.split, "Split tag for --scenario episodes")->check(CLI::IsMember({"train", "val", "test"}));
  s->add_option("--out", sim.out, "Output directory")->required();

  AugmentArgs aug;
  auto* g = app.add_subcommand("augment", "Write clean + augmented copies of the train split");
  g->add_option("--config", aug.config, "Pipeline config (augment section)")->check(CLI::ExistingFile);
  g->add_option("--in", aug.in, "Episode directory")->required()->check(CLI::ExistingDirectory);
  g->add_option("--out", aug.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Fit the estimator on the train split");
  t->add_option("--config", tr.config, "Pipeline config (train section)")->check(CLI::ExistingFile);
  t->add_option("--data", tr.data, "Episode directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", tr.out, "Parameter file to write")->required();
  t->add_option("--loss", tr.loss, "Loss-curve CSV to write");
  t->add_option("--epochs", tr.epochs, "Override the configured epoch count")->check(CLI::PositiveNumber);
  t->add_flag("--serial", tr.serial, "Use the serial gradient kernel");
  t->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a parameter file on held-out episodes");
  e->add_option("--params", ev.params, "Parameter file")->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "Episode directories")->required();
  e->add_option("--split", ev.split, "Split to score")->check(CLI::IsMember({"train", "val", "test", "all"}));
  e->add_option("--csv", ev.csv, "Metrics CSV to write");

  RunArgs run;
  auto* r = app.add_subcommand("run", "Drive a scenario with a controller and log the trajectory");
  r->add_option("--config", run.config, "Pipeline config (robot, control)")->check(CLI::ExistingFile);
  r->add_option("--params", run.params, "Estimator parameters (needed by the estimator-driven modes)")
      ->check(CLI::ExistingFile);
  r->add_option("--scenario", run.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  r->add_option("--mode", run.mode, "open_loop | open_loop_dynamic_width | closed_loop");
  auto* rs = r->add_option("--seed", run.seed, "Override the scenario seed");
  r->add_option("--out", run.out, "Trajectory CSV to write")->required();
  r->add_option("--shape", run.shape, "Estimated-shape CSV to write");
  r->add_option("--shape-every", run.shape_every, "Steps between shape snapshots")->check(CLI::PositiveNumber);

  ReportArgs rep;
  auto* p = app.add_subcommand("report", "Compare trajectory logs and render plots");
  p->add_option("--config", rep.config, "Pipeline config (off-course threshold)")->check(CLI::ExistingFile);
  p->add_option("--logs", rep.logs, "Trajectory CSVs")->check(CLI::ExistingFile);
  p->add_option("--loss", rep.loss, "Loss-curve CSV")->check(CLI::ExistingFile);
  p->add_option("--out", rep.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  sim.seed_base_set = sb->count() > 0;
  run.seed_set = rs->count() > 0;

  try {
    if (s->parsed()) return Simulate(sim);
    if (g->parsed()) return Augment(aug);
    if (t->parsed()) return TrainCmd(tr);
    if (e->parsed()) return Eval(ev);
    if (r->parsed()) return Run(run);
    if (p->parsed()) return Report(rep);
  } catch (const CorruptRecordError& err) {
    std::fprintf(stderr, "error (line %zu): %s\n", err.line(), err.what());
    return 1;
  } catch (const Error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 1;
}
