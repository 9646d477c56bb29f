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

#include "morphstate/signal.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "morphstate/error.hpp"
#include "morphstate/random.hpp"

namespace morphstate {

TimeSeries EmaFilter(const TimeSeries& series, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw Error(ErrorKind::kInvalidAlpha, "alpha must be in (0, 1], got " + std::to_string(alpha));
  }
  if (series.size() == 0) throw Error(ErrorKind::kTooShort, "EMA of an empty series");

  TimeSeries out{series.dt, RowMatrix(series.size(), series.width())};
  out.samples.row(0) = series.samples.row(0);
  const double keep = 1.0 - alpha;
  for (Eigen::Index k = 1; k < series.size(); ++k) {
    out.samples.row(k) = alpha * series.samples.row(k) + keep * out.samples.row(k - 1);
  }
  return out;
}

Vec3 RotationLog(const Mat3& rotation) {
  const Eigen::Quaterniond q(rotation);
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-300) return Vec3::Zero();
  // Shortest rotation: keep w >= 0 so the angle stays in [0, pi].
  const double w = q.w();
  const double angle = 2.0 * std::atan2(s, std::abs(w));
  return (w < 0.0 ? -1.0 : 1.0) * (angle / s) * v;
}

TimeSeries FiniteDifferenceVelocity(std::span<const FramePose> poses, double dt) {
  const auto n = static_cast<Eigen::Index>(poses.size());
  if (n < 2) throw Error(ErrorKind::kTooShort, "finite differences need at least two poses");
  if (!(dt > 0.0)) throw Error(ErrorKind::kInvalidConfig, "dt must be positive");

  std::vector<Mat3> rot(poses.size());
  for (std::size_t k = 0; k < poses.size(); ++k) rot[k] = poses[k].rotation();

  // Body-frame rotation increment between k and k+1.
  std::vector<Vec3> increment(poses.size() - 1);
  for (std::size_t k = 0; k + 1 < poses.size(); ++k) {
    increment[k] = RotationLog(rot[k].transpose() * rot[k + 1]);
  }

  TimeSeries out{dt, RowMatrix(n, 6)};
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    Vec3 linear;
    Vec3 angular;
    if (k == 0) {
      linear = (poses[1].origin - poses[0].origin) / dt;
      angular = increment[0] / dt;
    } else if (k == n - 1) {
      linear = (poses[i].origin - poses[i - 1].origin) / dt;
      angular = increment[i - 1] / dt;
    } else {
      linear = (poses[i + 1].origin - poses[i - 1].origin) / (2.0 * dt);
      angular = (increment[i - 1] + increment[i]) / (2.0 * dt);
    }
    out.samples.block<1, 3>(k, 0) = (rot[i].transpose() * linear).transpose();
    out.samples.block<1, 3>(k, 3) = angular.transpose();
  }
  return out;
}

// ---- normalization ---------------------------------------------------------

NormStatsAccumulator::NormStatsAccumulator(Eigen::Index width)
    : mean_(Eigen::VectorXd::Zero(width)), m2_(Eigen::VectorXd::Zero(width)) {}

void NormStatsAccumulator::Add(const Eigen::Ref<const RowMatrix>& rows) {
  if (rows.cols() != mean_.size()) {
    throw Error(ErrorKind::kShapeMismatch, "normalization block has width " +
                                               std::to_string(rows.cols()) + ", expected " +
                                               std::to_string(mean_.size()));
  }
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    ++count_;
    const Eigen::VectorXd x = rows.row(r).transpose();
    const Eigen::VectorXd delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta.cwiseProduct(x - mean_);
  }
}

NormStats NormStatsAccumulator::Finish() const {
  if (count_ == 0) throw Error(ErrorKind::kEmptyDataset, "cannot fit normalization on no samples");
  NormStats stats;
  stats.mean = mean_;
  stats.std = (m2_ / static_cast<double>(count_)).cwiseSqrt().cwiseMax(kStdFloor);
  return stats;
}

NormStats FitNormStats(std::span<const RowMatrix> blocks) {
  if (blocks.empty()) throw Error(ErrorKind::kEmptyDataset, "no blocks");
  NormStatsAccumulator acc(blocks.front().cols());
  for (const auto& b : blocks) acc.Add(b);
  return acc.Finish();
}

Eigen::VectorXd Normalize(const Eigen::Ref<const Eigen::VectorXd>& v, const NormStats& stats) {
  if (v.size() != stats.width()) throw Error(ErrorKind::kShapeMismatch, "normalize width");
  return (v - stats.mean).cwiseQuotient(stats.std);
}

Eigen::VectorXd Denormalize(const Eigen::Ref<const Eigen::VectorXd>& v, const NormStats& stats) {
  if (v.size() != stats.width()) throw Error(ErrorKind::kShapeMismatch, "denormalize width");
  return v.cwiseProduct(stats.std) + stats.mean;
}

RowMatrix NormalizeRows(const Eigen::Ref<const RowMatrix>& rows, const NormStats& stats) {
  if (rows.cols() != stats.width()) throw Error(ErrorKind::kShapeMismatch, "normalize width");
  RowMatrix out(rows.rows(), rows.cols());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    out.row(r) = (rows.row(r) - stats.mean.transpose()).cwiseQuotient(stats.std.transpose());
  }
  return out;
}

// ---- augmentation ----------------------------------------------------------

void AugmentSpec::Validate() const {
  auto check_width = [](const Eigen::VectorXd& v, const char* name) {
    if (v.size() != kInputWidth) {
      throw Error(ErrorKind::kInvalidConfig, std::string(name) + " must have 21 entries");
    }
  };
  check_width(gaussian_sigma, "gaussian_sigma");
  check_width(sine_amplitude, "sine_amplitude");
  check_width(offset_lo, "offset_lo");
  check_width(offset_hi, "offset_hi");
  if ((gaussian_sigma.array() < 0.0).any() || !gaussian_sigma.allFinite()) {
    throw Error(ErrorKind::kInvalidConfig, "gaussian_sigma must be >= 0");
  }
  if ((sine_amplitude.array() < 0.0).any() || !sine_amplitude.allFinite()) {
    throw Error(ErrorKind::kInvalidConfig, "sine_amplitude must be >= 0");
  }
  if ((offset_lo.array() > offset_hi.array()).any()) {
    throw Error(ErrorKind::kInvalidConfig, "offset interval has lo > hi");
  }
  if (!(sine_freq_lo > 0.0 && sine_freq_lo <= sine_freq_hi && sine_freq_hi < 10.0)) {
    throw Error(ErrorKind::kInvalidConfig, "sine frequency band must lie in (0, 10) Hz");
  }
}

AugmentSpec MakeAugmentSpec(const NormStats& input_stats, const AugmentFractions& fractions,
                            std::uint64_t seed) {
  if (input_stats.width() != kInputWidth) {
    throw Error(ErrorKind::kShapeMismatch, "input statistics must be 21 wide");
  }
  AugmentSpec spec;
  const Eigen::VectorXd& sd = input_stats.std;
  spec.gaussian_sigma = fractions.gaussian * sd;
  spec.sine_amplitude = fractions.sine * sd;
  spec.sine_freq_lo = fractions.sine_freq_lo;
  spec.sine_freq_hi = fractions.sine_freq_hi;
  spec.offset_hi = fractions.offset * sd;
  spec.offset_hi.segment(input::kTendonLen, input::kUntrustedCount) =
      fractions.untrusted_offset * sd.segment(input::kTendonLen, input::kUntrustedCount);
  spec.offset_lo = -spec.offset_hi;
  spec.seed = seed;
  spec.Validate();
  return spec;
}

Episode AugmentEpisode(const Episode& episode, const AugmentSpec& spec) {
  spec.Validate();
  if (episode.inputs.cols() != kInputWidth) {
    throw Error(ErrorKind::kShapeMismatch, "episode inputs must be 21 wide");
  }
  Episode out = episode;
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  struct ChannelNoise {
    bool sine = false;
    double omega = 0.0;
    double phase = 0.0;
    double offset = 0.0;
  };
  std::vector<ChannelNoise> noise(kInputWidth);
  for (int c = 0; c < kInputWidth; ++c) {
    if (spec.sine_amplitude[c] > 0.0) {
      const double f = spec.sine_freq_lo + (spec.sine_freq_hi - spec.sine_freq_lo) * unit(rng);
      noise[c].sine = true;
      noise[c].omega = 2.0 * std::numbers::pi * f;
      noise[c].phase = 2.0 * std::numbers::pi * unit(rng);
    }
    if (spec.offset_lo[c] < spec.offset_hi[c]) {
      noise[c].offset = spec.offset_lo[c] + (spec.offset_hi[c] - spec.offset_lo[c]) * unit(rng);
    } else if (spec.offset_lo[c] != 0.0) {
      noise[c].offset = spec.offset_lo[c];
    }
  }

  const double dt = episode.meta.dt;
  for (Eigen::Index k = 0; k < out.inputs.rows(); ++k) {
    const double t = static_cast<double>(k) * dt;
    for (int c = 0; c < kInputWidth; ++c) {
      double& x = out.inputs(k, c);
      if (spec.gaussian_sigma[c] > 0.0) x += spec.gaussian_sigma[c] * gauss(rng);
      if (noise[c].sine) x += spec.sine_amplitude[c] * std::sin(noise[c].omega * t + noise[c].phase);
      if (noise[c].offset != 0.0) x += noise[c].offset;
    }
  }
  return out;
}

std::vector<Episode> AugmentDataset(std::span<const Episode> episodes,
                                    const NormStats& input_stats,
                                    const AugmentFractions& fractions,
                                    std::uint64_t master_seed, int copies) {
  const int per_episode = copies + 1;
  std::vector<Episode> out(episodes.size() * static_cast<std::size_t>(per_episode));
  const auto n = static_cast<std::ptrdiff_t>(episodes.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const std::size_t base = idx * static_cast<std::size_t>(per_episode);
    out[base] = episodes[idx];
    out[base].meta.variant = 0;
    for (int v = 1; v <= copies; ++v) {
      const AugmentSpec spec = MakeAugmentSpec(
          input_stats, fractions, DeriveSeed(master_seed, idx, static_cast<std::uint64_t>(v)));
      out[base + static_cast<std::size_t>(v)] = AugmentEpisode(episodes[idx], spec);
      out[base + static_cast<std::size_t>(v)].meta.variant = v;
    }
  }
  return out;
}

}  // namespace morphstate
