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

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "morphstate/episode.hpp"

namespace morphstate {

// Fixed-rate multichannel series; row k is the sample at k * dt.
struct TimeSeries {
  double dt = kDefaultDt;
  RowMatrix samples;

  Eigen::Index size() const { return samples.rows(); }
  Eigen::Index width() const { return samples.cols(); }
};

// y0 = x0, yk = alpha xk + (1 - alpha) y(k-1). Throws kInvalidAlpha unless
// alpha is in (0, 1] and kTooShort on an empty series.
TimeSeries EmaFilter(const TimeSeries& series, double alpha);

// Columns 0..2: linear velocity of the frame origin, 3..5: angular velocity;
// both expressed in the frame at step k. Linear uses central differences in
// the interior, angular averages the rotation-log increments on either side.
// Both fall back to one-sided differences at the ends. Throws kTooShort for
// fewer than two poses.
TimeSeries FiniteDifferenceVelocity(std::span<const FramePose> poses, double dt);

// Rotation vector (axis * angle) of a rotation matrix.
Vec3 RotationLog(const Mat3& rotation);

// ---- normalization -------------------------------------------------------

inline constexpr double kStdFloor = 1e-6;

struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  Eigen::Index width() const { return mean.size(); }
};

// Streaming per-channel mean / population std (Welford).
class NormStatsAccumulator {
 public:
  explicit NormStatsAccumulator(Eigen::Index width);
  void Add(const Eigen::Ref<const RowMatrix>& rows);
  std::uint64_t count() const { return count_; }
  // Throws kEmptyDataset when nothing was added.
  NormStats Finish() const;

 private:
  std::uint64_t count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

NormStats FitNormStats(std::span<const RowMatrix> blocks);

Eigen::VectorXd Normalize(const Eigen::Ref<const Eigen::VectorXd>& v, const NormStats& stats);
Eigen::VectorXd Denormalize(const Eigen::Ref<const Eigen::VectorXd>& v, const NormStats& stats);
RowMatrix NormalizeRows(const Eigen::Ref<const RowMatrix>& rows, const NormStats& stats);

// ---- augmentation ----------------------------------------------------------

// Absolute per-channel noise magnitudes for the 21 input channels. A channel
// gets a sinusoid iff its amplitude is > 0 and an offset iff lo < hi or
// lo == hi != 0.
struct AugmentSpec {
  Eigen::VectorXd gaussian_sigma = Eigen::VectorXd::Zero(kInputWidth);
  Eigen::VectorXd sine_amplitude = Eigen::VectorXd::Zero(kInputWidth);
  double sine_freq_lo = 0.5;  // Hz
  double sine_freq_hi = 3.0;  // Hz
  Eigen::VectorXd offset_lo = Eigen::VectorXd::Zero(kInputWidth);
  Eigen::VectorXd offset_hi = Eigen::VectorXd::Zero(kInputWidth);
  std::uint64_t seed = 0;

  // Throws kInvalidConfig on negative magnitudes, inverted intervals or a
  // frequency band outside (0, 10) Hz.
  void Validate() const;
};

// Magnitudes as fractions of each channel's training std. The untrusted
// (tendon) channels get their own offset fraction.
struct AugmentFractions {
  double gaussian = 0.02;
  double sine = 0.05;
  double sine_freq_lo = 0.5;
  double sine_freq_hi = 3.0;
  double offset = 0.10;
  double untrusted_offset = 1.5;
};

AugmentSpec MakeAugmentSpec(const NormStats& input_stats, const AugmentFractions& fractions,
                            std::uint64_t seed);

// Inputs get Gaussian noise per sample, one sinusoid per selected channel
// (episode-constant frequency and phase) and one episode-constant offset per
// selected channel. Targets, poses and markers are copied untouched.
Episode AugmentEpisode(const Episode& episode, const AugmentSpec& spec);

// One clean copy plus `copies` augmented variants per episode. Variant seeds
// derive from (master_seed, episode index, variant) so the result does not
// depend on scheduling.
std::vector<Episode> AugmentDataset(std::span<const Episode> episodes,
                                    const NormStats& input_stats,
                                    const AugmentFractions& fractions,
                                    std::uint64_t master_seed, int copies = 3);

}  // namespace morphstate
