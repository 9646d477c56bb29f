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

#include <array>
#include <span>
#include <vector>

#include "morphstate/geometry.hpp"

namespace morphstate {

inline constexpr int kPointsPerRod = 6;

enum class SplineBoundary {
  kNatural,   // zero curvature at both ends
  kPeriodic,  // closes the rod back onto its first point
};

// Cubic spline through the control points of one rod, one cubic per
// coordinate over cumulative chord length. Stores knot parameters and the
// second derivatives at each knot.
class RodSpline {
 public:
  // Throws kDuplicatePoints when consecutive points are within 1e-9 m.
  RodSpline(std::span<const Point3> points, SplineBoundary boundary = SplineBoundary::kNatural);

  double length() const { return knots_.back(); }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<Point3>& control_points() const { return points_; }
  SplineBoundary boundary() const { return boundary_; }

  Point3 Evaluate(double s) const;
  Vec3 Derivative(double s) const;
  // At a knot, `from_left` selects the segment ending there.
  Vec3 SecondDerivative(double s, bool from_left = false) const;

 private:
  std::size_t Segment(double s, bool from_left) const;

  SplineBoundary boundary_;
  std::vector<Point3> points_;  // includes the closing point when periodic
  std::vector<double> knots_;
  std::vector<Vec3> second_;    // d2/ds2 at each knot
};

struct RobotShape {
  RodSpline rod_a;
  RodSpline rod_b;
  double width;
};

// Splits 12 frame points into the two rods (0..5, 6..11) and fits both.
RobotShape ReconstructShape(std::span<const Point3> frame_points, double width,
                            SplineBoundary boundary = SplineBoundary::kNatural);

// n points at uniform parameter spacing; the first and last are the end
// control points (for periodic splines the last equals the first).
std::vector<Point3> SampleShape(const RodSpline& spline, int n);

// Distance between the mean of the left cluster and the mean of the right
// cluster. Throws kEmptyCluster on an empty set and kShapeMismatch on an
// out-of-range or shared index.
double EstimateWidth(std::span<const Point3> frame_points, std::span<const int> left_ids,
                     std::span<const int> right_ids);

// sqrt(mean of squared coordinate errors over all 3 * N values).
double FramePointRmse(std::span<const Point3> predicted, std::span<const Point3> truth);

// Unpacks a 36-wide point block (x0 y0 z0 x1 ...) into points.
std::vector<Point3> UnpackPoints(std::span<const double> packed);

}  // namespace morphstate
