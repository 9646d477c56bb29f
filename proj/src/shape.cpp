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

#include "morphstate/shape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "morphstate/error.hpp"

namespace morphstate {
namespace {

constexpr double kDuplicateTolerance = 1e-9;

// Second derivatives of a natural cubic spline (Thomas algorithm on the
// standard tridiagonal system), one coordinate at a time.
std::vector<Vec3> SolveNatural(const std::vector<Point3>& p, const std::vector<double>& s) {
  const std::size_t n = p.size();
  std::vector<Vec3> m(n, Vec3::Zero());
  if (n < 3) return m;
  const std::size_t inner = n - 2;
  std::vector<double> diag(inner), upper(inner), lower(inner);
  std::vector<Vec3> rhs(inner);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = s[i] - s[i - 1];
    const double h1 = s[i + 1] - s[i];
    lower[i - 1] = h0;
    diag[i - 1] = 2.0 * (h0 + h1);
    upper[i - 1] = h1;
    rhs[i - 1] = 6.0 * ((p[i + 1] - p[i]) / h1 - (p[i] - p[i - 1]) / h0);
  }
  for (std::size_t i = 1; i < inner; ++i) {
    const double w = lower[i] / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  m[inner] = rhs[inner - 1] / diag[inner - 1];
  for (std::size_t i = inner - 1; i-- > 0;) {
    m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
  }
  return m;
}

// Periodic spline over a closed polygon whose last point repeats the first.
// The cyclic system is tiny (<= 6 unknowns), so it is solved densely.
std::vector<Vec3> SolvePeriodic(const std::vector<Point3>& p, const std::vector<double>& s) {
  const std::size_t n = p.size() - 1;  // distinct knots
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::MatrixXd b(static_cast<Eigen::Index>(n), 3);
  auto h = [&](std::size_t i) { return s[i + 1] - s[i]; };  // segment i: knot i -> i+1
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t prev = (i + n - 1) % n;
    const double h0 = h(prev);
    const double h1 = h(i);
    const auto r = static_cast<Eigen::Index>(i);
    a(r, static_cast<Eigen::Index>(prev)) += h0;
    a(r, r) += 2.0 * (h0 + h1);
    a(r, static_cast<Eigen::Index>((i + 1) % n)) += h1;
    const Point3& p_prev = p[prev];
    const Point3& p_next = p[i + 1];
    b.row(r) = (6.0 * ((p_next - p[i]) / h1 - (p[i] - p_prev) / h0)).transpose();
  }
  const Eigen::MatrixXd sol = a.partialPivLu().solve(b);
  std::vector<Vec3> m(n + 1);
  for (std::size_t i = 0; i < n; ++i) m[i] = sol.row(static_cast<Eigen::Index>(i)).transpose();
  m[n] = m[0];
  return m;
}

}  // namespace

RodSpline::RodSpline(std::span<const Point3> points, SplineBoundary boundary)
    : boundary_(boundary), points_(points.begin(), points.end()) {
  if (points_.size() < 2) throw Error(ErrorKind::kTooShort, "a rod spline needs at least two points");
  if (boundary_ == SplineBoundary::kPeriodic) {
    if (points_.size() < 3) throw Error(ErrorKind::kTooShort, "a periodic spline needs three points");
    points_.push_back(points_.front());
  }
  knots_.assign(points_.size(), 0.0);
  for (std::size_t i = 1; i < points_.size(); ++i) {
    const double chord = (points_[i] - points_[i - 1]).norm();
    if (chord <= kDuplicateTolerance) {
      throw Error(ErrorKind::kDuplicatePoints,
                  "control points " + std::to_string(i - 1) + " and " +
                      std::to_string(i % points.size()) + " coincide");
    }
    knots_[i] = knots_[i - 1] + chord;
  }
  second_ = boundary_ == SplineBoundary::kNatural ? SolveNatural(points_, knots_)
                                                  : SolvePeriodic(points_, knots_);
}

std::size_t RodSpline::Segment(double s, bool from_left) const {
  const std::size_t last = knots_.size() - 2;
  auto it = from_left ? std::lower_bound(knots_.begin(), knots_.end(), s)
                      : std::upper_bound(knots_.begin(), knots_.end(), s);
  std::size_t idx = it == knots_.begin() ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
  return std::min(idx, last);
}

Point3 RodSpline::Evaluate(double s) const {
  const std::size_t i = Segment(s, false);
  const double h = knots_[i + 1] - knots_[i];
  const double a = (knots_[i + 1] - s) / h;
  const double b = (s - knots_[i]) / h;
  return a * points_[i] + b * points_[i + 1] +
         ((a * a * a - a) * second_[i] + (b * b * b - b) * second_[i + 1]) * (h * h / 6.0);
}

Vec3 RodSpline::Derivative(double s) const {
  const std::size_t i = Segment(s, false);
  const double h = knots_[i + 1] - knots_[i];
  const double a = (knots_[i + 1] - s) / h;
  const double b = (s - knots_[i]) / h;
  return (points_[i + 1] - points_[i]) / h +
         (-(3.0 * a * a - 1.0) * second_[i] + (3.0 * b * b - 1.0) * second_[i + 1]) * (h / 6.0);
}

Vec3 RodSpline::SecondDerivative(double s, bool from_left) const {
  const std::size_t i = Segment(s, from_left);
  const double h = knots_[i + 1] - knots_[i];
  const double a = (knots_[i + 1] - s) / h;
  const double b = (s - knots_[i]) / h;
  return a * second_[i] + b * second_[i + 1];
}

RobotShape ReconstructShape(std::span<const Point3> frame_points, double width,
                            SplineBoundary boundary) {
  if (frame_points.size() != 2 * kPointsPerRod) {
    throw Error(ErrorKind::kShapeMismatch, "shape reconstruction needs 12 frame points");
  }
  return RobotShape{RodSpline(frame_points.subspan(0, kPointsPerRod), boundary),
                    RodSpline(frame_points.subspan(kPointsPerRod, kPointsPerRod), boundary), width};
}

std::vector<Point3> SampleShape(const RodSpline& spline, int n) {
  if (n < 2) throw Error(ErrorKind::kTooShort, "sample count must be >= 2");
  std::vector<Point3> out;
  out.reserve(static_cast<std::size_t>(n));
  const double len = spline.length();
  for (int i = 0; i < n; ++i) {
    if (i == n - 1) {
      out.push_back(spline.control_points().back());
    } else if (i == 0) {
      out.push_back(spline.control_points().front());
    } else {
      out.push_back(spline.Evaluate(len * static_cast<double>(i) / static_cast<double>(n - 1)));
    }
  }
  return out;
}

double EstimateWidth(std::span<const Point3> frame_points, std::span<const int> left_ids,
                     std::span<const int> right_ids) {
  if (left_ids.empty() || right_ids.empty()) {
    throw Error(ErrorKind::kEmptyCluster, "left and right clusters must be non-empty");
  }
  const auto n = static_cast<int>(frame_points.size());
  auto mean_of = [&](std::span<const int> ids) {
    Vec3 sum = Vec3::Zero();
    for (const int id : ids) {
      if (id < 0 || id >= n) throw Error(ErrorKind::kShapeMismatch, "cluster index out of range");
      sum += frame_points[static_cast<std::size_t>(id)];
    }
    return Vec3(sum / static_cast<double>(ids.size()));
  };
  for (const int l : left_ids) {
    if (std::find(right_ids.begin(), right_ids.end(), l) != right_ids.end()) {
      throw Error(ErrorKind::kShapeMismatch, "left and right clusters share index " + std::to_string(l));
    }
  }
  return (mean_of(left_ids) - mean_of(right_ids)).norm();
}

double FramePointRmse(std::span<const Point3> predicted, std::span<const Point3> truth) {
  if (predicted.size() != truth.size() || predicted.empty()) {
    throw Error(ErrorKind::kShapeMismatch, "frame point sets differ in size");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += (predicted[i] - truth[i]).squaredNorm();
  return std::sqrt(sum / (3.0 * static_cast<double>(predicted.size())));
}

std::vector<Point3> UnpackPoints(std::span<const double> packed) {
  if (packed.size() % 3 != 0) throw Error(ErrorKind::kShapeMismatch, "packed points not a multiple of 3");
  std::vector<Point3> out(packed.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = Point3(packed[3 * i], packed[3 * i + 1], packed[3 * i + 2]);
  }
  return out;
}

}  // namespace morphstate
