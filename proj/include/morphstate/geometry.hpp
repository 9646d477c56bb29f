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

#include <Eigen/Dense>

namespace morphstate {

using Vec3 = Eigen::Vector3d;
using Point3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Compliance-centric frame: an origin plus a right-handed orthonormal basis,
// all expressed in world coordinates.
//
// Invariants: |ex| = |ey| = |ez| = 1 and pairwise orthogonal within 1e-9,
// ez = ex x ey.
struct FrameBasis {
  Vec3 ex = Vec3::UnitX();
  Vec3 ey = Vec3::UnitY();
  Vec3 ez = Vec3::UnitZ();
  Point3 origin = Point3::Zero();

  // Columns ex, ey, ez.
  Mat3 rotation() const;
  static FrameBasis FromRotation(const Mat3& rotation, const Point3& origin);
};

// The four motor-attached points the frame is built from (world, meters).
struct ReferencePoints {
  Point3 front;
  Point3 back;
  Point3 left;
  Point3 right;
};

inline constexpr double kDegeneracyThreshold = 1e-6;

// ex = normalize(front - back); ey = Gram-Schmidt residual of (left - right)
// against ex; ez = ex x ey; origin = centroid of the four points.
// Throws Error(kDegenerateFrame) when either difference or the ey residual is
// shorter than 1e-6 m.
FrameBasis BuildComplianceFrame(const ReferencePoints& refs);

// R^T (p - origin).
Point3 WorldToFrame(const FrameBasis& basis, const Point3& p);
// R p + origin; exact inverse of WorldToFrame.
Point3 FrameToWorld(const FrameBasis& basis, const Point3& p);
// R^T v; rotation only.
Vec3 ExpressVectorInFrame(const FrameBasis& basis, const Vec3& v);

// Largest absolute entry of R^T R - I.
double OrthonormalityResidual(const Mat3& rotation);

}  // namespace morphstate
