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

#include "morphstate/geometry.hpp"

#include <string>

#include "morphstate/error.hpp"

namespace morphstate {

Mat3 FrameBasis::rotation() const {
  Mat3 r;
  r.col(0) = ex;
  r.col(1) = ey;
  r.col(2) = ez;
  return r;
}

FrameBasis FrameBasis::FromRotation(const Mat3& rotation, const Point3& origin) {
  return FrameBasis{rotation.col(0), rotation.col(1), rotation.col(2), origin};
}

FrameBasis BuildComplianceFrame(const ReferencePoints& refs) {
  const Vec3 forward = refs.front - refs.back;
  const Vec3 lateral = refs.left - refs.right;
  const double forward_norm = forward.norm();
  const double lateral_norm = lateral.norm();
  if (!(forward_norm >= kDegeneracyThreshold)) {
    throw Error(ErrorKind::kDegenerateFrame,
                "front and back points coincide (|front-back| = " +
                    std::to_string(forward_norm) + ")");
  }
  if (!(lateral_norm >= kDegeneracyThreshold)) {
    throw Error(ErrorKind::kDegenerateFrame,
                "left and right points coincide (|left-right| = " +
                    std::to_string(lateral_norm) + ")");
  }

  FrameBasis basis;
  basis.ex = forward / forward_norm;
  const Vec3 residual = lateral - lateral.dot(basis.ex) * basis.ex;
  const double residual_norm = residual.norm();
  if (!(residual_norm >= kDegeneracyThreshold)) {
    throw Error(ErrorKind::kDegenerateFrame,
                "front-back and left-right directions are parallel");
  }
  basis.ey = residual / residual_norm;
  basis.ez = basis.ex.cross(basis.ey);
  basis.origin = 0.25 * (refs.front + refs.back + refs.left + refs.right);
  return basis;
}

Point3 WorldToFrame(const FrameBasis& basis, const Point3& p) {
  const Vec3 d = p - basis.origin;
  return Point3(basis.ex.dot(d), basis.ey.dot(d), basis.ez.dot(d));
}

Point3 FrameToWorld(const FrameBasis& basis, const Point3& p) {
  return basis.origin + p.x() * basis.ex + p.y() * basis.ey + p.z() * basis.ez;
}

Vec3 ExpressVectorInFrame(const FrameBasis& basis, const Vec3& v) {
  return Vec3(basis.ex.dot(v), basis.ey.dot(v), basis.ez.dot(v));
}

double OrthonormalityResidual(const Mat3& rotation) {
  return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
}

}  // namespace morphstate
