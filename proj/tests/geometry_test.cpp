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

#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace morphstate {
namespace {

Mat3 RandomRotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

Vec3 RandomVec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3(u(rng), u(rng), u(rng));
}

const ReferencePoints kAxis{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}};

TEST(BuildComplianceFrame, AxisAlignedIsIdentity) {
  const FrameBasis f = BuildComplianceFrame(kAxis);
  EXPECT_EQ(f.ex, Vec3(1, 0, 0));
  EXPECT_EQ(f.ey, Vec3(0, 1, 0));
  EXPECT_EQ(f.ez, Vec3(0, 0, 1));
  EXPECT_EQ(f.origin, Point3(0, 0, 0));
}

TEST(BuildComplianceFrame, OffsetOrthogonalInputs) {
  const FrameBasis f = BuildComplianceFrame({{1, 0.5, 0}, {-1, 0.5, 0}, {0.2, 1, 0}, {0.2, -1, 0}});
  EXPECT_NEAR((f.ex - Vec3(1, 0, 0)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((f.ey - Vec3(0, 1, 0)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((f.origin - Point3(0.1, 0.25, 0)).norm(), 0.0, 1e-15);
}

TEST(BuildComplianceFrame, RotatedCopyRecoversRotation) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const Mat3 r = RandomRotation(rng);
    const FrameBasis f =
        BuildComplianceFrame({r * kAxis.front, r * kAxis.back, r * kAxis.left, r * kAxis.right});
    EXPECT_LT((f.rotation() - r).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(BuildComplianceFrame, GramSchmidtRemovesSkew) {
  // left-right has an x component; ey must come out orthogonal to ex.
  const FrameBasis f = BuildComplianceFrame({{2, 0, 0}, {0, 0, 0}, {1.3, 1, 0.2}, {1, -1, 0.2}});
  EXPECT_NEAR(f.ex.dot(f.ey), 0.0, 1e-15);
  // left - right = (0.3, 2, 0); removing its x part leaves +y.
  EXPECT_LT((f.ey - Vec3(0, 1, 0)).norm(), 1e-15);
  EXPECT_LT(OrthonormalityResidual(f.rotation()), 1e-15);
}

TEST(BuildComplianceFrame, ScalingFrontBackKeepsEx) {
  const FrameBasis a = BuildComplianceFrame({{1, 0.2, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}});
  const FrameBasis b = BuildComplianceFrame({{5, 1.0, 0}, {-5, 0, 0}, {0, 1, 0}, {0, -1, 0}});
  EXPECT_LT((a.ex - b.ex).norm(), 1e-15);
}

TEST(BuildComplianceFrame, DegenerateInputs) {
  EXPECT_ERROR_KIND(BuildComplianceFrame({{0, 0, 0}, {0, 0, 5e-7}, {0, 1, 0}, {0, -1, 0}}), kDegenerateFrame);
  EXPECT_ERROR_KIND(BuildComplianceFrame({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, 1, 1e-7}}), kDegenerateFrame);
  // left-right parallel to front-back
  EXPECT_ERROR_KIND(BuildComplianceFrame({{1, 0, 0}, {-1, 0, 0}, {0.5, 0, 0}, {-0.5, 0, 0}}), kDegenerateFrame);
}

TEST(BuildComplianceFrame, RandomPointsGiveOrthonormalRightHandedBasis) {
  std::mt19937_64 rng(11);
  int checked = 0;
  while (checked < 2000) {
    const ReferencePoints refs{RandomVec(rng), RandomVec(rng), RandomVec(rng), RandomVec(rng)};
    FrameBasis f;
    try {
      f = BuildComplianceFrame(refs);
    } catch (const Error&) {
      continue;
    }
    ++checked;
    EXPECT_NEAR(f.ex.norm(), 1.0, 1e-9);
    EXPECT_NEAR(f.ey.norm(), 1.0, 1e-9);
    EXPECT_NEAR(f.ez.norm(), 1.0, 1e-9);
    EXPECT_NEAR(f.ex.dot(f.ey), 0.0, 1e-9);
    EXPECT_LT((f.ez - f.ex.cross(f.ey)).norm(), 1e-9);
  }
}

TEST(Transforms, IdentityAndOrigin) {
  const FrameBasis id;
  EXPECT_EQ(WorldToFrame(id, {1, 2, 3}), Point3(1, 2, 3));
  FrameBasis shifted;
  shifted.origin = {1, 0, 0};
  EXPECT_EQ(WorldToFrame(shifted, {1, 0, 0}), Point3(0, 0, 0));
  EXPECT_EQ(FrameToWorld(id, {1, 2, 3}), Point3(1, 2, 3));
  EXPECT_EQ(FrameToWorld(shifted, {0, 0, 0}), Point3(1, 0, 0));
}

TEST(Transforms, RoundTrip) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const FrameBasis f = FrameBasis::FromRotation(RandomRotation(rng), RandomVec(rng, 10.0));
    const Point3 p = RandomVec(rng, 10.0);
    EXPECT_LT((FrameToWorld(f, WorldToFrame(f, p)) - p).norm(), 1e-12);
    EXPECT_LT((WorldToFrame(f, FrameToWorld(f, p)) - p).norm(), 1e-12);
  }
}

TEST(ExpressVectorInFrame, IdentityAndIsometry) {
  EXPECT_EQ(ExpressVectorInFrame(FrameBasis{}, {0, 0, -9.81}), Vec3(0, 0, -9.81));
  std::mt19937_64 rng(8);
  for (int i = 0; i < 1000; ++i) {
    FrameBasis f = FrameBasis::FromRotation(RandomRotation(rng), RandomVec(rng, 3.0));
    const Vec3 v = RandomVec(rng, 5.0);
    EXPECT_NEAR(ExpressVectorInFrame(f, v).norm(), v.norm(), 1e-12);
  }
}

TEST(ExpressVectorInFrame, QuarterTurnAboutX) {
  const Mat3 r = Eigen::AngleAxisd(M_PI / 2, Vec3::UnitX()).toRotationMatrix();
  const FrameBasis f = FrameBasis::FromRotation(r, {3, 4, 5});
  const Vec3 out = ExpressVectorInFrame(f, {0, 0, -1});
  // Frame y axis is world z, so world down reads as -y.
  EXPECT_LT((out - r.transpose() * Vec3(0, 0, -1)).norm(), 1e-15);
  EXPECT_LT((out - Vec3(0, -1, 0)).norm(), 1e-15);
}

TEST(BuildComplianceFrame, RigidMotionEquivariance) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 1000; ++i) {
    const ReferencePoints refs{RandomVec(rng) + Vec3(1, 0, 0), RandomVec(rng) - Vec3(1, 0, 0),
                               RandomVec(rng) + Vec3(0, 1, 0), RandomVec(rng) - Vec3(0, 1, 0)};
    const Mat3 r = RandomRotation(rng);
    const Vec3 t = RandomVec(rng, 10.0);
    const FrameBasis a = BuildComplianceFrame(refs);
    const FrameBasis b =
        BuildComplianceFrame({r * refs.front + t, r * refs.back + t, r * refs.left + t, r * refs.right + t});
    EXPECT_LT((b.rotation() - r * a.rotation()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((b.origin - (r * a.origin + t)).norm(), 1e-9);
  }
}

}  // namespace
}  // namespace morphstate
