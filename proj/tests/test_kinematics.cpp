#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "imupose/kinematics.hpp"
#include "imupose/rng.hpp"

using namespace imupose;
using Catch::Matchers::WithinAbs;

namespace {

Mat3 random_rotation(Rng& rng) {
  Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
  return rot_axis_angle(axis, rng.uniform(-kPi, kPi));
}

Pose random_pose(Rng& rng) {
  Pose p;
  for (int j = 0; j < kNumJoints; ++j) p.local_rot6d[j] = matrix_to_rot6d(random_rotation(rng));
  p.root_pos = {rng.normal(), rng.normal(), rng.normal()};
  return p;
}

}  // namespace

TEST_CASE("rot6d canonical and hand-derived cases") {
  Mat3 eye = rot6d_to_matrix({1, 0, 0, 0, 1, 0});
  for (int i = 0; i < 9; ++i) REQUIRE(eye[i] == mat3_identity()[i]);

  // scaling and skew are removed by normalization + orthogonalization
  Mat3 skewed = rot6d_to_matrix({2, 0, 0, 1, 1, 0});
  for (int i = 0; i < 9; ++i) REQUIRE_THAT(skewed[i], WithinAbs(mat3_identity()[i], 1e-14));

  REQUIRE_THROWS_AS(rot6d_to_matrix({0, 0, 0, 0, 1, 0}), std::invalid_argument);
  REQUIRE_THROWS_AS(rot6d_to_matrix({1, 0, 0, 2, 0, 0}), std::invalid_argument);
}

TEST_CASE("rot6d round-trips 1000 random rotations") {
  Rng rng(41);
  double max_dev = 0.0;
  for (int k = 0; k < 1000; ++k) {
    Mat3 r = random_rotation(rng);
    Mat3 back = rot6d_to_matrix(matrix_to_rot6d(r));
    for (int i = 0; i < 9; ++i) max_dev = std::max(max_dev, std::abs(back[i] - r[i]));
  }
  REQUIRE(max_dev < 1e-10);
}

TEST_CASE("matrix_to_rot6d hand cases and validation") {
  Rot6d id = matrix_to_rot6d(mat3_identity());
  REQUIRE(id == Rot6d{1, 0, 0, 0, 1, 0});

  // 90 degrees about z: columns (0,1,0) and (-1,0,0)
  Mat3 rz = {0, -1, 0, 1, 0, 0, 0, 0, 1};
  Rot6d r = matrix_to_rot6d(rz);
  REQUIRE(r == Rot6d{0, 1, 0, -1, 0, 0});

  Mat3 not_rot = {1, 0, 0, 0, 2, 0, 0, 0, 1};
  REQUIRE_THROWS_AS(matrix_to_rot6d(not_rot), std::invalid_argument);
}

TEST_CASE("geodesic angle reproduces axis-angle constructions") {
  Rng rng(42);
  Mat3 r1 = random_rotation(rng);
  REQUIRE(geodesic_angle_deg(r1, r1) == 0.0);

  for (int k = 0; k < 50; ++k) {
    Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
    double deg = rng.uniform(1.0, 179.0);
    Mat3 r2 = mat3_mul(r1, rot_axis_angle(axis, deg_to_rad(deg)));
    REQUIRE_THAT(geodesic_angle_deg(r1, r2), WithinAbs(deg, 1e-9));
  }

  Mat3 r180 = mat3_mul(r1, rot_axis_angle({0, 0, 1}, kPi));
  REQUIRE_THAT(geodesic_angle_deg(r1, r180), WithinAbs(180.0, 1e-6));
}

TEST_CASE("geodesic angle is symmetric and satisfies the triangle inequality") {
  Rng rng(43);
  for (int k = 0; k < 30; ++k) {
    Mat3 a = random_rotation(rng), b = random_rotation(rng), c = random_rotation(rng);
    REQUIRE_THAT(geodesic_angle_deg(a, b), WithinAbs(geodesic_angle_deg(b, a), 1e-10));
    REQUIRE(geodesic_angle_deg(a, c) <= geodesic_angle_deg(a, b) + geodesic_angle_deg(b, c) + 1e-8);
  }
}

TEST_CASE("default skeleton is a valid tree with expected sensors") {
  const Skeleton& s = default_skeleton();
  REQUIRE(s.joints[kPelvis] == "pelvis");
  REQUIRE(s.parent[kPelvis] == -1);
  int roots = 0;
  for (int j = 0; j < kNumJoints; ++j) {
    if (s.parent[j] < 0) roots++;
    else REQUIRE(s.parent[j] < j);
  }
  REQUIRE(roots == 1);
  REQUIRE(s.sensor_joint[0] == kPelvis);
  REQUIRE(s.joints[s.sensor_joint[1]] == "head");
  REQUIRE(s.joints[s.sensor_joint[2]] == "l_lowarm");
  REQUIRE(s.joints[s.sensor_joint[3]] == "r_lowarm");
  REQUIRE(s.joints[s.sensor_joint[4]] == "l_lowleg");
  REQUIRE(s.joints[s.sensor_joint[5]] == "r_lowleg");
}

TEST_CASE("forward kinematics rest pose accumulates offsets") {
  const Skeleton& s = default_skeleton();
  FkResult fk = forward_kinematics(s, Pose::rest());
  for (int j = 0; j < kNumJoints; ++j) {
    Vec3 want{0, 0, 0};
    for (int a = j; a >= 0; a = s.parent[a]) want = want + s.offset[a];
    for (int i = 0; i < 3; ++i) REQUIRE_THAT(fk.pos[j][i], WithinAbs(want[i], 1e-15));
    for (int i = 0; i < 9; ++i) REQUIRE(fk.rot[j][i] == mat3_identity()[i]);
  }
  // head stacks the full spine chain
  REQUIRE_THAT(fk.pos[kHead][1], WithinAbs(0.12 + 0.12 + 0.10 + 0.12, 1e-15));
}

TEST_CASE("rotating the pelvis 180 degrees about vertical mirrors all positions") {
  const Skeleton& s = default_skeleton();
  Pose pose = Pose::rest();
  FkResult before = forward_kinematics(s, pose);
  pose.local_rot6d[kPelvis] = matrix_to_rot6d({-1, 0, 0, 0, 1, 0, 0, 0, -1});  // exact Ry(180)
  FkResult after = forward_kinematics(s, pose);
  for (int j = 1; j < kNumJoints; ++j) {
    REQUIRE_THAT(after.pos[j][0], WithinAbs(-before.pos[j][0], 1e-12));
    REQUIRE_THAT(after.pos[j][1], WithinAbs(before.pos[j][1], 1e-12));
    REQUIRE_THAT(after.pos[j][2], WithinAbs(-before.pos[j][2], 1e-12));
  }
}

TEST_CASE("single-joint 90 degree rotation moves the child as expected") {
  const Skeleton& s = default_skeleton();
  Pose pose = Pose::rest();
  // Rotating l_uparm by 90 about z sends its child offset (0.26,0,0) to (0,0.26,0).
  pose.local_rot6d[kLUpArm] = matrix_to_rot6d(rot_z(deg_to_rad(90)));
  FkResult fk = forward_kinematics(s, pose);
  Vec3 rel = fk.pos[kLLowArm] - fk.pos[kLUpArm];
  REQUIRE_THAT(rel[0], WithinAbs(0.0, 1e-12));
  REQUIRE_THAT(rel[1], WithinAbs(0.26, 1e-12));
  REQUIRE_THAT(rel[2], WithinAbs(0.0, 1e-12));
}

TEST_CASE("FK preserves bone lengths on random poses") {
  const Skeleton& s = default_skeleton();
  Rng rng(44);
  for (int k = 0; k < 20; ++k) {
    FkResult fk = forward_kinematics(s, random_pose(rng));
    for (int j = 0; j < kNumJoints; ++j) {
      if (s.parent[j] < 0) continue;
      double bone = norm(fk.pos[j] - fk.pos[s.parent[j]]);
      REQUIRE_THAT(bone, WithinAbs(norm(s.offset[j]), 1e-10));
    }
  }
}

TEST_CASE("root position passes through FK") {
  Pose pose = Pose::rest();
  pose.root_pos = {1.5, -0.25, 3.0};
  FkResult fk = forward_kinematics(default_skeleton(), pose);
  REQUIRE(fk.pos[kPelvis] == pose.root_pos);
}

TEST_CASE("sitting thigh pitch with shin compensation keeps shin orientation global identity") {
  const Skeleton& s = default_skeleton();
  Pose sit = Pose::rest();
  sit.local_rot6d[kLUpLeg] = matrix_to_rot6d(rot_x(deg_to_rad(-90)));
  sit.local_rot6d[kLLowLeg] = matrix_to_rot6d(rot_x(deg_to_rad(90)));
  FkResult fk = forward_kinematics(s, sit);
  // knee moved forward, shin global orientation is back to identity
  for (int i = 0; i < 9; ++i) REQUIRE_THAT(fk.rot[kLLowLeg][i], WithinAbs(mat3_identity()[i], 1e-12));
  Vec3 knee_rel = fk.pos[kLLowLeg] - fk.pos[kLUpLeg];
  REQUIRE_THAT(knee_rel[2], WithinAbs(0.42, 1e-12));  // forward
  REQUIRE_THAT(knee_rel[1], WithinAbs(0.0, 1e-12));
  REQUIRE_THAT(geodesic_angle_deg(fk.rot[kLUpLeg], mat3_identity()), WithinAbs(90.0, 1e-9));
}
