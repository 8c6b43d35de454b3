#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace imupose {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

inline constexpr double kPi = 3.14159265358979323846;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double c, const Vec3& a) { return {c * a[0], c * a[1], c * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline Mat3 mat3_identity() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

inline Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      c[i * 3 + j] = s;
    }
  return c;
}

inline Vec3 mat3_apply(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
          m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

inline Mat3 mat3_transpose(const Mat3& m) { return {m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}; }

// Rodrigues rotation about a unit axis by `rad`.
inline Mat3 rot_axis_angle(Vec3 axis, double rad) {
  const double n = norm(axis);
  if (n < 1e-12) throw std::invalid_argument("rot_axis_angle: zero axis");
  axis = (1.0 / n) * axis;
  const double c = std::cos(rad), s = std::sin(rad), t = 1.0 - c;
  const double x = axis[0], y = axis[1], z = axis[2];
  return {t * x * x + c,     t * x * y - s * z, t * x * z + s * y,  //
          t * x * y + s * z, t * y * y + c,     t * y * z - s * x,  //
          t * x * z - s * y, t * y * z + s * x, t * z * z + c};
}

inline Mat3 rot_x(double rad) { return rot_axis_angle({1, 0, 0}, rad); }
inline Mat3 rot_y(double rad) { return rot_axis_angle({0, 1, 0}, rad); }
inline Mat3 rot_z(double rad) { return rot_axis_angle({0, 0, 1}, rad); }

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

// 6D rotation representation: first two matrix columns, recovered by
// Gram-Schmidt. Continuous, hence what the regression head emits.
using Rot6d = std::array<double, 6>;

inline Mat3 rot6d_to_matrix(const Rot6d& r) {
  Vec3 a{r[0], r[1], r[2]};
  Vec3 b{r[3], r[4], r[5]};
  const double na = norm(a);
  if (na < 1e-8) throw std::invalid_argument("rot6d_to_matrix: first column near zero");
  Vec3 c1 = (1.0 / na) * a;
  Vec3 b_perp = b - dot(c1, b) * c1;
  const double nb = norm(b_perp);
  if (nb < 1e-8) throw std::invalid_argument("rot6d_to_matrix: columns parallel or second column near zero");
  Vec3 c2 = (1.0 / nb) * b_perp;
  Vec3 c3 = cross(c1, c2);
  return {c1[0], c2[0], c3[0], c1[1], c2[1], c3[1], c1[2], c2[2], c3[2]};
}

inline bool is_rotation(const Mat3& m, double tol = 1e-6) {
  Mat3 should_be_i = mat3_mul(mat3_transpose(m), m);
  Mat3 eye = mat3_identity();
  for (int i = 0; i < 9; ++i)
    if (std::abs(should_be_i[i] - eye[i]) > tol) return false;
  const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                     m[2] * (m[3] * m[7] - m[4] * m[6]);
  return std::abs(det - 1.0) <= 10 * tol;
}

inline Rot6d matrix_to_rot6d(const Mat3& m) {
  if (!is_rotation(m)) throw std::invalid_argument("matrix_to_rot6d: input is not orthonormal within 1e-6");
  return {m[0], m[3], m[6], m[1], m[4], m[7]};  // columns 0 and 1
}

// Geodesic distance between two rotations, degrees in [0, 180].
inline double geodesic_angle_deg(const Mat3& r1, const Mat3& r2) {
  const Mat3 rel = mat3_mul(mat3_transpose(r1), r2);
  const double tr = rel[0] + rel[4] + rel[8];
  const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

// ---------------------------------------------------------------------------
// Skeleton: a fixed 15-joint surrogate body. +y up, +z forward, meters.
// ---------------------------------------------------------------------------
enum JointId : int {
  kPelvis = 0,
  kSpine1,
  kSpine2,
  kNeck,
  kHead,
  kLUpLeg,
  kLLowLeg,
  kLFoot,
  kRUpLeg,
  kRLowLeg,
  kRFoot,
  kLUpArm,
  kLLowArm,
  kRUpArm,
  kRLowArm,
};

inline constexpr int kNumJoints = 15;
inline constexpr int kNumSensors = 6;
inline constexpr double kFps = 60.0;

struct Skeleton {
  std::array<std::string, kNumJoints> joints;
  std::array<int, kNumJoints> parent;  // -1 for the root
  std::array<Vec3, kNumJoints> offset;
  std::array<std::string, kNumSensors> sensor_names;
  std::array<int, kNumSensors> sensor_joint;

  void validate() const {
    int roots = 0;
    for (int j = 0; j < kNumJoints; ++j) {
      if (parent[j] < 0) {
        roots++;
        continue;
      }
      if (parent[j] >= j) throw std::invalid_argument("Skeleton: parent must precede child (joint " + joints[j] + ")");
    }
    if (roots != 1) throw std::invalid_argument("Skeleton: expected exactly one root");
    for (int s = 0; s < kNumSensors; ++s)
      if (sensor_joint[s] < 0 || sensor_joint[s] >= kNumJoints)
        throw std::invalid_argument("Skeleton: sensor placement out of range");
  }
};

inline const Skeleton& default_skeleton() {
  static const Skeleton skel = [] {
    Skeleton s;
    s.joints = {"pelvis", "spine1",   "spine2", "neck",     "head",   "l_upleg", "l_lowleg", "l_foot",
                "r_upleg", "r_lowleg", "r_foot", "l_uparm", "l_lowarm", "r_uparm", "r_lowarm"};
    s.parent = {-1, kPelvis, kSpine1, kSpine2, kNeck,  kPelvis, kLUpLeg, kLLowLeg,
                kPelvis, kRUpLeg, kRLowLeg, kSpine2, kLUpArm, kSpine2, kRUpArm};
    const double arm = 0.28 / std::sqrt(2.0);  // upper arm points lateral-down at 45 degrees
    s.offset = {Vec3{0, 0, 0},                                                      // pelvis
                Vec3{0, 0.12, 0},    Vec3{0, 0.12, 0},   Vec3{0, 0.10, 0},          // spine1/spine2/neck
                Vec3{0, 0.12, 0},                                                   // head
                Vec3{0.09, -0.40, 0},  Vec3{0, -0.42, 0},  Vec3{0, 0, 0.15},        // left leg (+x = left)
                Vec3{-0.09, -0.40, 0}, Vec3{0, -0.42, 0},  Vec3{0, 0, 0.15},        // right leg
                Vec3{arm, -arm, 0},    Vec3{0.26, 0, 0},                            // left arm
                Vec3{-arm, -arm, 0},   Vec3{-0.26, 0, 0}};                          // right arm
    s.sensor_names = {"root", "head", "l_wrist", "r_wrist", "l_leg", "r_leg"};
    s.sensor_joint = {kPelvis, kHead, kLLowArm, kRLowArm, kLLowLeg, kRLowLeg};
    s.validate();
    return s;
  }();
  return skel;
}

struct Pose {
  std::array<Rot6d, kNumJoints> local_rot6d;
  Vec3 root_pos{0, 0, 0};

  static Pose rest() {
    Pose p;
    for (auto& r : p.local_rot6d) r = {1, 0, 0, 0, 1, 0};
    return p;
  }
};

struct FkResult {
  std::array<Mat3, kNumJoints> rot;  // global rotations
  std::array<Vec3, kNumJoints> pos;  // global positions
};

inline FkResult forward_kinematics(const Skeleton& skel, const Pose& pose) {
  FkResult out;
  for (int j = 0; j < kNumJoints; ++j) {
    const Mat3 local = rot6d_to_matrix(pose.local_rot6d[j]);
    const int p = skel.parent[j];
    if (p < 0) {
      out.rot[j] = local;
      out.pos[j] = pose.root_pos;
    } else {
      out.rot[j] = mat3_mul(out.rot[p], local);
      out.pos[j] = out.pos[p] + mat3_apply(out.rot[p], skel.offset[j]);
    }
  }
  return out;
}

}  // namespace imupose
