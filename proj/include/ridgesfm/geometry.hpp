#pragma once

// Camera model, rigid poses and the cumulative Tait-Bryan pose chain.
//
// Conventions:
//  * pixel (u, v) = (column, row), camera looks down +z, x right, y down;
//  * a camera-frame point maps to the world with x_w = R x_c + T;
//  * Tait-Bryan angles (a, b, c) give R = Rz(c) * Ry(b) * Rx(a).

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ridgesfm/errors.hpp"

namespace ridgesfm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  bool valid() const {
    return fx > 0 && fy > 0 && cx > 0 && cx < width && cy > 0 && cy < height;
  }

  void validate() const {
    if (!valid()) throw DomainError("intrinsics violate fx,fy > 0 and 0 < c < size");
  }

  // K^-1 [u, v, 1]^T, the ray whose z-component is one.
  Vec3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;

  bool inside(int width, int height) const {
    return u >= 0.0 && v >= 0.0 && u < width && v < height;
  }
};

struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose identity() { return {}; }

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }

  RigidPose inverse() const {
    RigidPose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  // (this * other)(x) = this(other(x))
  RigidPose operator*(const RigidPose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  bool is_orthonormal(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Mat3::Identity()).norm() < tol &&
           std::abs(rotation.determinant() - 1.0) < tol;
  }
};

struct TaitBryanDelta {
  Vec3 angles = Vec3::Zero();
  Vec3 translation_delta = Vec3::Zero();
};

inline Vec3 backproject(const Pixel& p, double depth, const Intrinsics& k) {
  if (!(depth > 0.0)) throw DomainError("backproject: depth must be positive");
  return depth * k.ray(p.u, p.v);
}

inline Pixel project(const Vec3& x, const Intrinsics& k) {
  return {k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy};
}

inline Vec3 cam_to_world(const Vec3& x, const RigidPose& pose) { return pose.apply(x); }

inline Mat3 rotation_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

inline Mat3 rotation_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

inline Mat3 rotation_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

inline Mat3 tait_bryan_to_rotation(const Vec3& angles) {
  return rotation_z(angles.z()) * rotation_y(angles.y()) * rotation_x(angles.x());
}

// Partial derivatives of tait_bryan_to_rotation with respect to each angle.
inline std::array<Mat3, 3> tait_bryan_jacobian(const Vec3& angles) {
  const Mat3 rx = rotation_x(angles.x());
  const Mat3 ry = rotation_y(angles.y());
  const Mat3 rz = rotation_z(angles.z());
  // d/da R(a) = R(a) * [axis]_x for a rotation about a fixed axis.
  Mat3 gx, gy, gz;
  gx << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  gy << 0, 0, 1, 0, 0, 0, -1, 0, 0;
  gz << 0, -1, 0, 1, 0, 0, 0, 0, 0;
  return {rz * ry * (rx * gx), rz * (ry * gy) * rx, (rz * gz) * ry * rx};
}

// Inverse of tait_bryan_to_rotation (principal branch, |b| <= pi/2).
inline Vec3 rotation_to_tait_bryan(const Mat3& r) {
  const double b = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double a = std::atan2(r(2, 1), r(2, 2));
  const double c = std::atan2(r(1, 0), r(0, 0));
  return {a, b, c};
}

// R_i = prod_{k<=i} R(angles_k), T_i = sum_{k<=i} translation_delta_k.
inline std::vector<RigidPose> compose_chain(std::span<const TaitBryanDelta> deltas) {
  if (deltas.empty()) throw DimensionError("compose_chain: empty delta sequence");
  std::vector<RigidPose> poses;
  poses.reserve(deltas.size());
  Mat3 r = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  for (const auto& d : deltas) {
    r = r * tait_bryan_to_rotation(d.angles);
    t += d.translation_delta;
    poses.push_back({r, t});
  }
  return poses;
}

// Inverse of compose_chain for an arbitrary trajectory.
inline std::vector<TaitBryanDelta> decompose_chain(std::span<const RigidPose> poses) {
  std::vector<TaitBryanDelta> deltas;
  deltas.reserve(poses.size());
  Mat3 prev_r = Mat3::Identity();
  Vec3 prev_t = Vec3::Zero();
  for (const auto& p : poses) {
    deltas.push_back({rotation_to_tait_bryan(prev_r.transpose() * p.rotation),
                      p.translation - prev_t});
    prev_r = p.rotation;
    prev_t = p.translation;
  }
  return deltas;
}

// arccos((tr(Ra^T Rb) - 1) / 2) in degrees. Evaluated as atan2(sin, cos) with
// the sine taken from the skew part, since acos loses half the digits near 0.
inline double rotation_angle_deg(const Mat3& ra, const Mat3& rb) {
  const Mat3 r = ra.transpose() * rb;
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double s = std::min(0.5 * axis.norm(), 1.0);
  return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

// Projects a near-rotation matrix back onto SO(3).
inline Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

// Relative pose mapping camera-i coordinates into camera-j coordinates for two
// camera-to-world poses: x_j = R_ij x_i + T_ij.
inline RigidPose relative_pose(const RigidPose& pose_i, const RigidPose& pose_j) {
  return pose_j.inverse() * pose_i;
}

}  // namespace ridgesfm
