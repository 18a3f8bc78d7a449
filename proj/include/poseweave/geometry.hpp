#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <array>
#include <cmath>

#include "poseweave/common.hpp"

namespace poseweave {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Axis-angle vector (angle = norm, axis = direction) to rotation matrix.
inline Mat3 axis_angle_to_matrix(const Vec3& aa) {
  const double angle = aa.norm();
  if (angle < 1e-12) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

// Inverse of axis_angle_to_matrix; returned angle lies in [0, pi].
inline Vec3 matrix_to_axis_angle(const Mat3& m) {
  Eigen::AngleAxisd aa(m);
  double angle = aa.angle();
  Vec3 axis = aa.axis();
  if (angle < 0) {  // Eigen normally returns [0, pi]; keep the canonical form
    angle = -angle;
    axis = -axis;
  }
  return axis * angle;
}

// Continuous 6D rotation representation: the first two matrix columns.
inline std::array<double, 6> matrix_to_sixd(const Mat3& m) {
  return {m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1)};
}

// Recover a rotation from 6 values via Gram-Schmidt; tolerates
// non-orthonormal input as long as the two columns are independent.
inline Mat3 sixd_to_matrix(const std::array<double, 6>& s) {
  Vec3 a1(s[0], s[1], s[2]);
  Vec3 a2(s[3], s[4], s[5]);
  const double n1 = a1.norm();
  if (n1 < 1e-12) throw DegenerateInputError("sixd_to_matrix: zero first column");
  Vec3 b1 = a1 / n1;
  Vec3 a2p = a2 - b1.dot(a2) * b1;
  const double n2 = a2p.norm();
  if (n2 < 1e-12) throw DegenerateInputError("sixd_to_matrix: columns are parallel");
  Vec3 b2 = a2p / n2;
  Vec3 b3 = b1.cross(b2);
  Mat3 r;
  r.col(0) = b1;
  r.col(1) = b2;
  r.col(2) = b3;
  return r;
}

inline Vec3 sixd_to_axis_angle(const std::array<double, 6>& s) {
  return matrix_to_axis_angle(sixd_to_matrix(s));
}

inline std::array<double, 6> axis_angle_to_sixd(const Vec3& aa) {
  return matrix_to_sixd(axis_angle_to_matrix(aa));
}

// Rotation about the +y (up) axis.
inline Mat3 yaw_matrix(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix();
}

}  // namespace poseweave
