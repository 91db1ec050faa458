#pragma once

// Rotation helpers shared by the kinematics, camera and optimizer code.
// Quaternions use Eigen's storage internally; on disk and in motion maps the
// component order is (w, x, y, z) with the sign fixed so that w >= 0.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace capref {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

enum class Axis : int { X = 0, Y = 1, Z = 2 };

inline Vec3 unit_axis(Axis a) { return Vec3::Unit(static_cast<int>(a)); }

inline Mat3 axis_rotation(Axis a, double angle) {
  return Eigen::AngleAxisd(angle, unit_axis(a)).toRotationMatrix();
}

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

/// Flip the sign so that w >= 0. q and -q encode the same rotation.
inline Quat canonicalize(Quat q) {
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

inline Mat3 axis_angle_to_matrix(const Vec3& v) {
  const double angle = v.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, v / angle).toRotationMatrix();
}

inline Quat axis_angle_to_quat(const Vec3& v) {
  const double angle = v.norm();
  if (angle < 1e-300) return Quat::Identity();
  return canonicalize(Quat(Eigen::AngleAxisd(angle, v / angle)));
}

/// Inverse of axis_angle_to_quat for unit quaternions; angle in [0, pi].
inline Vec3 quat_to_axis_angle(const Quat& q_in) {
  const Quat q = canonicalize(q_in);
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-300) return Vec3::Zero();
  const double angle = 2.0 * std::atan2(s, q.w());
  return v * (angle / s);
}

inline Vec3 matrix_to_axis_angle(const Mat3& r) { return quat_to_axis_angle(Quat(r).normalized()); }

/// Left Jacobian of SO(3): exp(v + d) ~= exp(J_l(v) d) exp(v).
/// Column k is the world-frame angular velocity produced by a unit change of v_k.
inline Mat3 so3_left_jacobian(const Vec3& v) {
  const double theta2 = v.squaredNorm();
  const Mat3 k = skew(v);
  if (theta2 < 1e-12) return Mat3::Identity() + 0.5 * k + (1.0 / 6.0) * k * k;
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + ((1.0 - std::cos(theta)) / theta2) * k +
         ((theta - std::sin(theta)) / (theta2 * theta)) * k * k;
}

/// Product of elementary rotations about `axes` in the given order.
inline Mat3 dof_rotation(std::span<const Axis> axes, std::span<const double> angles) {
  Mat3 r = Mat3::Identity();
  for (std::size_t k = 0; k < axes.size(); ++k) r = r * axis_rotation(axes[k], angles[k]);
  return r;
}

namespace detail {

// Closed-form factorization, exact when r lies in the span of the axes.
inline std::vector<double> euler_closed_form(std::span<const Axis> axes, const Mat3& r) {
  const auto n = axes.size();
  if (n == 1) {
    // Maximizes trace(R_a(t)^T r): exact nearest rotation about a single axis.
    switch (axes[0]) {
      case Axis::X:
        return {std::atan2(r(2, 1) - r(1, 2), r(1, 1) + r(2, 2))};
      case Axis::Y:
        return {std::atan2(r(0, 2) - r(2, 0), r(0, 0) + r(2, 2))};
      case Axis::Z:
        return {std::atan2(r(1, 0) - r(0, 1), r(0, 0) + r(1, 1))};
    }
  }
  if (n == 2) {
    const Axis a = axes[0], b = axes[1];
    if (a == Axis::X && b == Axis::Y)
      return {std::atan2(r(2, 1), r(1, 1)), std::atan2(r(0, 2), r(0, 0))};
    if (a == Axis::X && b == Axis::Z)
      return {std::atan2(-r(1, 2), r(2, 2)), std::atan2(-r(0, 1), r(0, 0))};
    // Y then Z
    return {std::atan2(r(0, 2), r(2, 2)), std::atan2(r(1, 0), r(1, 1))};
  }
  if (n == 3) {
    const double a = std::atan2(-r(1, 2), r(2, 2));
    const double b = std::atan2(r(0, 2), std::hypot(r(0, 0), r(0, 1)));
    const double c = std::atan2(-r(0, 1), r(0, 0));
    return {a, b, c};
  }
  return {};
}

}  // namespace detail

/// Angles of the declared axes (X-then-Y-then-Z order) whose composition is the
/// rotation nearest to `r` in the Frobenius sense. Off-axis residual is dropped.
inline std::vector<double> factor_rotation(std::span<const Axis> axes, const Mat3& r) {
  std::vector<double> ang = detail::euler_closed_form(axes, r);
  if (axes.size() != 2) return ang;

  // Two axes cannot represent a general rotation; polish the closed-form
  // guess with Gauss-Newton on ||R(a) - r||_F^2.
  for (int it = 0; it < 20; ++it) {
    const Mat3 r0 = axis_rotation(axes[0], ang[0]);
    const Mat3 r1 = axis_rotation(axes[1], ang[1]);
    const Mat3 cur = r0 * r1;
    const Mat3 d0 = skew(unit_axis(axes[0])) * cur;
    const Mat3 d1 = r0 * skew(unit_axis(axes[1])) * r1;
    Eigen::Matrix<double, 9, 2> jac;
    jac.col(0) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(d0.data());
    jac.col(1) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(d1.data());
    const Mat3 diff = cur - r;
    const Eigen::Matrix<double, 9, 1> res = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(diff.data());
    const Eigen::Vector2d g = jac.transpose() * res;
    if (g.norm() < 1e-15) break;
    const Eigen::Matrix2d h = jac.transpose() * jac;
    const Eigen::Vector2d step = h.ldlt().solve(-g);
    ang[0] += step[0];
    ang[1] += step[1];
    if (step.norm() < 1e-15) break;
  }
  return ang;
}

}  // namespace capref
