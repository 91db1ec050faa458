#pragma once

#include <capref/error.hpp>
#include <capref/rotation.hpp>
#include <capref/skeleton.hpp>

#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <numbers>
#include <vector>

namespace capref {

inline constexpr double kMinDepth = 1e-6;

/// Pinhole camera. `rotation`/`translation` map world points to camera space
/// (x right, y down, z forward).
struct Camera {
  double fx = 1000.0, fy = 1000.0, cx = 500.0, cy = 500.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidInput("camera focal lengths must be positive");
    if (!rotation.allFinite() || !translation.allFinite() || !std::isfinite(cx) || !std::isfinite(cy))
      throw InvalidInput("camera parameters must be finite");
    if (!(rotation.transpose() * rotation).isIdentity(1e-9))
      throw InvalidInput("camera rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-9)
      throw InvalidInput("camera rotation must have determinant +1");
  }

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }

  /// Camera at `eye` looking at `target`, world up is +Y.
  static Camera look_at(const Vec3& eye, const Vec3& target, double f, double cx, double cy) {
    const Vec3 z = (target - eye).normalized();
    const Vec3 x = z.cross(Vec3::UnitY()).normalized();
    const Vec3 y = z.cross(x);
    Camera c;
    c.fx = c.fy = f;
    c.cx = cx;
    c.cy = cy;
    c.rotation.row(0) = x.transpose();
    c.rotation.row(1) = y.transpose();
    c.rotation.row(2) = z.transpose();
    c.translation = -c.rotation * eye;
    return c;
  }

  bool operator==(const Camera&) const = default;
};

/// Projection of a camera-space point. Throws BehindCamera when z <= 1e-6.
inline Vec2 project_camera_space(const Camera& cam, const Vec3& pc) {
  if (!(pc.z() > kMinDepth)) throw BehindCamera("point at or behind the camera plane (z = " + std::to_string(pc.z()) + ")");
  return {cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy};
}

inline Vec2 project(const Camera& cam, const Vec3& world) { return project_camera_space(cam, cam.to_camera(world)); }

/// Non-throwing projection for residual code: returns false for points the
/// optimizer must mask.
inline bool try_project(const Camera& cam, const Vec3& world, Vec2& out, Eigen::Matrix<double, 2, 3>* jac = nullptr) {
  const Vec3 pc = cam.to_camera(world);
  if (!(pc.z() > kMinDepth)) return false;
  const double iz = 1.0 / pc.z();
  out = {cam.fx * pc.x() * iz + cam.cx, cam.fy * pc.y() * iz + cam.cy};
  if (jac) {
    Eigen::Matrix<double, 2, 3> d;
    d << cam.fx * iz, 0.0, -cam.fx * pc.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * pc.y() * iz * iz;
    *jac = d * cam.rotation;
  }
  return true;
}

/// Capsule radius per bone; bone b joins joint b+1 to its parent.
struct CapsuleBody {
  std::vector<double> radius;

  void validate(const SkeletonModel& sk) const {
    if (static_cast<int>(radius.size()) != sk.joint_count() - 1)
      throw InvalidInput("capsule body needs one radius per bone");
    for (double r : radius)
      if (!(r > 0.0) || !std::isfinite(r)) throw InvalidInput("capsule radii must be positive");
  }

  static CapsuleBody uniform(const SkeletonModel& sk, double r) {
    return CapsuleBody{std::vector<double>(sk.joint_count() - 1, r)};
  }
};

/// Radii matched to default_skeleton().
inline CapsuleBody default_body() {
  return CapsuleBody{{0.14, 0.10, 0.06, 0.05, 0.04, 0.06, 0.05, 0.04, 0.08, 0.07, 0.05, 0.08, 0.07, 0.05}};
}

/// 2D stadium: a segment and a radius, in pixels.
struct Stadium {
  Vec2 a, b;
  double radius = 0.0;

  double distance_to_axis(const Vec2& q) const {
    const Vec2 d = b - a;
    const double len2 = d.squaredNorm();
    double s = len2 > 0.0 ? (q - a).dot(d) / len2 : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    return (q - (a + s * d)).norm();
  }

  /// Point at arclength fraction u in [0,1) along the outline.
  Vec2 outline_point(double u) const {
    const Vec2 d = b - a;
    const double len = d.norm();
    const Vec2 dir = len > 1e-12 ? Vec2(d / len) : Vec2(1.0, 0.0);
    const Vec2 nrm(-dir.y(), dir.x());
    const double arc = std::numbers::pi * radius;
    const double total = 2.0 * len + 2.0 * arc;
    double s = u * total;
    if (s < len) return a + radius * nrm + s * dir;
    s -= len;
    if (s < arc) {
      const double phi = s / radius;  // sweep around b from +nrm to -nrm
      return b + radius * (std::cos(phi) * nrm + std::sin(phi) * dir);
    }
    s -= arc;
    if (s < len) return b - radius * nrm - s * dir;
    s -= len;
    const double phi = s / radius;  // sweep around a from -nrm to +nrm
    return a + radius * (-std::cos(phi) * nrm - std::sin(phi) * dir);
  }
};

/// Projected capsules of every bone with both endpoints in front of the camera.
inline std::vector<Stadium> projected_capsules(const Camera& cam, const SkeletonModel& sk,
                                               const std::vector<Vec3>& joints, const CapsuleBody& body) {
  std::vector<Stadium> out;
  for (int c = 1; c < sk.joint_count(); ++c) {
    const int p = sk.joint(c).parent;
    const Vec3 pa = cam.to_camera(joints[p]);
    const Vec3 pb = cam.to_camera(joints[c]);
    if (!(pa.z() > kMinDepth) || !(pb.z() > kMinDepth)) continue;
    const double depth = 0.5 * (pa.z() + pb.z());
    out.push_back(Stadium{project_camera_space(cam, pa), project_camera_space(cam, pb),
                          body.radius[c - 1] * cam.fx / depth});
  }
  return out;
}

/// n points on the outline of the union of projected bone capsules.
inline std::vector<Vec2> silhouette_points(const Camera& cam, const SkeletonModel& sk, const SkeletalPose& pose,
                                           const CapsuleBody& body, int n, int samples_per_capsule = 48) {
  if (n < 8) throw InvalidInput("silhouette needs at least 8 points");
  body.validate(sk);
  const std::vector<Vec3> joints = forward_kinematics(sk, pose);
  const std::vector<Stadium> caps = projected_capsules(cam, sk, joints, body);
  if (caps.empty()) throw EmptySilhouette("no bone lies in front of the camera");

  std::vector<Vec2> outline;
  for (std::size_t i = 0; i < caps.size(); ++i) {
    for (int k = 0; k < samples_per_capsule; ++k) {
      const Vec2 q = caps[i].outline_point((k + 0.5) / samples_per_capsule);
      bool inside = false;
      for (std::size_t m = 0; m < caps.size() && !inside; ++m)
        if (m != i && caps[m].distance_to_axis(q) < caps[m].radius) inside = true;
      if (!inside) outline.push_back(q);
    }
  }
  if (outline.empty()) throw EmptySilhouette("projected capsule outline is empty");

  std::vector<Vec2> pts(n);
  const std::size_t m = outline.size();
  for (int k = 0; k < n; ++k) pts[k] = outline[(static_cast<std::size_t>(k) * m) / static_cast<std::size_t>(n)];
  return pts;
}

}  // namespace capref
