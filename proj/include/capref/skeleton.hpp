#pragma once

#include <capref/error.hpp>
#include <capref/rotation.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace capref {

/// Body regions used by the local encoder branch of the motion network.
enum class Region : int { Torso = 0, LeftArm = 1, RightArm = 2, LeftLeg = 3, RightLeg = 4 };
inline constexpr int kRegionCount = 5;

inline const char* region_name(Region r) {
  switch (r) {
    case Region::Torso: return "torso";
    case Region::LeftArm: return "left_arm";
    case Region::RightArm: return "right_arm";
    case Region::LeftLeg: return "left_leg";
    case Region::RightLeg: return "right_leg";
  }
  return "?";
}

struct JointLimit {
  double min = 0.0;
  double max = 0.0;
  bool operator==(const JointLimit&) const = default;
};

struct Joint {
  std::string name;
  int parent = -1;  // -1 for the root
  Vec3 offset = Vec3::Zero();
  std::vector<Axis> dof;  // X, Y, Z subset in that order
  std::vector<JointLimit> limits;
};

/// Kinematic tree in topological order (parent index < child index).
/// The root carries no angle DOF; its rotation and translation live in the pose.
class SkeletonModel {
 public:
  SkeletonModel() = default;
  SkeletonModel(std::vector<Joint> joints, std::vector<Region> regions)
      : joints_(std::move(joints)), regions_(std::move(regions)) {
    validate();
    dof_offset_.resize(joints_.size() + 1, 0);
    for (std::size_t j = 0; j < joints_.size(); ++j)
      dof_offset_[j + 1] = dof_offset_[j] + static_cast<int>(joints_[j].dof.size());
  }

  int joint_count() const { return static_cast<int>(joints_.size()); }
  int dof_count() const { return dof_offset_.empty() ? 0 : dof_offset_.back(); }
  /// Length of the stacked pose-parameter vector [theta, root_rot, root_trans].
  int param_count() const { return dof_count() + 6; }
  int dof_offset(int joint) const { return dof_offset_[joint]; }

  const Joint& joint(int j) const { return joints_[j]; }
  const std::vector<Joint>& joints() const { return joints_; }
  Region region(int j) const { return regions_[j]; }
  const std::vector<Region>& regions() const { return regions_; }

  /// Kinematic-tree edges as (parent, child) pairs.
  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> e;
    for (int j = 1; j < joint_count(); ++j) e.emplace_back(joints_[j].parent, j);
    return e;
  }

  JointLimit dof_limit(int dof_index) const {
    const int j = joint_of_dof(dof_index);
    return joints_[j].limits[dof_index - dof_offset_[j]];
  }

  int joint_of_dof(int dof_index) const {
    auto it = std::upper_bound(dof_offset_.begin(), dof_offset_.end(), dof_index);
    return static_cast<int>(it - dof_offset_.begin()) - 1;
  }

  std::optional<int> find(const std::string& name) const {
    for (int j = 0; j < joint_count(); ++j)
      if (joints_[j].name == name) return j;
    return std::nullopt;
  }

  bool operator==(const SkeletonModel& o) const {
    if (joints_.size() != o.joints_.size() || regions_ != o.regions_) return false;
    for (std::size_t j = 0; j < joints_.size(); ++j) {
      const Joint& a = joints_[j];
      const Joint& b = o.joints_[j];
      if (a.name != b.name || a.parent != b.parent || a.offset != b.offset || a.dof != b.dof ||
          a.limits != b.limits)
        return false;
    }
    return true;
  }

 private:
  void validate() const {
    if (joints_.empty()) throw InvalidInput("skeleton has no joints");
    if (regions_.size() != joints_.size())
      throw InvalidInput("region_map must assign every joint exactly once");
    for (std::size_t j = 0; j < joints_.size(); ++j) {
      const Joint& jt = joints_[j];
      if (j == 0) {
        if (jt.parent != -1) throw InvalidInput("joint 0 must be the root");
        if (!jt.dof.empty()) throw InvalidInput("root joint carries no angle DOF");
        if (!jt.offset.isZero(0.0)) throw InvalidInput("root offset must be zero");
      } else if (jt.parent < 0 || jt.parent >= static_cast<int>(j)) {
        throw InvalidInput("joint '" + jt.name + "': parent index must precede the child");
      }
      if (!jt.offset.allFinite()) throw InvalidInput("joint '" + jt.name + "': offset not finite");
      if (jt.dof.size() > 3 || jt.limits.size() != jt.dof.size())
        throw InvalidInput("joint '" + jt.name + "': dof/limits size mismatch");
      for (std::size_t k = 1; k < jt.dof.size(); ++k)
        if (static_cast<int>(jt.dof[k]) <= static_cast<int>(jt.dof[k - 1]))
          throw InvalidInput("joint '" + jt.name + "': dof axes must be unique and ordered X, Y, Z");
      for (const auto& l : jt.limits)
        if (!(l.min <= l.max) || !std::isfinite(l.min) || !std::isfinite(l.max))
          throw InvalidInput("joint '" + jt.name + "': limit min > max");
      const int r = static_cast<int>(regions_[j]);
      if (r < 0 || r >= kRegionCount) throw InvalidInput("joint '" + jt.name + "': bad region");
    }
  }

  std::vector<Joint> joints_;
  std::vector<Region> regions_;
  std::vector<int> dof_offset_;
};

/// One frame in angle form: theta per DOF, root axis-angle, root translation.
struct SkeletalPose {
  Eigen::VectorXd theta;
  Vec3 root_rot = Vec3::Zero();
  Vec3 root_trans = Vec3::Zero();

  static SkeletalPose rest(const SkeletonModel& sk) {
    SkeletalPose p;
    p.theta = Eigen::VectorXd::Zero(sk.dof_count());
    return p;
  }

  /// Stacked [theta, root_rot, root_trans] vector.
  Eigen::VectorXd stacked() const {
    Eigen::VectorXd v(theta.size() + 6);
    v << theta, root_rot, root_trans;
    return v;
  }

  static SkeletalPose from_stacked(const Eigen::VectorXd& v) {
    SkeletalPose p;
    const auto n = v.size() - 6;
    p.theta = v.head(n);
    p.root_rot = v.segment<3>(n);
    p.root_trans = v.tail<3>();
    return p;
  }

  bool operator==(const SkeletalPose& o) const {
    return theta == o.theta && root_rot == o.root_rot && root_trans == o.root_trans;
  }
};

/// Per-joint local rotations; joint 0 holds the root rotation.
struct QuatPose {
  std::vector<Quat> quats;
};

namespace detail {

inline void check_pose(const SkeletonModel& sk, const SkeletalPose& pose) {
  if (pose.theta.size() != sk.dof_count())
    throw InvalidInput("pose has " + std::to_string(pose.theta.size()) + " angles, skeleton has " +
                       std::to_string(sk.dof_count()) + " DOF");
}

inline Mat3 local_rotation(const SkeletonModel& sk, const SkeletalPose& pose, int j) {
  if (j == 0) return axis_angle_to_matrix(pose.root_rot);
  const Joint& jt = sk.joint(j);
  const int off = sk.dof_offset(j);
  return dof_rotation(jt.dof, std::span<const double>(pose.theta.data() + off, jt.dof.size()));
}

}  // namespace detail

/// World rotation and position of every joint.
struct JointFrames {
  std::vector<Mat3> rotation;
  std::vector<Vec3> position;
};

inline JointFrames joint_frames(const SkeletonModel& sk, const SkeletalPose& pose) {
  detail::check_pose(sk, pose);
  const int n = sk.joint_count();
  JointFrames f;
  f.rotation.resize(n);
  f.position.resize(n);
  for (int j = 0; j < n; ++j) {
    if (j == 0) {
      f.rotation[0] = detail::local_rotation(sk, pose, 0);
      f.position[0] = pose.root_trans;
      continue;
    }
    const int p = sk.joint(j).parent;
    f.position[j] = f.position[p] + f.rotation[p] * sk.joint(j).offset;
    f.rotation[j] = f.rotation[p] * detail::local_rotation(sk, pose, j);
  }
  return f;
}

inline std::vector<Vec3> forward_kinematics(const SkeletonModel& sk, const SkeletalPose& pose) {
  return joint_frames(sk, pose).position;
}

/// Joint positions and their derivative with respect to the stacked pose vector.
/// Row block 3*i..3*i+2 of `jacobian` belongs to joint i.
struct FkJacobian {
  std::vector<Vec3> position;
  Eigen::MatrixXd jacobian;  // 3N x (dof + 6)
};

inline FkJacobian forward_kinematics_jacobian(const SkeletonModel& sk, const SkeletalPose& pose) {
  const JointFrames f = joint_frames(sk, pose);
  const int n = sk.joint_count();
  const int ndof = sk.dof_count();
  FkJacobian out;
  out.position = f.position;
  out.jacobian = Eigen::MatrixXd::Zero(3 * n, ndof + 6);

  // World-frame axis of every DOF.
  std::vector<Vec3> omega(ndof);
  for (int j = 1; j < n; ++j) {
    const Joint& jt = sk.joint(j);
    Mat3 partial = f.rotation[jt.parent];
    const int off = sk.dof_offset(j);
    for (std::size_t k = 0; k < jt.dof.size(); ++k) {
      omega[off + k] = partial * unit_axis(jt.dof[k]);
      partial = partial * axis_rotation(jt.dof[k], pose.theta[off + k]);
    }
  }
  const Mat3 root_w = so3_left_jacobian(pose.root_rot);

  for (int i = 0; i < n; ++i) {
    auto rows = out.jacobian.middleRows(3 * i, 3);
    // Every strict ancestor c rotates joint i about c's position.
    for (int c = sk.joint(i).parent; c > 0; c = sk.joint(c).parent) {
      const Vec3 lever = f.position[i] - f.position[c];
      const int off = sk.dof_offset(c);
      for (std::size_t k = 0; k < sk.joint(c).dof.size(); ++k)
        rows.col(off + k) = omega[off + k].cross(lever);
    }
    const Vec3 lever = f.position[i] - f.position[0];
    for (int k = 0; k < 3; ++k) rows.col(ndof + k) = root_w.col(k).cross(lever);
    rows.middleCols(ndof + 3, 3).setIdentity();
  }
  return out;
}

inline SkeletalPose clamp_joint_limits(SkeletalPose pose, const SkeletonModel& sk) {
  detail::check_pose(sk, pose);
  for (int d = 0; d < sk.dof_count(); ++d) {
    const JointLimit l = sk.dof_limit(d);
    pose.theta[d] = std::clamp(pose.theta[d], l.min, l.max);
  }
  return pose;
}

inline QuatPose pose_to_quat(const SkeletonModel& sk, const SkeletalPose& pose) {
  detail::check_pose(sk, pose);
  QuatPose q;
  q.quats.resize(sk.joint_count());
  q.quats[0] = axis_angle_to_quat(pose.root_rot);
  for (int j = 1; j < sk.joint_count(); ++j)
    q.quats[j] = canonicalize(Quat(detail::local_rotation(sk, pose, j)).normalized());
  return q;
}

/// The quaternion-to-pose mapping: root quaternion to axis-angle, every other
/// joint factored onto its declared axes and clamped to limits.
inline SkeletalPose quat_to_pose(const SkeletonModel& sk, const QuatPose& q, const Vec3& root_trans) {
  if (static_cast<int>(q.quats.size()) != sk.joint_count())
    throw InvalidInput("quaternion pose has " + std::to_string(q.quats.size()) + " joints, skeleton has " +
                       std::to_string(sk.joint_count()));
  for (std::size_t j = 0; j < q.quats.size(); ++j)
    if (!q.quats[j].coeffs().allFinite() || std::abs(q.quats[j].norm() - 1.0) > 1e-6)
      throw InvalidInput("quaternion of joint " + std::to_string(j) + " is not unit (norm " +
                         std::to_string(q.quats[j].norm()) + ")");
  SkeletalPose pose = SkeletalPose::rest(sk);
  pose.root_rot = quat_to_axis_angle(q.quats[0]);
  pose.root_trans = root_trans;
  for (int j = 1; j < sk.joint_count(); ++j) {
    const Joint& jt = sk.joint(j);
    if (jt.dof.empty()) continue;
    const std::vector<double> ang = factor_rotation(jt.dof, q.quats[j].toRotationMatrix());
    const int off = sk.dof_offset(j);
    for (std::size_t k = 0; k < ang.size(); ++k)
      pose.theta[off + k] = std::clamp(ang[k], jt.limits[k].min, jt.limits[k].max);
  }
  return pose;
}

/// 15 joints, 30 angle DOF, Y up, facing +Z, meters.
inline SkeletonModel default_skeleton() {
  using A = Axis;
  std::vector<Joint> j;
  auto add = [&](std::string name, int parent, Vec3 off, std::vector<A> dof, std::vector<JointLimit> lim) {
    j.push_back(Joint{std::move(name), parent, off, std::move(dof), std::move(lim)});
  };
  add("pelvis", -1, Vec3::Zero(), {}, {});
  add("thorax", 0, {0, 0.50, 0}, {A::X, A::Y, A::Z}, {{-0.5, 0.8}, {-0.6, 0.6}, {-0.4, 0.4}});
  add("head", 1, {0, 0.25, 0}, {A::X, A::Y, A::Z}, {{-0.6, 0.6}, {-1.0, 1.0}, {-0.5, 0.5}});
  add("l_shoulder", 1, {0.18, 0, 0}, {A::X, A::Y, A::Z}, {{-2.5, 0.8}, {-1.2, 1.2}, {-0.3, 2.5}});
  add("l_elbow", 3, {0, -0.28, 0}, {A::X, A::Z}, {{-2.4, 0.1}, {-0.5, 0.5}});
  add("l_wrist", 4, {0, -0.25, 0}, {A::X, A::Z}, {{-1.0, 1.0}, {-0.5, 0.5}});
  add("r_shoulder", 1, {-0.18, 0, 0}, {A::X, A::Y, A::Z}, {{-2.5, 0.8}, {-1.2, 1.2}, {-2.5, 0.3}});
  add("r_elbow", 6, {0, -0.28, 0}, {A::X, A::Z}, {{-2.4, 0.1}, {-0.5, 0.5}});
  add("r_wrist", 7, {0, -0.25, 0}, {A::X, A::Z}, {{-1.0, 1.0}, {-0.5, 0.5}});
  add("l_hip", 0, {0.10, -0.05, 0}, {A::X, A::Y, A::Z}, {{-2.0, 0.5}, {-0.8, 0.8}, {-0.4, 1.0}});
  add("l_knee", 9, {0, -0.42, 0}, {A::X}, {{-0.1, 2.5}});
  add("l_ankle", 10, {0, -0.40, 0}, {A::X}, {{-0.6, 0.6}});
  add("r_hip", 0, {-0.10, -0.05, 0}, {A::X, A::Y, A::Z}, {{-2.0, 0.5}, {-0.8, 0.8}, {-1.0, 0.4}});
  add("r_knee", 12, {0, -0.42, 0}, {A::X}, {{-0.1, 2.5}});
  add("r_ankle", 13, {0, -0.40, 0}, {A::X}, {{-0.6, 0.6}});
  using R = Region;
  std::vector<Region> regions = {R::Torso,    R::Torso,    R::Torso,   R::LeftArm, R::LeftArm,
                                 R::LeftArm,  R::RightArm, R::RightArm, R::RightArm, R::LeftLeg,
                                 R::LeftLeg,  R::LeftLeg,  R::RightLeg, R::RightLeg, R::RightLeg};
  return SkeletonModel(std::move(j), std::move(regions));
}

/// Five-joint rig for small experiments: one joint per region.
inline SkeletonModel toy_skeleton() {
  using A = Axis;
  std::vector<Joint> j;
  j.push_back({"root", -1, Vec3::Zero(), {}, {}});
  j.push_back({"upper", 0, {0, 0.5, 0}, {A::X, A::Y, A::Z}, {{-1.0, 1.0}, {-0.8, 0.8}, {-1.0, 1.0}}});
  j.push_back({"upper_tip", 1, {0.3, 0, 0}, {A::X, A::Z}, {{-1.5, 1.5}, {-0.5, 0.5}}});
  j.push_back({"lower", 0, {0, -0.45, 0}, {A::X, A::Z}, {{-1.2, 1.2}, {-0.6, 0.6}}});
  j.push_back({"lower_tip", 3, {0, -0.4, 0}, {A::X}, {{-0.1, 2.4}}});
  using R = Region;
  return SkeletonModel(std::move(j), {R::Torso, R::LeftArm, R::RightArm, R::LeftLeg, R::RightLeg});
}

}  // namespace capref
