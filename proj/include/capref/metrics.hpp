#pragma once

// Joint-position metrics in the global frame (no alignment).

#include <capref/error.hpp>
#include <capref/motion.hpp>
#include <capref/skeleton.hpp>

#include <Eigen/Core>

#include <string>
#include <vector>

namespace capref {

namespace detail {

inline void check_same_shape(const MotionMap& pred, const MotionMap& gt, const SkeletonModel& sk) {
  pred.validate();
  gt.validate();
  if (pred.frames() != gt.frames() || pred.joints() != gt.joints())
    throw InvalidInput("metric: predicted and ground-truth motion differ in shape");
  if (gt.joints() != sk.joint_count()) throw InvalidInput("metric: motion joint count differs from the skeleton");
}

/// T x N_J joint errors in metres.
inline Eigen::MatrixXd joint_errors(const MotionMap& pred, const MotionMap& gt, const SkeletonModel& sk) {
  check_same_shape(pred, gt, sk);
  const auto a = extract_poses(pred, sk), b = extract_poses(gt, sk);
  Eigen::MatrixXd e(pred.frames(), sk.joint_count());
  for (int t = 0; t < pred.frames(); ++t) {
    const auto ja = forward_kinematics(sk, a[t]), jb = forward_kinematics(sk, b[t]);
    for (int i = 0; i < sk.joint_count(); ++i) e(t, i) = (ja[i] - jb[i]).norm();
  }
  return e;
}

}  // namespace detail

/// Joint whose distance to the root defines the PCK reference length: "neck"
/// if present, else "thorax", else the root's first child.
inline int torso_reference_joint(const SkeletonModel& sk) {
  for (const char* name : {"neck", "thorax"})
    for (int j = 0; j < sk.joint_count(); ++j)
      if (sk.joint(j).name == name) return j;
  for (int j = 1; j < sk.joint_count(); ++j)
    if (sk.joint(j).parent == 0) return j;
  throw InvalidInput("skeleton has no joint to define the torso length");
}

/// Mean joint error per frame, in millimetres.
inline std::vector<double> per_frame_mpjpe(const MotionMap& pred, const MotionMap& gt, const SkeletonModel& sk) {
  const Eigen::MatrixXd e = detail::joint_errors(pred, gt, sk);
  std::vector<double> out;
  for (Eigen::Index t = 0; t < e.rows(); ++t) out.push_back(1000.0 * e.row(t).mean());
  return out;
}

inline double mpjpe(const MotionMap& pred, const MotionMap& gt, const SkeletonModel& sk) {
  return 1000.0 * detail::joint_errors(pred, gt, sk).mean();
}

/// Percentage of joint-frames whose error is below alpha times that frame's
/// ground-truth root-to-neck distance.
inline double pck(const MotionMap& pred, const MotionMap& gt, const SkeletonModel& sk, double alpha) {
  if (!(alpha > 0.0)) throw InvalidInput("PCK alpha must be positive");
  const Eigen::MatrixXd e = detail::joint_errors(pred, gt, sk);
  const int ref = torso_reference_joint(sk);
  const auto poses = extract_poses(gt, sk);
  long hits = 0;
  for (Eigen::Index t = 0; t < e.rows(); ++t) {
    const auto j = forward_kinematics(sk, poses[t]);
    const double torso = (j[ref] - j[0]).norm();
    hits += (e.row(t).array() < alpha * torso).count();
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(e.size());
}

}  // namespace capref
