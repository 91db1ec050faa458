#pragma once

#include <capref/error.hpp>
#include <capref/rotation.hpp>
#include <capref/skeleton.hpp>

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace capref {

/// Per-frame concatenated joint quaternions (w,x,y,z per joint), per-joint
/// confidences and root translations.
struct MotionMap {
  Eigen::MatrixXd quats;         // T x 4N
  Eigen::MatrixXd conf;          // T x N
  Eigen::MatrixXd translations;  // T x 3

  MotionMap() = default;
  MotionMap(int frames, int joints)
      : quats(Eigen::MatrixXd::Zero(frames, 4 * joints)),
        conf(Eigen::MatrixXd::Ones(frames, joints)),
        translations(Eigen::MatrixXd::Zero(frames, 3)) {
    for (int t = 0; t < frames; ++t)
      for (int j = 0; j < joints; ++j) quats(t, 4 * j) = 1.0;
  }

  int frames() const { return static_cast<int>(quats.rows()); }
  int joints() const { return static_cast<int>(quats.cols() / 4); }

  Quat quat(int t, int j) const {
    return Quat(quats(t, 4 * j), quats(t, 4 * j + 1), quats(t, 4 * j + 2), quats(t, 4 * j + 3));
  }
  void set_quat(int t, int j, const Quat& q) {
    quats(t, 4 * j) = q.w();
    quats(t, 4 * j + 1) = q.x();
    quats(t, 4 * j + 2) = q.y();
    quats(t, 4 * j + 3) = q.z();
  }
  Vec3 translation(int t) const { return translations.row(t).transpose(); }

  QuatPose quat_pose(int t) const {
    QuatPose p;
    p.quats.resize(joints());
    for (int j = 0; j < joints(); ++j) p.quats[j] = quat(t, j);
    return p;
  }

  void validate() const {
    if (frames() < 2) throw InvalidInput("motion map needs T >= 2 frames");
    if (quats.cols() % 4 != 0) throw InvalidInput("quaternion block width must be a multiple of 4");
    if (conf.rows() != quats.rows() || conf.cols() != joints())
      throw InvalidInput("confidence map shape does not match T x N_J");
    if (translations.rows() != quats.rows() || translations.cols() != 3)
      throw InvalidInput("translation matrix shape does not match T x 3");
    if (!quats.allFinite() || !translations.allFinite()) throw InvalidInput("motion map has non-finite entries");
    if ((conf.array() < 0.0).any() || (conf.array() > 1.0).any() || !conf.allFinite())
      throw InvalidInput("confidence entries must lie in [0, 1]");
  }

  bool operator==(const MotionMap& o) const {
    return quats == o.quats && conf == o.conf && translations == o.translations;
  }
};

/// Each 4-block rescaled to unit norm and sign-canonicalized.
inline Eigen::MatrixXd normalize_quat_rows(const Eigen::MatrixXd& q) {
  Eigen::MatrixXd out = q;
  for (Eigen::Index t = 0; t < q.rows(); ++t)
    for (Eigen::Index j = 0; j + 3 < q.cols(); j += 4) {
      auto blk = out.row(t).segment<4>(j);
      const double n = blk.norm();
      if (n < 1e-12) {
        blk << 1.0, 0.0, 0.0, 0.0;
        continue;
      }
      blk /= n;
      if (blk[0] < 0.0) blk = -blk;
    }
  return out;
}

/// Keypoints, confidences and silhouette samples seen by one camera in one frame.
struct FrameObservations {
  std::vector<Vec2> keypoints;
  Eigen::VectorXd conf;
  std::vector<Vec2> silhouette;

  void validate() const {
    if (static_cast<Eigen::Index>(keypoints.size()) != conf.size())
      throw InvalidInput("observation keypoint and confidence counts differ");
    if ((conf.array() < 0.0).any() || (conf.array() > 1.0).any() || !conf.allFinite())
      throw InvalidInput("observation confidences must lie in [0, 1]");
    for (const auto& p : keypoints)
      if (!p.allFinite()) throw InvalidInput("observation keypoint not finite");
    for (const auto& p : silhouette)
      if (!p.allFinite()) throw InvalidInput("silhouette point not finite");
  }

  bool operator==(const FrameObservations& o) const {
    return keypoints == o.keypoints && conf == o.conf && silhouette == o.silhouette;
  }
};

using ObservationSequence = std::vector<FrameObservations>;

inline MotionMap build_motion_map(std::span<const SkeletalPose> poses, const SkeletonModel& sk,
                                  const Eigen::MatrixXd& conf) {
  const int t_len = static_cast<int>(poses.size());
  if (conf.rows() != t_len || conf.cols() != sk.joint_count())
    throw InvalidInput("confidence map must be " + std::to_string(t_len) + " x " + std::to_string(sk.joint_count()));
  if ((conf.array() < 0.0).any() || (conf.array() > 1.0).any() || !conf.allFinite())
    throw InvalidInput("confidence entries must lie in [0, 1]");
  MotionMap m(t_len, sk.joint_count());
  m.conf = conf;
  for (int t = 0; t < t_len; ++t) {
    const QuatPose q = pose_to_quat(sk, poses[t]);
    for (int j = 0; j < sk.joint_count(); ++j) m.set_quat(t, j, q.quats[j]);
    m.translations.row(t) = poses[t].root_trans.transpose();
  }
  return m;
}

inline MotionMap build_motion_map(std::span<const SkeletalPose> poses, const SkeletonModel& sk) {
  return build_motion_map(poses, sk, Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(poses.size()), sk.joint_count()));
}

/// Frame-by-frame quaternion-to-pose mapping. Quaternions must already be unit.
inline std::vector<SkeletalPose> extract_poses(const MotionMap& m, const SkeletonModel& sk) {
  if (m.joints() != sk.joint_count()) throw InvalidInput("motion map joint count does not match skeleton");
  std::vector<SkeletalPose> out;
  out.reserve(m.frames());
  for (int t = 0; t < m.frames(); ++t) out.push_back(quat_to_pose(sk, m.quat_pose(t), m.translation(t)));
  return out;
}

/// Normalized linear interpolation with hemisphere alignment.
inline Quat nlerp(const Quat& a, Quat b, double u) {
  if (a.coeffs().dot(b.coeffs()) < 0.0) b.coeffs() = -b.coeffs();
  Quat q;
  q.coeffs() = (1.0 - u) * a.coeffs() + u * b.coeffs();
  return canonicalize(q.normalized());
}

/// Resample `m` at the (fractional) source frame times in `warp`.
inline MotionMap time_warp(const MotionMap& m, std::span<const double> warp) {
  const int src = m.frames();
  const int dst = static_cast<int>(warp.size());
  if (dst < 1) throw InvalidInput("warp is empty");
  for (int s = 0; s < dst; ++s) {
    if (!(warp[s] >= 0.0) || !(warp[s] <= src - 1)) throw InvalidInput("warp sample outside [0, T-1]");
    if (s > 0 && !(warp[s] > warp[s - 1])) throw InvalidInput("warp must be strictly increasing");
  }
  MotionMap out(dst, m.joints());
  for (int s = 0; s < dst; ++s) {
    const double w = warp[s];
    const int i0 = std::min(static_cast<int>(std::floor(w)), src - 1);
    const int i1 = std::min(i0 + 1, src - 1);
    const double u = w - i0;
    if (u == 0.0) {
      out.quats.row(s) = m.quats.row(i0);
      out.conf.row(s) = m.conf.row(i0);
      out.translations.row(s) = m.translations.row(i0);
      continue;
    }
    for (int j = 0; j < m.joints(); ++j) out.set_quat(s, j, nlerp(m.quat(i0, j), m.quat(i1, j), u));
    out.conf.row(s) = (1.0 - u) * m.conf.row(i0) + u * m.conf.row(i1);
    out.translations.row(s) = (1.0 - u) * m.translations.row(i0) + u * m.translations.row(i1);
  }
  return out;
}

}  // namespace capref
