#pragma once

#include <capref/camera.hpp>
#include <capref/error.hpp>
#include <capref/json_io.hpp>
#include <capref/motion.hpp>
#include <capref/skeleton.hpp>

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace capref {

struct SceneConfig {
  int frames = 120;
  std::string skeleton = "default";  // "default" or "toy"
  int views = 4;
  double noise_px = 5.0;
  double occlusion_rate = 0.2;
  std::uint64_t seed = 42;
  /// Every frame repeats the first pose (no motion).
  bool static_pose = false;
  double fps = 30.0;
  int silhouette_points = 64;
  /// Added to the noise-derived confidence 1 - |noise| / (3 sigma).
  double confidence_bias = 0.4;

  void validate() const {
    if (frames < 2) throw InvalidInput("scene needs T >= 2");
    if (views < 2) throw InvalidInput("scene needs V >= 2 sparse views");
    if (!(noise_px >= 0.0)) throw InvalidInput("noise sigma must be >= 0");
    if (!(occlusion_rate >= 0.0 && occlusion_rate < 1.0)) throw InvalidInput("occlusion rate must lie in [0, 1)");
    if (skeleton != "default" && skeleton != "toy") throw InvalidInput("unknown skeleton '" + skeleton + "'");
    if (silhouette_points < 8) throw InvalidInput("silhouette needs at least 8 points");
    if (!(fps > 0.0)) throw InvalidInput("fps must be positive");
  }
};

struct SyntheticScene {
  SkeletonModel skeleton;
  CapsuleBody body;
  MotionMap gt_motion;
  Camera mono_camera;
  std::vector<Camera> sparse_cameras;
  ObservationSequence mono_obs;
  std::vector<ObservationSequence> sparse_obs;  // V x T
  MotionMap marker_ref;
  /// T x N_J, 1 where the mono keypoint was generated as occluded.
  Eigen::MatrixXi mono_occluded;

  std::vector<SkeletalPose> gt_poses() const { return extract_poses(gt_motion, skeleton); }
};

namespace detail {

/// Per-DOF trajectory: up to four sinusoids around a center, kept strictly
/// inside the joint limits.
struct Trajectory {
  double center = 0.0;
  std::vector<double> amp, freq, phase;

  double at(double time) const {
    double v = center;
    for (std::size_t k = 0; k < amp.size(); ++k) v += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * time + phase[k]);
    return v;
  }
};

inline Trajectory random_trajectory(std::mt19937_64& rng, double lo, double hi, double max_amp) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Trajectory tr;
  const double range = hi - lo;
  double c_lo = std::max(lo + 0.3 * range, -0.4);
  double c_hi = std::min(hi - 0.3 * range, 0.4);
  if (c_lo > c_hi) c_lo = c_hi = 0.5 * (lo + hi);
  tr.center = c_lo + (c_hi - c_lo) * u01(rng);
  const double margin = 0.9 * std::min(tr.center - lo, hi - tr.center);
  const double budget = std::min(margin, max_amp) * (0.4 + 0.6 * u01(rng));
  const int n = 1 + static_cast<int>(u01(rng) * 4.0) % 4;
  std::vector<double> w(n);
  double wsum = 0.0;
  for (auto& x : w) wsum += (x = 0.2 + u01(rng));
  for (int k = 0; k < n; ++k) {
    tr.amp.push_back(budget * w[k] / wsum);
    tr.freq.push_back(0.1 + 0.4 * u01(rng));
    tr.phase.push_back(2.0 * std::numbers::pi * u01(rng));
  }
  return tr;
}

inline ObservationSequence observe(const Camera& cam, const SkeletonModel& sk, const CapsuleBody& body,
                                   const std::vector<SkeletalPose>& poses, const SceneConfig& cfg,
                                   std::mt19937_64& rng, Eigen::MatrixXi* occluded) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double sigma = cfg.noise_px;
  const int nj = sk.joint_count();
  ObservationSequence seq(poses.size());
  if (occluded) occluded->setZero(static_cast<Eigen::Index>(poses.size()), nj);
  for (std::size_t t = 0; t < poses.size(); ++t) {
    FrameObservations& f = seq[t];
    const std::vector<Vec3> joints = forward_kinematics(sk, poses[t]);
    f.keypoints.resize(nj);
    f.conf.resize(nj);
    for (int i = 0; i < nj; ++i) {
      const Vec2 exact = project(cam, joints[i]);
      const Vec2 noise(sigma * gauss(rng), sigma * gauss(rng));
      double c = sigma > 0.0 ? std::clamp(1.0 - noise.norm() / (3.0 * sigma) + cfg.confidence_bias, 0.0, 1.0) : 1.0;
      Vec2 kp = exact + noise;
      const bool occ = u01(rng) < cfg.occlusion_rate;
      if (occ) {
        c = 0.3 * u01(rng);
        const double phi = 2.0 * std::numbers::pi * u01(rng);
        kp += 3.0 * sigma * Vec2(std::cos(phi), std::sin(phi));
        if (occluded) (*occluded)(static_cast<Eigen::Index>(t), i) = 1;
      }
      f.keypoints[i] = kp;
      f.conf[i] = c;
    }
    f.silhouette = silhouette_points(cam, sk, poses[t], body, cfg.silhouette_points);
    for (auto& p : f.silhouette) p += Vec2(sigma * gauss(rng), sigma * gauss(rng));
  }
  return seq;
}

/// Monotone map from [0, T') onto [0, T-1] whose local rate stays within +-20%.
inline std::vector<double> random_warp(std::mt19937_64& rng, int src_frames, int dst_frames) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double period = 20.0 + 40.0 * u01(rng);
  const double phase = 2.0 * std::numbers::pi * u01(rng);
  std::vector<double> cum(dst_frames, 0.0);
  for (int s = 1; s < dst_frames; ++s)
    cum[s] = cum[s - 1] + 1.0 + 0.2 * std::sin(2.0 * std::numbers::pi * (s - 0.5) / period + phase);
  std::vector<double> warp(dst_frames);
  const double scale = dst_frames > 1 ? (src_frames - 1) / cum.back() : 0.0;
  for (int s = 0; s < dst_frames; ++s) warp[s] = std::min(cum[s] * scale, static_cast<double>(src_frames - 1));
  return warp;
}

}  // namespace detail

/// Marker-style reference: time-warped copy of `gt` with smooth per-joint
/// rotational jitter of at most 2 degrees.
inline MotionMap make_marker_reference(const MotionMap& gt, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int src = gt.frames();
  const int dst = std::max(2, static_cast<int>(std::lround(src * (0.85 + 0.3 * u01(rng)))));
  MotionMap ref = time_warp(gt, detail::random_warp(rng, src, dst));
  const double max_jitter = 2.0 * std::numbers::pi / 180.0;
  for (int j = 0; j < ref.joints(); ++j) {
    Vec3 amp, freq, phase;
    for (int k = 0; k < 3; ++k) {
      amp[k] = max_jitter / std::sqrt(3.0) * u01(rng);
      freq[k] = 0.02 + 0.05 * u01(rng);
      phase[k] = 2.0 * std::numbers::pi * u01(rng);
    }
    for (int s = 0; s < dst; ++s) {
      Vec3 v;
      for (int k = 0; k < 3; ++k) v[k] = amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * s + phase[k]);
      ref.set_quat(s, j, canonicalize((ref.quat(s, j) * axis_angle_to_quat(v)).normalized()));
    }
  }
  ref.conf.setOnes();
  return ref;
}

/// Scene of a given skeleton and body; `cfg.skeleton` is ignored. Mono
/// camera in front of the subject; sparse cameras on a ring.
inline SyntheticScene synth_generate(const SceneConfig& cfg, SkeletonModel skeleton, CapsuleBody body) {
  cfg.validate();
  body.validate(skeleton);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  SyntheticScene scene;
  scene.skeleton = std::move(skeleton);
  scene.body = std::move(body);
  const SkeletonModel& sk = scene.skeleton;

  std::vector<detail::Trajectory> dof_traj;
  for (int d = 0; d < sk.dof_count(); ++d) {
    const JointLimit l = sk.dof_limit(d);
    dof_traj.push_back(detail::random_trajectory(rng, l.min, l.max, 0.6));
  }
  std::vector<detail::Trajectory> root_traj;
  const double root_amp[6] = {0.5, 0.1, 0.1, 0.3, 0.03, 0.3};  // yaw, pitch, roll, x, y, z
  for (double a : root_amp) {
    detail::Trajectory tr;
    tr.amp = {a * (0.5 + 0.5 * u01(rng))};
    tr.freq = {0.05 + 0.2 * u01(rng)};
    tr.phase = {2.0 * std::numbers::pi * u01(rng)};
    root_traj.push_back(tr);
  }

  std::vector<SkeletalPose> poses(cfg.frames, SkeletalPose::rest(sk));
  for (int t = 0; t < cfg.frames; ++t) {
    const double time = cfg.static_pose ? 0.0 : t / cfg.fps;
    SkeletalPose& p = poses[t];
    for (int d = 0; d < sk.dof_count(); ++d) p.theta[d] = dof_traj[d].at(time);
    const Mat3 r = axis_rotation(Axis::Y, root_traj[0].at(time)) * axis_rotation(Axis::X, root_traj[1].at(time)) *
                   axis_rotation(Axis::Z, root_traj[2].at(time));
    p.root_rot = matrix_to_axis_angle(r);
    p.root_trans = Vec3(root_traj[3].at(time), 0.95 + root_traj[4].at(time), root_traj[5].at(time));
  }
  scene.gt_motion = build_motion_map(poses, sk);

  scene.mono_camera = Camera::look_at({0.0, 1.2, 4.0}, {0.0, 1.0, 0.0}, 1000.0, 500.0, 500.0);
  for (int v = 0; v < cfg.views; ++v) {
    const double phi = std::numbers::pi / 4.0 + 2.0 * std::numbers::pi * v / cfg.views;
    scene.sparse_cameras.push_back(
        Camera::look_at({4.0 * std::sin(phi), 1.5, 4.0 * std::cos(phi)}, {0.0, 1.0, 0.0}, 1000.0, 500.0, 500.0));
  }

  scene.mono_obs = detail::observe(scene.mono_camera, sk, scene.body, poses, cfg, rng, &scene.mono_occluded);
  for (const Camera& cam : scene.sparse_cameras)
    scene.sparse_obs.push_back(detail::observe(cam, sk, scene.body, poses, cfg, rng, nullptr));

  scene.marker_ref = make_marker_reference(scene.gt_motion, rng);
  return scene;
}

inline SyntheticScene synth_generate(const SceneConfig& cfg) {
  cfg.validate();
  if (cfg.skeleton == "toy") {
    SkeletonModel sk = toy_skeleton();
    CapsuleBody body = CapsuleBody::uniform(sk, 0.06);
    return synth_generate(cfg, std::move(sk), std::move(body));
  }
  return synth_generate(cfg, default_skeleton(), default_body());
}

// Scene directory layout used by the command-line tool.

inline void save_scene(const std::filesystem::path& dir, const SyntheticScene& s) {
  std::filesystem::create_directories(dir);
  save_skeleton(dir / "skeleton.json", s.skeleton, &s.body);
  save_camera(dir / "mono_camera.json", s.mono_camera);
  for (std::size_t v = 0; v < s.sparse_cameras.size(); ++v) {
    save_camera(dir / ("sparse_camera_" + std::to_string(v) + ".json"), s.sparse_cameras[v]);
    save_observations(dir / ("sparse_obs_" + std::to_string(v) + ".json"), s.sparse_obs[v]);
  }
  save_observations(dir / "mono_obs.json", s.mono_obs);
  save_motion(dir / "gt.motion.json", s.gt_motion);
  save_motion(dir / "marker_ref.motion.json", s.marker_ref);
}

inline SyntheticScene load_scene(const std::filesystem::path& dir) {
  SyntheticScene s;
  s.skeleton = load_skeleton(dir / "skeleton.json", &s.body);
  if (s.body.radius.empty()) s.body = CapsuleBody::uniform(s.skeleton, 0.06);
  s.mono_camera = load_camera(dir / "mono_camera.json");
  for (int v = 0;; ++v) {
    const auto cam = dir / ("sparse_camera_" + std::to_string(v) + ".json");
    if (!std::filesystem::exists(cam)) break;
    s.sparse_cameras.push_back(load_camera(cam));
    s.sparse_obs.push_back(load_observations(dir / ("sparse_obs_" + std::to_string(v) + ".json")));
  }
  s.mono_obs = load_observations(dir / "mono_obs.json");
  s.gt_motion = load_motion(dir / "gt.motion.json");
  s.marker_ref = load_motion(dir / "marker_ref.motion.json");
  return s;
}

}  // namespace capref
