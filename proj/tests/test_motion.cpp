#include "oracles.hpp"

#include <capref/json_io.hpp>
#include <capref/motion.hpp>
#include <capref/synth.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace capref;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(d);
  return d;
}

MotionMap random_motion(std::mt19937_64& rng, int frames, int joints) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MotionMap m(frames, joints);
  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < joints; ++j)
      m.set_quat(t, j, canonicalize(Quat(u(rng), u(rng), u(rng), u(rng)).normalized()));
    m.translations.row(t) = Eigen::RowVector3d(u(rng), u(rng), u(rng));
    for (int j = 0; j < joints; ++j) m.conf(t, j) = 0.5 * (u(rng) + 1.0);
  }
  return m;
}

}  // namespace

TEST(MotionMap, IdentityPoses) {
  const SkeletonModel sk = default_skeleton();
  std::vector<SkeletalPose> poses(5, SkeletalPose::rest(sk));
  const MotionMap m = build_motion_map(poses, sk);
  ASSERT_EQ(m.frames(), 5);
  ASSERT_EQ(m.quats.cols(), 60);
  for (int t = 0; t < 5; ++t) {
    for (int j = 0; j < 15; ++j) EXPECT_EQ(m.quats.row(t).segment<4>(4 * j), Eigen::RowVector4d(1, 0, 0, 0));
    EXPECT_TRUE(m.translations.row(t).isZero(0.0));
  }
}

TEST(MotionMap, RoundTripThroughExtractPoses) {
  std::mt19937_64 rng(3);
  const SkeletonModel sk = default_skeleton();
  std::vector<SkeletalPose> poses;
  for (int t = 0; t < 20; ++t) poses.push_back(capref::testing::random_pose(rng, sk));
  const auto back = extract_poses(build_motion_map(poses, sk), sk);
  for (int t = 0; t < 20; ++t) {
    EXPECT_LE((back[t].theta - poses[t].theta).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((axis_angle_to_matrix(back[t].root_rot) - axis_angle_to_matrix(poses[t].root_rot)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(back[t].root_trans, poses[t].root_trans);
  }
}

TEST(MotionMap, RejectsBadConfidenceAndLengths) {
  const SkeletonModel sk = default_skeleton();
  std::vector<SkeletalPose> poses(3, SkeletalPose::rest(sk));
  Eigen::MatrixXd conf = Eigen::MatrixXd::Ones(3, 15);
  conf(1, 4) = 1.5;
  EXPECT_THROW(build_motion_map(poses, sk, conf), InvalidInput);
  EXPECT_THROW(build_motion_map(poses, sk, Eigen::MatrixXd::Ones(2, 15)), InvalidInput);
}

TEST(TimeWarp, IdentityAndIntegerSamples) {
  std::mt19937_64 rng(8);
  const MotionMap m = random_motion(rng, 10, 4);
  std::vector<double> id(10);
  for (int i = 0; i < 10; ++i) id[i] = i;
  EXPECT_TRUE(time_warp(m, id) == m);
  const std::vector<double> picks = {1, 4, 5, 9};
  const MotionMap w = time_warp(m, picks);
  for (int s = 0; s < 4; ++s) {
    EXPECT_EQ(w.quats.row(s), m.quats.row(static_cast<int>(picks[s])));
    EXPECT_EQ(w.translations.row(s), m.translations.row(static_cast<int>(picks[s])));
  }
}

TEST(TimeWarp, MidpointIsNormalizedAverage) {
  MotionMap m(2, 1);
  const Quat a = canonicalize(Quat(Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized())));
  const Quat b = canonicalize(Quat(Eigen::AngleAxisd(0.5, Vec3(-1, 2, 0.5).normalized())));
  m.set_quat(0, 0, a);
  m.set_quat(1, 0, b);
  m.translations.row(1) = Eigen::RowVector3d(2, 4, 6);
  const std::vector<double> warp = {0.5};
  const MotionMap w = time_warp(m, warp);
  const Eigen::Vector4d avg = (0.5 * (a.coeffs() + b.coeffs())).normalized();
  EXPECT_LE((w.quat(0, 0).coeffs() - avg).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(w.translations.row(0), Eigen::RowVector3d(1, 2, 3));
}

TEST(TimeWarp, RejectsNonMonotoneWarp) {
  MotionMap m(5, 1);
  EXPECT_THROW(time_warp(m, std::vector<double>{0, 2, 2}), InvalidInput);
  EXPECT_THROW(time_warp(m, std::vector<double>{0, 3, 1}), InvalidInput);
  EXPECT_THROW(time_warp(m, std::vector<double>{0, 4.5}), InvalidInput);
}

TEST(MotionFile, RoundTripIsExact) {
  std::mt19937_64 rng(6);
  const auto path = temp_dir("capref_motion") / "m.motion.json";
  for (int trial = 0; trial < 5; ++trial) {
    const MotionMap m = random_motion(rng, 2 + trial * 7, 15);
    save_motion(path, m);
    const MotionMap back = load_motion(path);
    EXPECT_LE((back.quats - m.quats).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((back.conf - m.conf).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((back.translations - m.translations).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(MotionFile, TruncatedFileIsParseError) {
  std::mt19937_64 rng(6);
  const auto dir = temp_dir("capref_motion");
  save_motion(dir / "full.motion.json", random_motion(rng, 4, 3));
  const std::string text = io::read_text(dir / "full.motion.json");
  io::write_text(dir / "cut.motion.json", text.substr(0, text.size() / 2));
  try {
    load_motion(dir / "cut.motion.json");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("cut.motion.json:"), std::string::npos);
  }
}

TEST(MotionFile, WrongShapeAndVersion) {
  std::mt19937_64 rng(6);
  json j = motion_to_json(random_motion(rng, 4, 3));
  j["format"] = "motion/2";
  EXPECT_THROW(motion_from_json(j), UnsupportedVersion);
  j = motion_to_json(random_motion(rng, 4, 3));
  j["conf"].erase(0);
  EXPECT_THROW(motion_from_json(j), ParseError);
  EXPECT_THROW(load_motion("/nonexistent/x.motion.json"), IoError);
}

TEST(ObservationFile, RoundTrip) {
  SceneConfig cfg;
  cfg.frames = 3;
  const SyntheticScene s = synth_generate(cfg);
  const auto path = temp_dir("capref_motion") / "obs.json";
  save_observations(path, s.mono_obs);
  EXPECT_TRUE(load_observations(path) == s.mono_obs);
}

TEST(Synth, NoiselessObservationsAreExactProjections) {
  SceneConfig cfg;
  cfg.frames = 10;
  cfg.noise_px = 0;
  cfg.occlusion_rate = 0;
  const SyntheticScene s = synth_generate(cfg);
  const auto poses = s.gt_poses();
  for (int t = 0; t < cfg.frames; ++t) {
    const auto joints = forward_kinematics(s.skeleton, poses[t]);
    for (int i = 0; i < s.skeleton.joint_count(); ++i) {
      EXPECT_LE((s.mono_obs[t].keypoints[i] - project(s.mono_camera, joints[i])).norm(), 1e-9);
      EXPECT_EQ(s.mono_obs[t].conf[i], 1.0);
    }
  }
}

TEST(Synth, SameSeedIsBitwiseIdentical) {
  SceneConfig cfg;
  cfg.frames = 30;
  const SyntheticScene a = synth_generate(cfg);
  const SyntheticScene b = synth_generate(cfg);
  EXPECT_TRUE(a.gt_motion == b.gt_motion);
  EXPECT_TRUE(a.marker_ref == b.marker_ref);
  EXPECT_TRUE(a.mono_obs == b.mono_obs);
  EXPECT_TRUE(a.sparse_obs == b.sparse_obs);
  cfg.seed = 43;
  EXPECT_FALSE(synth_generate(cfg).gt_motion == a.gt_motion);
}

TEST(Synth, OcclusionCountIsBinomial) {
  SceneConfig cfg;
  cfg.frames = 100;
  cfg.occlusion_rate = 0.2;
  const SyntheticScene s = synth_generate(cfg);
  const double n = 100.0 * 15.0;
  const double sd = std::sqrt(n * 0.2 * 0.8);
  EXPECT_NEAR(s.mono_occluded.sum(), 300.0, 3.0 * sd);
  for (int t = 0; t < 100; ++t)
    for (int i = 0; i < 15; ++i)
      if (s.mono_occluded(t, i)) EXPECT_LE(s.mono_obs[t].conf[i], 0.3);
}

TEST(Synth, GroundTruthRespectsLimitsAndMarkerKeepsBoneLengths) {
  SceneConfig cfg;
  cfg.frames = 60;
  const SyntheticScene s = synth_generate(cfg);
  const SkeletonModel& sk = s.skeleton;
  for (const auto& p : s.gt_poses())
    for (int d = 0; d < sk.dof_count(); ++d) {
      EXPECT_GT(p.theta[d], sk.dof_limit(d).min);
      EXPECT_LT(p.theta[d], sk.dof_limit(d).max);
    }
  EXPECT_NE(s.marker_ref.frames(), 0);
  const auto marker = extract_poses(s.marker_ref, sk);
  const auto gt = s.gt_poses();
  for (const auto* seq : {&marker, &gt})
    for (const auto& p : *seq) {
      const auto pos = forward_kinematics(sk, p);
      for (int j = 1; j < sk.joint_count(); ++j)
        EXPECT_NEAR((pos[j] - pos[sk.joint(j).parent]).norm(), sk.joint(j).offset.norm(), 1e-12);
    }
}

TEST(Synth, MarkerReferenceIsUnsynchronizedButClose) {
  SceneConfig cfg;
  cfg.frames = 90;
  const SyntheticScene s = synth_generate(cfg);
  EXPECT_GE(s.marker_ref.frames(), 2);
  // Starts on the same frame up to the jitter (<= 2 degrees per joint).
  for (int j = 0; j < 15; ++j)
    EXPECT_LE(s.marker_ref.quat(0, j).angularDistance(s.gt_motion.quat(0, j)), 2.0 * std::numbers::pi / 180 + 1e-9);
}

TEST(Synth, InvalidConfigs) {
  SceneConfig cfg;
  cfg.frames = 1;
  EXPECT_THROW(synth_generate(cfg), InvalidInput);
  cfg = {};
  cfg.views = 1;
  EXPECT_THROW(synth_generate(cfg), InvalidInput);
  cfg = {};
  cfg.noise_px = -1;
  EXPECT_THROW(synth_generate(cfg), InvalidInput);
  cfg = {};
  cfg.occlusion_rate = 1.0;
  EXPECT_THROW(synth_generate(cfg), InvalidInput);
}

TEST(Synth, SceneDirectoryRoundTrip) {
  SceneConfig cfg;
  cfg.frames = 8;
  const SyntheticScene s = synth_generate(cfg);
  const auto dir = temp_dir("capref_scene_rt");
  save_scene(dir, s);
  const SyntheticScene back = load_scene(dir);
  EXPECT_TRUE(back.skeleton == s.skeleton);
  EXPECT_EQ(back.body.radius, s.body.radius);
  EXPECT_TRUE(back.gt_motion == s.gt_motion);
  EXPECT_TRUE(back.sparse_obs == s.sparse_obs);
  EXPECT_EQ(back.sparse_cameras.size(), s.sparse_cameras.size());
  std::filesystem::remove_all(dir);
}
