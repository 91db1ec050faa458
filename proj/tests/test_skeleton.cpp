#include "oracles.hpp"

#include <capref/json_io.hpp>
#include <capref/skeleton.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace capref;
using capref::testing::fk_homogeneous;
using capref::testing::random_pose;
using capref::testing::random_skeleton;

namespace {

double max_abs_diff(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return m;
}

SkeletonModel single_x_joint(double lo, double hi) {
  std::vector<Joint> j;
  j.push_back({"root", -1, Vec3::Zero(), {}, {}});
  j.push_back({"hinge", 0, {0, 1, 0}, {Axis::X}, {{lo, hi}}});
  return SkeletonModel(std::move(j), {Region::Torso, Region::LeftArm});
}

}  // namespace

TEST(Skeleton, DefaultRigHas15Joints30Dof) {
  const SkeletonModel sk = default_skeleton();
  EXPECT_EQ(sk.joint_count(), 15);
  EXPECT_EQ(sk.dof_count(), 30);
  EXPECT_EQ(sk.param_count(), 36);
  EXPECT_EQ(sk.edges().size(), 14u);
}

TEST(Skeleton, RejectsMalformedTrees) {
  std::vector<Joint> j;
  j.push_back({"root", -1, Vec3::Zero(), {}, {}});
  j.push_back({"a", 2, {0, 1, 0}, {}, {}});
  j.push_back({"b", 0, {0, 1, 0}, {}, {}});
  EXPECT_THROW(SkeletonModel(j, {Region::Torso, Region::Torso, Region::Torso}), InvalidInput);

  std::vector<Joint> two_roots;
  two_roots.push_back({"root", -1, Vec3::Zero(), {}, {}});
  two_roots.push_back({"r2", -1, Vec3::Zero(), {}, {}});
  EXPECT_THROW(SkeletonModel(two_roots, {Region::Torso, Region::Torso}), InvalidInput);

  std::vector<Joint> bad_limit;
  bad_limit.push_back({"root", -1, Vec3::Zero(), {}, {}});
  bad_limit.push_back({"a", 0, {0, 1, 0}, {Axis::X}, {{1.0, -1.0}}});
  EXPECT_THROW(SkeletonModel(bad_limit, {Region::Torso, Region::Torso}), InvalidInput);

  std::vector<Joint> unordered;
  unordered.push_back({"root", -1, Vec3::Zero(), {}, {}});
  unordered.push_back({"a", 0, {0, 1, 0}, {Axis::Z, Axis::X}, {{-1, 1}, {-1, 1}}});
  EXPECT_THROW(SkeletonModel(unordered, {Region::Torso, Region::Torso}), InvalidInput);

  std::vector<Joint> ok;
  ok.push_back({"root", -1, Vec3::Zero(), {}, {}});
  EXPECT_THROW(SkeletonModel(ok, {}), InvalidInput);
}

TEST(ForwardKinematics, IdentityPoseIsCumulativeOffsets) {
  const SkeletonModel sk = default_skeleton();
  const auto pos = forward_kinematics(sk, SkeletalPose::rest(sk));
  for (int j = 0; j < sk.joint_count(); ++j) {
    Vec3 expected = Vec3::Zero();
    for (int a = j; a > 0; a = sk.joint(a).parent) expected += sk.joint(a).offset;
    EXPECT_TRUE(pos[j].isApprox(expected, 1e-15) || (pos[j] - expected).norm() < 1e-15) << j;
  }
}

TEST(ForwardKinematics, MatchesHomogeneousChainOnRandomTrees) {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = std::uniform_int_distribution<int>(3, 20)(rng);
    const SkeletonModel sk = random_skeleton(rng, n);
    const SkeletalPose pose = random_pose(rng, sk);
    worst = std::max(worst, max_abs_diff(forward_kinematics(sk, pose), fk_homogeneous(sk, pose)));
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(ForwardKinematics, FifteenJointChainMatchesOracle) {
  std::mt19937_64 rng(3);
  std::vector<Joint> j;
  std::vector<Region> r;
  j.push_back({"j0", -1, Vec3::Zero(), {}, {}});
  r.push_back(Region::Torso);
  for (int i = 1; i < 15; ++i) {
    j.push_back({"j" + std::to_string(i), i - 1, {0.1 * i, 0.2, -0.05}, {Axis::X, Axis::Y, Axis::Z},
                 {{-2, 2}, {-1.2, 1.2}, {-2, 2}}});
    r.push_back(Region::Torso);
  }
  const SkeletonModel sk(std::move(j), std::move(r));
  const SkeletalPose pose = random_pose(rng, sk);
  EXPECT_LE(max_abs_diff(forward_kinematics(sk, pose), fk_homogeneous(sk, pose)), 1e-9);
}

TEST(ForwardKinematics, RootTranslationEquivariance) {
  std::mt19937_64 rng(11);
  const SkeletonModel sk = default_skeleton();
  SkeletalPose pose = random_pose(rng, sk);
  const auto a = forward_kinematics(sk, pose);
  pose.root_trans += Vec3(1, 0, 0);
  const auto b = forward_kinematics(sk, pose);
  EXPECT_EQ(b[0], pose.root_trans);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LE((b[i] - a[i] - Vec3(1, 0, 0)).norm(), 1e-15);
}

TEST(ForwardKinematics, GlobalRotationEquivariance) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const SkeletonModel sk = random_skeleton(rng, 10);
    SkeletalPose pose = random_pose(rng, sk);
    const auto a = forward_kinematics(sk, pose);
    const Mat3 r0 = capref::testing::rodrigues(Vec3(0.3, -1.1, 0.7) * (0.1 + trial * 0.03));
    pose.root_rot = matrix_to_axis_angle(r0 * axis_angle_to_matrix(pose.root_rot));
    const auto b = forward_kinematics(sk, pose);
    for (std::size_t i = 0; i < a.size(); ++i)
      EXPECT_LE((b[i] - b[0] - r0 * (a[i] - a[0])).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(ForwardKinematics, DimensionMismatchIsInvalidInput) {
  const SkeletonModel sk = default_skeleton();
  SkeletalPose p;
  p.theta = Eigen::VectorXd::Zero(29);
  EXPECT_THROW(forward_kinematics(sk, p), InvalidInput);
  EXPECT_THROW(pose_to_quat(sk, p), InvalidInput);
}

TEST(ForwardKinematics, JacobianMatchesCentralDifferences) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const SkeletonModel sk = random_skeleton(rng, 8);
    const SkeletalPose pose = random_pose(rng, sk, 0.05);
    const FkJacobian fk = forward_kinematics_jacobian(sk, pose);
    const Eigen::VectorXd x = pose.stacked();
    for (int k = 0; k < x.size(); ++k) {
      const double h = 1e-6;
      Eigen::VectorXd xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      const auto pp = forward_kinematics(sk, SkeletalPose::from_stacked(xp));
      const auto pm = forward_kinematics(sk, SkeletalPose::from_stacked(xm));
      for (int i = 0; i < sk.joint_count(); ++i) {
        const Vec3 num = (pp[i] - pm[i]) / (2 * h);
        EXPECT_LE((fk.jacobian.block<3, 1>(3 * i, k) - num).norm(), 1e-6 * std::max(1.0, num.norm()))
            << "trial " << trial << " joint " << i << " param " << k;
      }
    }
  }
}

TEST(QuatMapping, IdentityPoseGivesIdentityQuats) {
  const SkeletonModel sk = default_skeleton();
  const QuatPose q = pose_to_quat(sk, SkeletalPose::rest(sk));
  for (const Quat& x : q.quats) {
    EXPECT_EQ(x.w(), 1.0);
    EXPECT_EQ(x.vec(), Vec3::Zero());
  }
  const SkeletalPose back = quat_to_pose(sk, q, Vec3::Zero());
  EXPECT_EQ(back, SkeletalPose::rest(sk));
}

TEST(QuatMapping, HalfAngleFormula) {
  const SkeletonModel sk = single_x_joint(-3.0, 3.0);
  SkeletalPose p = SkeletalPose::rest(sk);
  p.theta[0] = std::numbers::pi / 2;
  const Quat q = pose_to_quat(sk, p).quats[1];
  EXPECT_NEAR(q.w(), std::sqrt(2.0) / 2, 1e-15);
  EXPECT_NEAR(q.x(), std::sqrt(2.0) / 2, 1e-15);
  EXPECT_NEAR(q.y(), 0.0, 1e-15);
  EXPECT_NEAR(q.z(), 0.0, 1e-15);
}

TEST(QuatMapping, RoundTripOnRandomTrees) {
  std::mt19937_64 rng(21);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const SkeletonModel sk = random_skeleton(rng, std::uniform_int_distribution<int>(3, 20)(rng));
    const SkeletalPose pose = random_pose(rng, sk);
    const SkeletalPose back = quat_to_pose(sk, pose_to_quat(sk, pose), pose.root_trans);
    if (sk.dof_count() > 0) worst = std::max(worst, (back.theta - pose.theta).cwiseAbs().maxCoeff());
    // Root axis-angle can differ only by representation; compare rotations.
    worst = std::max(worst, (axis_angle_to_matrix(back.root_rot) - axis_angle_to_matrix(pose.root_rot)).cwiseAbs().maxCoeff());
    EXPECT_EQ(back.root_trans, pose.root_trans);
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(QuatMapping, CanonicalSignAndDoubleCover) {
  std::mt19937_64 rng(22);
  const SkeletonModel sk = default_skeleton();
  for (int trial = 0; trial < 200; ++trial) {
    const SkeletalPose pose = random_pose(rng, sk);
    QuatPose q = pose_to_quat(sk, pose);
    for (const Quat& x : q.quats) {
      EXPECT_GE(x.w(), 0.0);
      EXPECT_NEAR(x.norm(), 1.0, 1e-12);
    }
    const SkeletalPose a = quat_to_pose(sk, q, pose.root_trans);
    for (Quat& x : q.quats) x.coeffs() = -x.coeffs();
    const SkeletalPose b = quat_to_pose(sk, q, pose.root_trans);
    EXPECT_LE((a.theta - b.theta).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((a.root_rot - b.root_rot).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(QuatMapping, ClampsBeyondLimit) {
  const SkeletonModel sk = single_x_joint(-0.5, 0.7);
  SkeletalPose p = SkeletalPose::rest(sk);
  p.theta[0] = 0.7 + 0.1;
  const SkeletalPose back = quat_to_pose(sk, pose_to_quat(sk, p), Vec3::Zero());
  EXPECT_EQ(back.theta[0], 0.7);
}

TEST(QuatMapping, DropsOffAxisRotation) {
  // A hinge about X cannot represent a pure Y rotation; nearest is zero.
  const SkeletonModel sk = single_x_joint(-3.0, 3.0);
  QuatPose q;
  q.quats = {Quat::Identity(), Quat(Eigen::AngleAxisd(0.4, Vec3::UnitY()))};
  EXPECT_NEAR(quat_to_pose(sk, q, Vec3::Zero()).theta[0], 0.0, 1e-15);
  // Mixed rotation keeps the X component.
  q.quats[1] = Quat(Eigen::AngleAxisd(0.3, Vec3::UnitX()) * Eigen::AngleAxisd(0.2, Vec3::UnitY()));
  EXPECT_NEAR(quat_to_pose(sk, q, Vec3::Zero()).theta[0], 0.3, 0.02);
}

TEST(QuatMapping, TwoAxisProjectionIsNearestRotation) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::vector<std::vector<Axis>> pairs = {{Axis::X, Axis::Y}, {Axis::X, Axis::Z}, {Axis::Y, Axis::Z}};
  for (const auto& axes : pairs) {
    for (int trial = 0; trial < 50; ++trial) {
      const Mat3 r = capref::testing::rodrigues(Vec3(u(rng), u(rng), u(rng)));
      const std::vector<double> a = factor_rotation(axes, r);
      const double best = (dof_rotation(axes, a) - r).norm();
      // Brute-force grid around the answer must not do better.
      for (double d0 = -0.05; d0 <= 0.05; d0 += 0.01)
        for (double d1 = -0.05; d1 <= 0.05; d1 += 0.01) {
          const std::vector<double> b = {a[0] + d0, a[1] + d1};
          EXPECT_GE((dof_rotation(axes, b) - r).norm(), best - 1e-12);
        }
    }
  }
}

TEST(QuatMapping, RejectsNonUnitQuaternion) {
  const SkeletonModel sk = default_skeleton();
  QuatPose q = pose_to_quat(sk, SkeletalPose::rest(sk));
  q.quats[3].coeffs() *= 1.001;
  EXPECT_THROW(quat_to_pose(sk, q, Vec3::Zero()), InvalidInput);
  q.quats.pop_back();
  EXPECT_THROW(quat_to_pose(sk, q, Vec3::Zero()), InvalidInput);
}

TEST(ClampJointLimits, Examples) {
  const SkeletonModel sk = single_x_joint(-0.5, 0.7);
  SkeletalPose p = SkeletalPose::rest(sk);
  p.theta[0] = 0.2;
  p.root_rot = Vec3(0.1, 0.2, 0.3);
  EXPECT_EQ(clamp_joint_limits(p, sk), p);
  p.theta[0] = 1.7;
  EXPECT_EQ(clamp_joint_limits(p, sk).theta[0], 0.7);
  p.theta[0] = -1.5;
  const SkeletalPose c = clamp_joint_limits(p, sk);
  EXPECT_EQ(c.theta[0], -0.5);
  EXPECT_EQ(c.root_rot, p.root_rot);
}

TEST(SkeletonFile, BitExactRoundTrip) {
  std::mt19937_64 rng(4);
  const auto dir = std::filesystem::temp_directory_path() / "capref_skeleton_test";
  for (int trial = 0; trial < 20; ++trial) {
    const SkeletonModel sk = trial == 0 ? default_skeleton() : random_skeleton(rng, 12);
    save_skeleton(dir / "sk.json", sk);
    const SkeletonModel back = load_skeleton(dir / "sk.json");
    EXPECT_TRUE(back == sk);
  }
  std::filesystem::remove_all(dir);
}

TEST(SkeletonFile, ErrorsCarryContext) {
  json j = skeleton_to_json(default_skeleton());
  j["format"] = "skeleton/2";
  EXPECT_THROW(skeleton_from_json(j), UnsupportedVersion);
  j = skeleton_to_json(default_skeleton());
  j["joints"][3].erase("offset");
  try {
    skeleton_from_json(j);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("joints[3]"), std::string::npos);
  }
}
