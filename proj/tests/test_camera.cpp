#include "oracles.hpp"

#include <capref/camera.hpp>
#include <capref/json_io.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace capref;

namespace {

SkeletonModel single_bone() {
  std::vector<Joint> j;
  j.push_back({"root", -1, Vec3::Zero(), {}, {}});
  j.push_back({"tip", 0, {0, 1, 0}, {}, {}});
  return SkeletonModel(std::move(j), {Region::Torso, Region::Torso});
}

double segment_distance(const Vec2& q, const Vec2& a, const Vec2& b) {
  // Brute force: dense sampling of the segment.
  double best = 1e300;
  for (int k = 0; k <= 20000; ++k) best = std::min(best, (q - (a + (b - a) * (k / 20000.0))).norm());
  return best;
}

}  // namespace

TEST(Project, OpticalAxisMapsToPrincipalPoint) {
  Camera c;
  c.cx = 321.5;
  c.cy = 210.25;
  for (double z : {0.1, 1.0, 37.0}) {
    const Vec2 p = project(c, Vec3(0, 0, z));
    EXPECT_EQ(p, Vec2(321.5, 210.25));
  }
}

TEST(Project, HandArithmetic) {
  Camera c;
  c.fx = c.fy = 500;
  c.cx = c.cy = 250;
  const Vec2 p = project(c, Vec3(1, 0, 2));
  EXPECT_DOUBLE_EQ(p.x(), 500.0);
  EXPECT_DOUBLE_EQ(p.y(), 250.0);
}

TEST(Project, MatchesProjectionMatrix) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Camera c = Camera::look_at(Vec3(u(rng), u(rng), 5 + u(rng)), Vec3(u(rng), u(rng), u(rng)) * 0.3,
                                     800 + 100 * u(rng), 400 + 10 * u(rng), 300 + 10 * u(rng));
    Eigen::Matrix<double, 3, 4> rt;
    rt << c.rotation, c.translation;
    Mat3 k;
    k << c.fx, 0, c.cx, 0, c.fy, c.cy, 0, 0, 1;
    const Eigen::Matrix<double, 3, 4> proj = k * rt;
    const Vec3 x(u(rng), u(rng), u(rng));
    const Vec3 h = proj * x.homogeneous();
    const Vec2 expected = h.hnormalized();
    EXPECT_LE((project(c, x) - expected).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Project, BehindCameraThrows) {
  Camera c;
  EXPECT_THROW(project(c, Vec3(0, 0, 0)), BehindCamera);
  EXPECT_THROW(project(c, Vec3(1, 1, -2)), BehindCamera);
  Vec2 out;
  EXPECT_FALSE(try_project(c, Vec3(0, 0, -1), out));
}

TEST(Project, ScaleInvariantAlongRays) {
  Camera c;
  c.fx = 700;
  c.fy = 650;
  const Vec3 p(0.3, -0.2, 1.7);
  const Vec2 ref = project_camera_space(c, p);
  for (double lambda : {0.01, 0.5, 3.0, 1e4}) EXPECT_LE((project_camera_space(c, lambda * p) - ref).norm(), 1e-9);
}

TEST(Project, JacobianMatchesFiniteDifferences) {
  const Camera c = Camera::look_at({1, 2, 5}, {0, 1, 0}, 900, 500, 400);
  const Vec3 x(0.2, 0.9, -0.1);
  Vec2 p;
  Eigen::Matrix<double, 2, 3> j;
  ASSERT_TRUE(try_project(c, x, p, &j));
  for (int k = 0; k < 3; ++k) {
    Vec3 d = Vec3::Zero();
    d[k] = 1e-6;
    const Vec2 num = (project(c, x + d) - project(c, x - d)) / 2e-6;
    EXPECT_LE((j.col(k) - num).norm(), 1e-5);
  }
}

TEST(Camera, LookAtIsProperRotation) {
  const Camera c = Camera::look_at({3, 1.5, -2}, {0, 1, 0}, 1000, 500, 500);
  EXPECT_NO_THROW(c.validate());
  EXPECT_LE((c.center() - Vec3(3, 1.5, -2)).norm(), 1e-12);
  Camera bad = c;
  bad.rotation(0, 0) += 1e-3;
  EXPECT_THROW(bad.validate(), InvalidInput);
  bad = c;
  bad.rotation.row(0) *= -1;
  EXPECT_THROW(bad.validate(), InvalidInput);
  bad = c;
  bad.fx = 0;
  EXPECT_THROW(bad.validate(), InvalidInput);
}

TEST(CameraFile, RoundTripAndVersion) {
  const auto path = std::filesystem::temp_directory_path() / "capref_camera_test.json";
  const Camera c = Camera::look_at({0.123456789, 1.5, 4.0}, {0, 1, 0}, 987.654321, 501.5, 499.25);
  save_camera(path, c);
  EXPECT_TRUE(load_camera(path) == c);
  json j = camera_to_json(c);
  j["format"] = "camera/7";
  EXPECT_THROW(camera_from_json(j), UnsupportedVersion);
  std::filesystem::remove(path);
}

TEST(Silhouette, SingleVerticalBoneLiesOnStadium) {
  const SkeletonModel sk = single_bone();
  const Camera cam = Camera::look_at({0, 0.5, 5}, {0, 0.5, 0}, 1000, 500, 500);
  const CapsuleBody body{{0.08}};
  const auto pts = silhouette_points(cam, sk, SkeletalPose::rest(sk), body, 40);
  ASSERT_EQ(pts.size(), 40u);
  const Vec2 a = project(cam, Vec3(0, 0, 0));
  const Vec2 b = project(cam, Vec3(0, 1, 0));
  const double rho = 0.08 * 1000 / 5.0;
  for (const auto& q : pts) {
    const double d = segment_distance(q, a, b);
    EXPECT_LE(d, rho + 1.0);
    EXPECT_GE(d, rho - 1.0);
  }
}

TEST(Silhouette, ReturnsExactlyNPoints) {
  const SkeletonModel sk = default_skeleton();
  const Camera cam = Camera::look_at({0, 1.2, 4}, {0, 1, 0}, 1000, 500, 500);
  SkeletalPose p = SkeletalPose::rest(sk);
  p.root_trans = Vec3(0, 0.95, 0);
  EXPECT_EQ(silhouette_points(cam, sk, p, default_body(), 8).size(), 8u);
  EXPECT_EQ(silhouette_points(cam, sk, p, default_body(), 2000).size(), 2000u);
  EXPECT_THROW(silhouette_points(cam, sk, p, default_body(), 7), InvalidInput);
}

TEST(Silhouette, PointsStayOutsideEveryCapsule) {
  std::mt19937_64 rng(2);
  const SkeletonModel sk = default_skeleton();
  const Camera cam = Camera::look_at({0, 1.2, 4}, {0, 1, 0}, 1000, 500, 500);
  for (int trial = 0; trial < 30; ++trial) {
    SkeletalPose p = capref::testing::random_pose(rng, sk);
    p.root_trans = Vec3(0, 0.95, 0);
    const auto pts = silhouette_points(cam, sk, p, default_body(), 64);
    const auto caps = projected_capsules(cam, sk, forward_kinematics(sk, p), default_body());
    for (const auto& q : pts)
      for (const auto& c : caps) EXPECT_GE(c.distance_to_axis(q), c.radius - 1e-6);
  }
}

TEST(Silhouette, DoublingRadiiMovesPointsOutward) {
  const SkeletonModel sk = single_bone();
  const Camera cam = Camera::look_at({0.5, 0.5, 5}, {0, 0.5, 0}, 1000, 500, 500);
  const auto caps1 = projected_capsules(cam, sk, forward_kinematics(sk, SkeletalPose::rest(sk)), {{0.05}});
  const auto p1 = silhouette_points(cam, sk, SkeletalPose::rest(sk), {{0.05}}, 32);
  const auto p2 = silhouette_points(cam, sk, SkeletalPose::rest(sk), {{0.10}}, 32);
  for (std::size_t k = 0; k < p1.size(); ++k)
    EXPECT_GE(caps1[0].distance_to_axis(p2[k]), caps1[0].distance_to_axis(p1[k]));
}

TEST(Silhouette, BehindCameraIsEmpty) {
  const SkeletonModel sk = single_bone();
  const Camera cam = Camera::look_at({0, 0.5, 5}, {0, 0.5, 0}, 1000, 500, 500);
  SkeletalPose p = SkeletalPose::rest(sk);
  p.root_trans = Vec3(0, 0, 10);
  EXPECT_THROW(silhouette_points(cam, sk, p, {{0.05}}, 16), EmptySilhouette);
}
