#include "oracles.hpp"

#include <capref/pipeline.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <random>

using namespace capref;
namespace fs = std::filesystem;

namespace {

MotionMap random_motion(std::mt19937_64& rng, const SkeletonModel& sk, int frames) {
  std::vector<SkeletalPose> poses;
  for (int t = 0; t < frames; ++t) {
    SkeletalPose p = capref::testing::random_pose(rng, sk, 0.05);
    p.root_trans = Vec3(0.1 * t, 1.0, 0.0);
    poses.push_back(p);
  }
  return build_motion_map(poses, sk);
}

MotionMap shifted(MotionMap m, const Vec3& d) {
  for (Eigen::Index t = 0; t < m.translations.rows(); ++t) m.translations.row(t) += d.transpose();
  return m;
}

double torso_length(const SkeletonModel& sk, const MotionMap& m, int t) {
  const auto j = forward_kinematics(sk, extract_poses(m, sk)[t]);
  return (j[torso_reference_joint(sk)] - j[0]).norm();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::path(::testing::TempDir()) / ("capref_" + name);
  fs::remove_all(d);
  return d;
}

PipelineConfig toy_config(const fs::path& out) {
  PipelineConfig c;
  c.out = out;
  c.seed = 3;
  c.scene.skeleton = "toy";
  c.scene.frames = 20;
  c.scene.views = 2;
  c.scene.silhouette_points = 16;
  c.train.epochs = 3;
  c.train.decay_final_epochs = 1;
  c.window = 16;
  c.stride = 4;
  c.fit.restarts = 2;
  c.fit.lm.max_iterations = 20;
  c.refine.lm.max_iterations = 10;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CAPREF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// ------------------------------------------------------------------ metrics

TEST(Metrics, IdenticalMotionIsPerfect) {
  std::mt19937_64 rng(1);
  const SkeletonModel sk = default_skeleton();
  const MotionMap m = random_motion(rng, sk, 5);
  EXPECT_NEAR(mpjpe(m, m, sk), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(pck(m, m, sk, 0.5), 100.0);
  EXPECT_DOUBLE_EQ(pck(m, m, sk, 0.3), 100.0);
}

TEST(Metrics, TenMillimetreShift) {
  std::mt19937_64 rng(2);
  const SkeletonModel sk = default_skeleton();
  const MotionMap gt = random_motion(rng, sk, 4);
  const MotionMap pred = shifted(gt, Vec3(0.0, 0.0, 0.01));
  EXPECT_NEAR(mpjpe(pred, gt, sk), 10.0, 1e-9);
  for (double e : per_frame_mpjpe(pred, gt, sk)) EXPECT_NEAR(e, 10.0, 1e-9);
  EXPECT_DOUBLE_EQ(pck(pred, gt, sk, 0.5), 100.0);
}

TEST(Metrics, ShiftOfTwoTorsoLengthsFailsPck) {
  std::mt19937_64 rng(3);
  const SkeletonModel sk = default_skeleton();
  const MotionMap gt = random_motion(rng, sk, 3);
  double longest = 0.0;
  for (int t = 0; t < gt.frames(); ++t) longest = std::max(longest, torso_length(sk, gt, t));
  const MotionMap pred = shifted(gt, Vec3(2.0 * longest, 0.0, 0.0));
  EXPECT_DOUBLE_EQ(pck(pred, gt, sk, 0.5), 0.0);
  EXPECT_NEAR(mpjpe(pred, gt, sk), 2000.0 * longest, 1e-9);
}

TEST(Metrics, TorsoReferenceJoint) {
  const SkeletonModel sk = default_skeleton();
  EXPECT_EQ(sk.joint(torso_reference_joint(sk)).name, "thorax");
  const SkeletonModel toy = toy_skeleton();
  EXPECT_EQ(toy.joint(torso_reference_joint(toy)).name, "upper");
}

TEST(Metrics, MatchesOracle) {
  std::mt19937_64 rng(4);
  const SkeletonModel sk = default_skeleton();
  const MotionMap gt = random_motion(rng, sk, 6);
  const MotionMap pred = random_motion(rng, sk, 6);
  const auto pg = extract_poses(gt, sk), pp = extract_poses(pred, sk);
  const int ref = torso_reference_joint(sk);
  double total = 0.0;
  long hits05 = 0, hits03 = 0, n = 0;
  std::vector<double> frame_err;
  for (int t = 0; t < gt.frames(); ++t) {
    const auto jg = capref::testing::fk_homogeneous(sk, pg[t]);
    const auto jp = capref::testing::fk_homogeneous(sk, pp[t]);
    const double torso = (jg[ref] - jg[0]).norm();
    double s = 0.0;
    for (std::size_t i = 0; i < jg.size(); ++i) {
      const double e = (jg[i] - jp[i]).norm();
      s += e;
      hits05 += e < 0.5 * torso;
      hits03 += e < 0.3 * torso;
      ++n;
    }
    frame_err.push_back(1000.0 * s / jg.size());
    total += s;
  }
  EXPECT_NEAR(mpjpe(pred, gt, sk), 1000.0 * total / n, 1e-8);
  const auto pf = per_frame_mpjpe(pred, gt, sk);
  ASSERT_EQ(pf.size(), frame_err.size());
  for (std::size_t t = 0; t < pf.size(); ++t) EXPECT_NEAR(pf[t], frame_err[t], 1e-8);
  EXPECT_NEAR(pck(pred, gt, sk, 0.5), 100.0 * hits05 / n, 1e-9);
  EXPECT_NEAR(pck(pred, gt, sk, 0.3), 100.0 * hits03 / n, 1e-9);
}

TEST(Metrics, RejectsMismatchedInputs) {
  std::mt19937_64 rng(5);
  const SkeletonModel sk = default_skeleton();
  const MotionMap a = random_motion(rng, sk, 4), b = random_motion(rng, sk, 5);
  EXPECT_THROW(mpjpe(a, b, sk), InvalidInput);
  EXPECT_THROW(mpjpe(a, a, toy_skeleton()), InvalidInput);
  EXPECT_THROW(pck(a, a, sk, 0.0), InvalidInput);
}

// ------------------------------------------------------------------- report

TEST(Report, JsonAndCsvLayout) {
  std::mt19937_64 rng(6);
  const SkeletonModel sk = toy_skeleton();
  const MotionMap gt = random_motion(rng, sk, 7);
  const EvalReport r = evaluate(gt, {{"init", shifted(gt, Vec3(0.02, 0, 0))}, {"refined", gt}}, sk);
  EXPECT_NEAR(r.at("init").mpjpe_mm, 20.0, 1e-9);
  EXPECT_THROW(r.at("hybrid"), InvalidInput);

  const json j = report_to_json(r);
  EXPECT_EQ(j.at("format"), "report/1");
  EXPECT_EQ(j.at("miou"), "n/a");
  EXPECT_EQ(j.at("stages").size(), 2u);
  EXPECT_EQ(j.at("stages")[0].at("per_frame_mpjpe_mm").size(), 7u);

  const std::string csv = errors_csv(r);
  EXPECT_EQ(csv.rfind("frame,stage,mpjpe_mm\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 7);
  EXPECT_NE(csv.find("6,refined,0\n"), std::string::npos);
}

// ------------------------------------------------------------------- config

TEST(Config, RoundTrip) {
  PipelineConfig c = toy_config("somewhere");
  c.refine.weights.lambda_t = 7.5;
  c.fit.weights = c.refine.weights;
  c.refine.flipflop_rounds = 3;
  c.skeleton = "sk.json";
  const json j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
}

TEST(Config, MissingFieldsTakeDefaults) {
  const PipelineConfig c = config_from_json(json{{"format", "pipeline/1"}, {"train", {{"epochs", 9}}}});
  EXPECT_EQ(c.train.epochs, 9);
  EXPECT_EQ(c.window, 32);
  EXPECT_EQ(c.scene.frames, 120);
  EXPECT_EQ(c.fit.restarts, 30);
  EXPECT_DOUBLE_EQ(c.refine.weights.lambda_t, 20.0);
  EXPECT_EQ(config_to_json(config_from_json(json{{"format", "pipeline/1"}})), config_to_json(PipelineConfig{}));
}

TEST(Config, Rejections) {
  EXPECT_THROW(config_from_json(json{{"format", "pipeline/2"}}), UnsupportedVersion);
  EXPECT_THROW(config_from_json(json{{"format", "pipeline/1"}, {"scen", json::object()}}), ParseError);
  EXPECT_THROW(config_from_json(json{{"format", "pipeline/1"}, {"scene", {{"frames", "many"}}}}), ParseError);
  EXPECT_THROW(config_from_json(json{{"format", "pipeline/1"}, {"scene", {{"frames", 1}}}}), InvalidInput);
  EXPECT_THROW(config_from_json(json{{"format", "pipeline/1"}, {"train", {{"skip", true}}}}), InvalidInput);
}

// ----------------------------------------------------------------- pipeline

TEST(Pipeline, ToyRunWritesEveryArtifactAndIsDeterministic) {
  const fs::path a = fresh_dir("run_a"), b = fresh_dir("run_b");
  const EvalReport r = run_pipeline(toy_config(a));
  for (const char* f : {"config.json", "init.motion.json", "sparse.motion.json", "hybridnet.ckpt.json",
                        "hybrid.motion.json", "refined.motion.json", "training.json", "refine.json", "report.json",
                        "errors.csv", "scene/gt.motion.json"})
    EXPECT_TRUE(fs::exists(a / f)) << f;
  EXPECT_EQ(r.stages.size(), 3u);

  run_pipeline(toy_config(b));
  EXPECT_EQ(io::read_text(a / "report.json"), io::read_text(b / "report.json"));

  // Evaluation depends on the artifacts alone.
  Pipeline(toy_config(a)).eval();
  EXPECT_EQ(io::read_text(a / "report.json"), io::read_text(b / "report.json"));
}

TEST(Pipeline, SkipTrainReusesCheckpoint) {
  const fs::path a = fresh_dir("train"), b = fresh_dir("skip");
  run_pipeline(toy_config(a));
  PipelineConfig c = toy_config(b);
  c.skip_train = true;
  c.checkpoint = a / "hybridnet.ckpt.json";
  run_pipeline(c);
  EXPECT_FALSE(fs::exists(b / "hybridnet.ckpt.json"));
  EXPECT_EQ(io::read_text(a / "report.json"), io::read_text(b / "report.json"));
}

TEST(Pipeline, SkeletonFileDrivesTheScene) {
  const fs::path d = fresh_dir("skfile");
  fs::create_directories(d);
  save_skeleton(d / "sk.json", toy_skeleton());
  PipelineConfig c = toy_config(d / "out");
  c.scene.skeleton = "default";
  c.skeleton = d / "sk.json";
  Pipeline p(c);
  p.synth();
  EXPECT_EQ(load_skeleton(d / "out/scene/skeleton.json").joint_count(), toy_skeleton().joint_count());
}

TEST(Pipeline, FailureMarksArtifactsPartial) {
  const fs::path d = fresh_dir("partial");
  PipelineConfig c = toy_config(d);
  c.skeleton = d / "missing.json";
  try {
    run_pipeline(c);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.json"), std::string::npos);
  }
  EXPECT_TRUE(fs::exists(d / "config.json.partial"));
  EXPECT_FALSE(fs::exists(d / "config.json"));
}

// ---------------------------------------------------------------------- CLI

TEST(Cli, ExitCodes) {
  const fs::path d = fresh_dir("cli");
  fs::create_directories(d);
  auto write_config = [&](const std::string& name, const json& j) {
    io::save(d / name, j);
    return (d / name).string();
  };
  json toy = config_to_json(toy_config(d / "ok"));

  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("run --flipflop-rounds many"), 2);
  EXPECT_EQ(run_cli("eval --out " + (d / "empty").string()), 2);

  json missing = toy;
  missing["paths"]["skeleton"] = (d / "missing.json").string();
  EXPECT_EQ(run_cli("run --config " + write_config("missing.json.cfg", missing)), 2);

  json typo = toy;
  typo["scene"]["frame"] = 3;
  EXPECT_EQ(run_cli("run --config " + write_config("typo.cfg", typo)), 2);

  json blind = toy;
  blind["scene"]["confidence_bias"] = -2.0;
  blind["paths"]["out"] = (d / "blind").string();
  EXPECT_EQ(run_cli("run --config " + write_config("blind.cfg", blind)), 1);

  EXPECT_EQ(run_cli("synth --config " + write_config("ok.cfg", toy)), 0);
  EXPECT_EQ(run_cli("fit --config " + (d / "ok.cfg").string() + " --out " + (d / "ok").string()), 0);
  EXPECT_TRUE(fs::exists(d / "ok" / "init.motion.json"));
}
