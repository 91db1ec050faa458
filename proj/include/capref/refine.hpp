#pragma once

// Keypoint fits (monocular and multi-view) and the two-stage refinement:
// translations first with poses held at the network output, then full poses.

#include <capref/energy.hpp>
#include <capref/lm.hpp>
#include <capref/motion.hpp>

#include <optional>
#include <random>
#include <vector>

namespace capref {

struct FitOptions {
  EnergyWeights weights;
  LmOptions lm;
  int restarts = 30;             // first-frame starting poses, the placed rest pose included
  double tracking_weight = 10.0;  // warm start: angle prior towards the previous frame

  void validate() const {
    weights.validate();
    lm.validate();
    if (restarts < 1) throw InvalidInput("fit needs at least one starting pose");
    if (!(tracking_weight >= 0)) throw InvalidInput("tracking weight must be >= 0");
  }
};

struct RefineOptions {
  EnergyWeights weights;
  LmOptions lm;
  int flipflop_rounds = 1;
  std::vector<double> joint_weights;  // E_3D per-joint weights; empty means uniform

  void validate() const {
    weights.validate();
    lm.validate();
    if (flipflop_rounds < 1) throw InvalidInput("flip-flop rounds must be >= 1");
  }
};

namespace detail {

/// Rest-pose joints used to estimate depth: the torso region and its direct children.
inline std::vector<int> torso_joints(const SkeletonModel& sk) {
  std::vector<int> out;
  for (int j = 0; j < sk.joint_count(); ++j) {
    const int p = sk.joint(j).parent;
    if (sk.region(j) == Region::Torso || (p >= 0 && sk.region(p) == Region::Torso)) out.push_back(j);
  }
  return out;
}

/// Root position that puts the rest pose's torso keypoints at the observed
/// 2D spread: depth from a least-squares scale fit, lateral position from
/// the keypoint centroid.
inline std::optional<Vec3> place_root(const Camera& cam, const FrameObservations& f, const SkeletonModel& sk,
                                      double threshold) {
  const auto rest = forward_kinematics(sk, SkeletalPose::rest(sk));
  std::vector<int> use;
  for (int j : torso_joints(sk))
    if (f.conf[j] >= threshold) use.push_back(j);
  if (use.size() < 2) use = confident_joints(f, threshold);
  if (use.size() < 2) return std::nullopt;

  Vec3 o_mean = Vec3::Zero();
  Vec2 p_mean = Vec2::Zero();
  for (int j : use) {
    o_mean += cam.rotation * rest[j];
    p_mean += f.keypoints[j];
  }
  o_mean /= static_cast<double>(use.size());
  p_mean /= static_cast<double>(use.size());
  double num = 0.0, den = 0.0;
  for (int j : use) {
    const Vec3 o = cam.rotation * rest[j] - o_mean;
    const Vec2 dp = f.keypoints[j] - p_mean;
    const Vec2 dox(cam.fx * o.x(), cam.fy * o.y());
    num += dox.squaredNorm();
    den += dp.dot(dox);
  }
  if (!(den > 0.0) || !(num > 0.0)) return std::nullopt;
  const double depth = num / den;
  const Vec3 centroid((p_mean.x() - cam.cx) / cam.fx * depth, (p_mean.y() - cam.cy) / cam.fy * depth, depth);
  const Vec3 root_cam = centroid - o_mean;
  return cam.rotation.transpose() * (root_cam - cam.translation);
}

/// LM from `start` under an angle prior towards `start` whose weight is
/// relaxed in steps down to `floor`. The prior keeps early steps away from the joint
/// limits, where the sigmoid parameterization would freeze an angle.
inline LmResult relaxed_solve(MotionObjective& f, const PoseSequence& start, const SkeletonModel& sk,
                              const LmOptions& lm, double floor = 0.0) {
  Eigen::VectorXd x = f.encode(start);
  LmResult r;
  std::vector<double> schedule;
  for (double w : {1e3, 1e2, 1e1, 1.0, 1e-1, 1e-2})
    if (w > floor) schedule.push_back(w);
  schedule.push_back(floor);
  for (double w : schedule) {
    if (w > 0) {
      f.anchor = start;
      f.anchor_weight = Eigen::VectorXd::Zero(sk.param_count());
      f.anchor_weight.head(sk.dof_count()).setConstant(w);
    } else {
      f.anchor.clear();
      f.anchor_weight.resize(0);
    }
    r = levenberg_marquardt([&](const Eigen::VectorXd& v) { return f.residuals(v); },
                            [&](const Eigen::VectorXd& v) { return f.jacobian(v); }, x, lm);
    x = r.x;
  }
  return r;
}

/// The placed rest pose followed by `count - 1` fixed pseudo-random poses:
/// root pitch and yaw perturbed, angles drawn from the middle of their ranges.
inline PoseSequence start_poses(const SkeletonModel& sk, const Vec3& root, int count) {
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PoseSequence out;
  for (int k = 0; k < count; ++k) {
    SkeletalPose p = SkeletalPose::rest(sk);
    p.root_trans = root;
    if (k > 0) {
      const double pitch = 0.5 * u(rng), yaw = 0.8 * u(rng);
      p.root_rot = matrix_to_axis_angle(axis_rotation(Axis::Y, yaw) * axis_rotation(Axis::X, pitch));
      for (int d = 0; d < sk.dof_count(); ++d) {
        const JointLimit l = sk.dof_limit(d);
        p.theta[d] = 0.5 * (l.min + l.max) + 0.3 * (l.max - l.min) * u(rng);
      }
    }
    out.push_back(p);
  }
  return out;
}

inline void check_views(const std::vector<ViewData>& views, const SkeletonModel& sk) {
  if (views.empty()) throw InvalidInput("fit needs at least one view");
  const std::size_t t_len = views[0].obs->size();
  if (t_len < 2) throw InvalidInput("fit needs T >= 2 frames");
  for (const auto& v : views) {
    v.camera->validate();
    if (v.obs->size() != t_len) throw InvalidInput("views disagree on the number of frames");
    for (const auto& f : *v.obs) {
      f.validate();
      if (static_cast<int>(f.keypoints.size()) != sk.joint_count())
        throw InvalidInput("observation keypoint count differs from the skeleton joint count");
    }
  }
}

inline MotionMap fit_views(const std::vector<ViewData>& views, const SkeletonModel& sk, const FitOptions& opts,
                           LmResult* report = nullptr) {
  opts.validate();
  check_views(views, sk);
  const int t_len = static_cast<int>(views[0].obs->size());
  const double thr = opts.weights.conf_threshold;

  bool any = false;
  for (const auto& v : views)
    for (const auto& f : *v.obs) any = any || !confident_joints(f, thr).empty();
  if (!any) throw Unfittable("no keypoint reaches the confidence threshold in any frame");

  std::vector<std::optional<Vec3>> roots(t_len);
  for (int t = 0; t < t_len; ++t) {
    for (const auto& v : views) {
      roots[t] = place_root(*v.camera, (*v.obs)[t], sk, thr);
      if (roots[t]) break;
    }
  }
  PoseSequence init(t_len, SkeletalPose::rest(sk));
  for (int t = 0; t < t_len; ++t) {
    int best = -1;
    for (int k = 0; k < t_len; ++k)
      if (roots[k] && (best < 0 || std::abs(k - t) < std::abs(best - t))) best = k;
    if (best < 0) throw Unfittable("no frame has enough confident keypoints to place the root");
    init[t].root_trans = *roots[best];
  }

  // Sequential warm start: each frame alone under the 2D term. A sweep's first
  // frame keeps the best of several relaxed solves; later frames start from
  // the previous solution shifted by the change in root placement, under a
  // tracking prior towards it. Forward and
  // backward sweeps run and each frame keeps the lower-cost solution.
  std::vector<std::vector<ObservationSequence>> frame_obs(t_len, std::vector<ObservationSequence>(views.size()));
  for (int t = 0; t < t_len; ++t)
    for (std::size_t v = 0; v < views.size(); ++v) frame_obs[t][v] = {(*views[v].obs)[t]};
  auto frame_objective = [&](int t) {
    MotionObjective f(sk, 1, FrameVars::Full);
    for (std::size_t v = 0; v < views.size(); ++v) f.views.push_back({views[v].camera, &frame_obs[t][v]});
    f.lambda_2d = opts.weights.lambda_2d;
    f.threshold = thr;
    return f;
  };
  auto sweep = [&](bool forward, std::vector<double>& cost) {
    PoseSequence out(t_len);
    cost.assign(t_len, INFINITY);
    for (int k = 0; k < t_len; ++k) {
      const int t = forward ? k : t_len - 1 - k;
      MotionObjective f = frame_objective(t);
      if (k == 0) {
        for (const SkeletalPose& p : start_poses(sk, init[t].root_trans, opts.restarts)) {
          const LmResult r = relaxed_solve(f, {p}, sk, opts.lm);
          if (r.final_cost < cost[t]) {
            cost[t] = r.final_cost;
            out[t] = f.pose(r.x, 0);
          }
        }
        continue;
      }
      const int prev = forward ? t - 1 : t + 1;
      SkeletalPose start = out[prev];
      start.root_trans += init[t].root_trans - init[prev].root_trans;
      const LmResult r = relaxed_solve(f, {start}, sk, opts.lm, opts.tracking_weight);
      cost[t] = r.final_cost;
      out[t] = f.pose(r.x, 0);
    }
    return out;
  };
  std::vector<double> cost_fwd, cost_bwd;
  const PoseSequence fwd = sweep(true, cost_fwd), bwd = sweep(false, cost_bwd);
  for (int t = 0; t < t_len; ++t) init[t] = cost_bwd[t] < cost_fwd[t] ? bwd[t] : fwd[t];

  MotionObjective obj(sk, t_len, FrameVars::Full);
  obj.views = views;
  obj.lambda_2d = opts.weights.lambda_2d;
  obj.threshold = thr;
  obj.lambda_t = opts.weights.lambda_t;
  const LmResult lm = levenberg_marquardt([&](const Eigen::VectorXd& x) { return obj.residuals(x); },
                                          [&](const Eigen::VectorXd& x) { return obj.jacobian(x); },
                                          obj.encode(init), opts.lm);
  if (report) *report = lm;

  Eigen::MatrixXd conf = Eigen::MatrixXd::Zero(t_len, sk.joint_count());
  for (const auto& v : views)
    for (int t = 0; t < t_len; ++t) conf.row(t) += (*v.obs)[t].conf.transpose();
  conf /= static_cast<double>(views.size());
  return build_motion_map(obj.decode(lm.x), sk, conf);
}

}  // namespace detail

/// Monocular keypoint fit under E_2D + lambda_t E_T, starting from the rest
/// pose. Output confidences are the observation confidences.
inline MotionMap initial_fit(const ObservationSequence& obs, const Camera& cam, const SkeletonModel& sk,
                             const FitOptions& opts = {}) {
  return detail::fit_views({ViewData{&cam, &obs}}, sk, opts);
}

/// Same as initial_fit with the 2D term averaged over views. Output
/// confidences are the per-view mean.
inline MotionMap sparse_view_fit(const std::vector<ObservationSequence>& obs, const std::vector<Camera>& cams,
                                 const SkeletonModel& sk, const FitOptions& opts = {}) {
  if (obs.size() != cams.size()) throw InvalidInput("one observation sequence per camera is required");
  std::vector<ViewData> views;
  for (std::size_t v = 0; v < obs.size(); ++v) views.push_back({&cams[v], &obs[v]});
  return detail::fit_views(views, sk, opts);
}

struct RefineResult {
  MotionMap motion;
  PoseSequence poses;
  Eigen::MatrixXd stage1_translations;  // T x 3, from the last round
  double stage1_e2d_before = 0.0;       // lambda_2d E_2D + lambda_t E_T, first round
  double stage1_e2d_after = 0.0;
  double total_before = 0.0;  // stage-2 objective at the init motion
  double total_after = 0.0;
  std::vector<LmResult> lm;
};

/// Stage 1 solves all translations with angles fixed at M(Q_t, .) under
/// lambda_2d E_2D + lambda_t E_T. Stage 2 solves full poses under
/// E_3D + lambda_2d E_2D + lambda_t E_T + lambda_s E_S, with the E_3D anchor at
/// M(Q_t, stage-1 translation) and angles bounded by a sigmoid.
inline RefineResult refine(const MotionMap& init, const Eigen::MatrixXd& net_quats, const ObservationSequence& obs,
                           const Camera& cam, const SkeletonModel& sk, const CapsuleBody& body,
                           const RefineOptions& opts = {}) {
  opts.validate();
  init.validate();
  cam.validate();
  body.validate(sk);
  const int t_len = init.frames();
  if (init.joints() != sk.joint_count()) throw InvalidInput("init motion joint count differs from the skeleton");
  if (net_quats.rows() != t_len || net_quats.cols() != 4 * sk.joint_count())
    throw InvalidInput("network output must be T x 4N_J matching the init motion");
  if (static_cast<int>(obs.size()) != t_len) throw InvalidInput("observation length differs from the init motion");

  const EnergyWeights& w = opts.weights;
  const std::vector<ViewData> views = {{&cam, &obs}};
  const Eigen::VectorXd anchor_w = stacked_weights(sk, opts.joint_weights);
  const PoseSequence init_poses = extract_poses(init, sk);

  RefineResult res;
  PoseSequence current = network_poses(sk, net_quats, init.translations);
  Eigen::MatrixXd trans = init.translations;
  for (int round = 0; round < opts.flipflop_rounds; ++round) {
    MotionObjective s1(sk, t_len, FrameVars::Translation);
    s1.fixed = current;
    s1.views = views;
    s1.lambda_2d = w.lambda_2d;
    s1.threshold = w.conf_threshold;
    s1.lambda_t = w.lambda_t;
    for (int t = 0; t < t_len; ++t) s1.fixed[t].root_trans = trans.row(t).transpose();
    const LmResult r1 = levenberg_marquardt([&](const Eigen::VectorXd& x) { return s1.residuals(x); },
                                            [&](const Eigen::VectorXd& x) { return s1.jacobian(x); },
                                            s1.encode(s1.fixed), opts.lm);
    if (round == 0) {
      res.stage1_e2d_before = r1.initial_cost;
      res.stage1_e2d_after = r1.final_cost;
    }
    res.lm.push_back(r1);
    for (int t = 0; t < t_len; ++t) trans.row(t) = r1.x.segment<3>(3 * t).transpose();
    res.stage1_translations = trans;

    MotionObjective s2(sk, t_len, FrameVars::Full);
    s2.views = views;
    s2.lambda_2d = w.lambda_2d;
    s2.threshold = w.conf_threshold;
    s2.anchor = network_poses(sk, net_quats, trans);
    s2.anchor_weight = anchor_w;
    s2.lambda_t = w.lambda_t;
    s2.sil_camera = &cam;
    s2.sil_obs = &obs;
    s2.body = &body;
    s2.lambda_s = w.lambda_s;

    // Start from whichever candidate the stage-2 energy prefers.
    std::vector<PoseSequence> starts = {s2.anchor};
    if (round == 0) starts.push_back(init_poses);
    else starts.push_back(current);
    Eigen::VectorXd x0;
    double best = INFINITY;
    for (const auto& s : starts) {
      const Eigen::VectorXd x = s2.encode(s);
      const double e = s2.energy(x);
      if (round == 0 && &s == &starts.back()) res.total_before = e;
      if (e < best) {
        best = e;
        x0 = x;
      }
    }
    const LmResult r2 = levenberg_marquardt([&](const Eigen::VectorXd& x) { return s2.residuals(x); },
                                            [&](const Eigen::VectorXd& x) { return s2.jacobian(x); }, x0, opts.lm);
    res.lm.push_back(r2);
    res.total_after = r2.final_cost;
    current = s2.decode(r2.x);
    for (int t = 0; t < t_len; ++t) trans.row(t) = current[t].root_trans.transpose();
  }
  res.poses = current;
  res.motion = build_motion_map(current, sk, init.conf);
  return res;
}

}  // namespace capref
