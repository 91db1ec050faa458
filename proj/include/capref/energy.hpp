#pragma once

// Motion energies (network prior, 2D reprojection, temporal, silhouette) as
// plain scalar functions, plus their least-squares residual form for LM.

#include <capref/camera.hpp>
#include <capref/error.hpp>
#include <capref/motion.hpp>
#include <capref/skeleton.hpp>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace capref {

struct EnergyWeights {
  double lambda_2d = 1.0;
  double lambda_t = 20.0;
  double lambda_s = 0.3;
  double conf_threshold = 0.8;

  void validate() const {
    if (!(lambda_2d >= 0) || !(lambda_t >= 0) || !(lambda_s >= 0)) throw InvalidInput("energy weights must be >= 0");
    if (!(conf_threshold >= 0 && conf_threshold <= 1)) throw InvalidInput("confidence threshold must lie in [0, 1]");
  }
};

using PoseSequence = std::vector<SkeletalPose>;

/// Frame-wise M(Q_t, t_t). Rows are renormalized first.
inline PoseSequence network_poses(const SkeletonModel& sk, const Eigen::MatrixXd& quats,
                                  const Eigen::MatrixXd& trans) {
  if (quats.cols() != 4 * sk.joint_count() || trans.rows() != quats.rows() || trans.cols() != 3)
    throw InvalidInput("network quaternions / translations do not match the skeleton and each other");
  const Eigen::MatrixXd q = normalize_quat_rows(quats);
  PoseSequence out;
  for (Eigen::Index t = 0; t < q.rows(); ++t) {
    QuatPose qp;
    for (int j = 0; j < sk.joint_count(); ++j)
      qp.quats.emplace_back(q(t, 4 * j), q(t, 4 * j + 1), q(t, 4 * j + 2), q(t, 4 * j + 3));
    out.push_back(quat_to_pose(sk, qp, trans.row(t).transpose()));
  }
  return out;
}

/// Per-entry weights of the stacked pose vector from per-joint weights: each
/// angle takes its joint's weight, root rotation and translation take joint 0's.
inline Eigen::VectorXd stacked_weights(const SkeletonModel& sk, const std::vector<double>& joint_weights) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(sk.param_count());
  if (joint_weights.empty()) return w;
  if (static_cast<int>(joint_weights.size()) != sk.joint_count())
    throw InvalidInput("joint weight vector must have one entry per joint");
  for (double v : joint_weights)
    if (!(v >= 0)) throw InvalidInput("joint weights must be >= 0");
  for (int d = 0; d < sk.dof_count(); ++d) w[d] = joint_weights[sk.joint_of_dof(d)];
  w.tail<6>().setConstant(joint_weights[0]);
  return w;
}

/// Sum over frames of the (weighted) squared pose-space distance to M(Q_t, t_t).
inline double energy_3d(const PoseSequence& seq, const Eigen::MatrixXd& net_quats, const Eigen::MatrixXd& trans,
                        const SkeletonModel& sk, const std::vector<double>& joint_weights = {}) {
  const PoseSequence target = network_poses(sk, net_quats, trans);
  if (target.size() != seq.size()) throw InvalidInput("energy_3d: sequence lengths differ");
  const Eigen::VectorXd w = stacked_weights(sk, joint_weights);
  double e = 0.0;
  for (std::size_t t = 0; t < seq.size(); ++t)
    e += (w.array() * (seq[t].stacked() - target[t].stacked()).array().square()).sum();
  return e;
}

/// Indices of keypoints at or above the confidence threshold.
inline std::vector<int> confident_joints(const FrameObservations& f, double threshold) {
  std::vector<int> c;
  for (Eigen::Index i = 0; i < f.conf.size(); ++i)
    if (f.conf[i] >= threshold) c.push_back(static_cast<int>(i));
  return c;
}

/// (1/T) sum_t (1/|C_t|) sum_{i in C_t} ||proj(J_i) - p_i||^2. Joints behind
/// the camera contribute nothing.
inline double energy_2d(const PoseSequence& seq, const ObservationSequence& obs, const Camera& cam,
                        const SkeletonModel& sk, double threshold) {
  if (obs.size() != seq.size()) throw InvalidInput("energy_2d: observation count differs from sequence length");
  double e = 0.0;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto c = confident_joints(obs[t], threshold);
    if (c.empty()) continue;
    const auto joints = forward_kinematics(sk, seq[t]);
    double f = 0.0;
    for (int i : c) {
      Vec2 p;
      if (try_project(cam, joints[i], p)) f += (p - obs[t].keypoints[i]).squaredNorm();
    }
    e += f / static_cast<double>(c.size());
  }
  return e / static_cast<double>(seq.size());
}

/// Sum of squared pose-space differences of adjacent frames.
inline double energy_temporal(const PoseSequence& seq) {
  if (seq.size() < 2) throw InvalidInput("temporal energy needs T >= 2");
  double e = 0.0;
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) e += (seq[t].stacked() - seq[t + 1].stacked()).squaredNorm();
  return e;
}

inline double energy_temporal(const Eigen::MatrixXd& net_quats, const Eigen::MatrixXd& trans, const SkeletonModel& sk) {
  return energy_temporal(network_poses(sk, net_quats, trans));
}

namespace detail {

inline int nearest(const std::vector<Vec2>& set, const Vec2& q) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < set.size(); ++k) {
    const double d = (set[k] - q).squaredNorm();
    if (d < bd) {
      bd = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

inline int model_point_count(std::size_t observed) { return std::max<int>(8, static_cast<int>(observed)); }

inline std::optional<std::vector<Vec2>> model_outline(const Camera& cam, const SkeletonModel& sk,
                                                      const SkeletalPose& pose, const CapsuleBody& body, int n) {
  try {
    return silhouette_points(cam, sk, pose, body, n);
  } catch (const EmptySilhouette&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Mean over frames of the symmetric Chamfer distance (both directions
/// averaged) between observed and model outline points. Frames with no
/// observed or no model outline contribute 0.
inline double energy_silhouette(const PoseSequence& seq, const ObservationSequence& obs, const Camera& cam,
                                const SkeletonModel& sk, const CapsuleBody& body) {
  if (obs.size() != seq.size()) throw InvalidInput("energy_silhouette: observation count differs from sequence length");
  double e = 0.0;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto& o = obs[t].silhouette;
    if (o.empty()) continue;
    const auto m = detail::model_outline(cam, sk, seq[t], body, detail::model_point_count(o.size()));
    if (!m) continue;
    double a = 0.0, b = 0.0;
    for (const auto& p : o) a += (p - (*m)[detail::nearest(*m, p)]).squaredNorm();
    for (const auto& p : *m) b += (p - o[detail::nearest(o, p)]).squaredNorm();
    e += 0.5 * (a / static_cast<double>(o.size()) + b / static_cast<double>(m->size()));
  }
  return e / static_cast<double>(seq.size());
}

/// How a frame's optimization variables map to its stacked pose.
enum class FrameVars {
  Translation,  // 3 vars: root translation; angles and root rotation fixed
  Full,         // dof + 6 vars: sigmoid-bounded angles, root rotation, translation
};

struct ViewData {
  const Camera* camera;
  const ObservationSequence* obs;
};

/// Weighted sum of the energies as one residual vector over all frames:
///   lambda_2d * E_2D (averaged over views) + E_3D + lambda_t * E_T + lambda_s * E_S
/// with E_3D against `anchor` and E_T over adjacent frame poses.
class MotionObjective {
 public:
  MotionObjective(const SkeletonModel& sk, int frames, FrameVars vars) : sk_(sk), frames_(frames), vars_(vars) {
    if (frames < 1) throw InvalidInput("objective needs at least one frame");
  }

  // Term configuration; a term with zero weight or no data is skipped.
  PoseSequence fixed;  // Translation mode: source of angles and root rotation
  std::vector<ViewData> views;
  double lambda_2d = 0.0;
  double threshold = 0.8;
  PoseSequence anchor;            // E_3D target; empty disables the term
  Eigen::VectorXd anchor_weight;  // stacked-size; empty means ones
  double lambda_t = 0.0;
  const Camera* sil_camera = nullptr;
  const ObservationSequence* sil_obs = nullptr;
  const CapsuleBody* body = nullptr;
  double lambda_s = 0.0;

  int frame_vars() const { return vars_ == FrameVars::Full ? sk_.param_count() : 3; }
  int var_count() const { return frames_ * frame_vars(); }

  Eigen::VectorXd encode(const PoseSequence& seq) const {
    check_config();
    if (static_cast<int>(seq.size()) != frames_) throw InvalidInput("pose sequence length differs from objective");
    const int nv = frame_vars(), ndof = sk_.dof_count();
    Eigen::VectorXd x(var_count());
    for (int t = 0; t < frames_; ++t) {
      if (vars_ == FrameVars::Translation) {
        x.segment<3>(t * nv) = seq[t].root_trans;
        continue;
      }
      Eigen::VectorXd s = seq[t].stacked();
      for (int d = 0; d < ndof; ++d) {
        const JointLimit l = sk_.dof_limit(d);
        const double p = std::clamp((s[d] - l.min) / (l.max - l.min), 1e-3, 1.0 - 1e-3);
        s[d] = std::log(p / (1.0 - p));
      }
      x.segment(t * nv, nv) = s;
    }
    return x;
  }

  SkeletalPose pose(const Eigen::VectorXd& x, int t) const {
    const int nv = frame_vars(), ndof = sk_.dof_count();
    if (vars_ == FrameVars::Translation) {
      SkeletalPose p = fixed[t];
      p.root_trans = x.segment<3>(t * nv);
      return p;
    }
    Eigen::VectorXd s = x.segment(t * nv, nv);
    for (int d = 0; d < ndof; ++d) {
      const JointLimit l = sk_.dof_limit(d);
      s[d] = l.min + (l.max - l.min) * sigmoid(s[d]);
    }
    return SkeletalPose::from_stacked(s);
  }

  PoseSequence decode(const Eigen::VectorXd& x) const {
    PoseSequence out;
    for (int t = 0; t < frames_; ++t) out.push_back(pose(x, t));
    return out;
  }

  Eigen::VectorXd residuals(const Eigen::VectorXd& x) const {
    const Layout lay = layout();
    Eigen::VectorXd r = Eigen::VectorXd::Zero(lay.rows);
    const PoseSequence seq = decode(x);
    const int np = sk_.param_count();
    for (int t = 0; t < frames_; ++t) {
      if (lay.use_2d) {
        const auto joints = forward_kinematics(sk_, seq[t]);
        for (std::size_t v = 0; v < views.size(); ++v) {
          const Block2d& b = lay.b2d[t * views.size() + v];
          for (std::size_t k = 0; k < b.joints.size(); ++k) {
            Vec2 p;
            if (try_project(*views[v].camera, joints[b.joints[k]], p))
              r.segment<2>(b.row + 2 * static_cast<Eigen::Index>(k)) =
                  b.scale * (p - (*views[v].obs)[t].keypoints[b.joints[k]]);
          }
        }
      }
      if (lay.use_3d)
        r.segment(lay.row_3d + t * np, np) = anchor_sqrt_.cwiseProduct(seq[t].stacked() - anchor[t].stacked());
      if (lay.use_t && t + 1 < frames_)
        r.segment(lay.row_t + t * np, np) = std::sqrt(lambda_t) * (seq[t].stacked() - seq[t + 1].stacked());
      if (lay.use_s) silhouette_block(lay.bs[t], seq[t], r, nullptr);
    }
    return r;
  }

  Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& x) const {
    const Layout lay = layout();
    const int np = sk_.param_count(), nv = frame_vars();
    std::vector<Eigen::Triplet<double>> trip;
    const PoseSequence seq = decode(x);
    for (int t = 0; t < frames_; ++t) {
      const Eigen::VectorXd chain = chain_diag(x, t);
      auto emit = [&](Eigen::Index row0, int frame, const Eigen::MatrixXd& ds) {
        const Eigen::VectorXd c = frame == t ? chain : chain_diag(x, frame);
        for (Eigen::Index r = 0; r < ds.rows(); ++r)
          for (int k = 0; k < nv; ++k) {
            const int s_col = vars_ == FrameVars::Full ? k : sk_.dof_count() + 3 + k;
            const double v = ds(r, s_col) * c[k];
            if (v != 0.0) trip.emplace_back(row0 + r, frame * nv + k, v);
          }
      };
      if (lay.use_2d) {
        const FkJacobian fk = forward_kinematics_jacobian(sk_, seq[t]);
        for (std::size_t v = 0; v < views.size(); ++v) {
          const Block2d& b = lay.b2d[t * views.size() + v];
          for (std::size_t k = 0; k < b.joints.size(); ++k) {
            Vec2 p;
            Eigen::Matrix<double, 2, 3> jp;
            if (!try_project(*views[v].camera, fk.position[b.joints[k]], p, &jp)) continue;
            emit(b.row + 2 * static_cast<Eigen::Index>(k), t,
                 b.scale * jp * fk.jacobian.middleRows(3 * b.joints[k], 3));
          }
        }
      }
      if (lay.use_3d) emit(lay.row_3d + t * np, t, anchor_sqrt_.asDiagonal().toDenseMatrix());
      if (lay.use_t && t + 1 < frames_) {
        const Eigen::MatrixXd id = std::sqrt(lambda_t) * Eigen::MatrixXd::Identity(np, np);
        emit(lay.row_t + t * np, t, id);
        emit(lay.row_t + t * np, t + 1, -id);
      }
      if (lay.use_s) {
        Eigen::MatrixXd ds;
        Eigen::VectorXd dummy = Eigen::VectorXd::Zero(lay.rows);
        silhouette_block(lay.bs[t], seq[t], dummy, &ds);
        if (ds.size()) emit(lay.bs[t].row, t, ds);
      }
    }
    Eigen::SparseMatrix<double> j(lay.rows, var_count());
    j.setFromTriplets(trip.begin(), trip.end());
    return j;
  }

  double energy(const Eigen::VectorXd& x) const { return residuals(x).squaredNorm(); }

 private:
  static double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

  struct Block2d {
    Eigen::Index row = 0;
    double scale = 0.0;
    std::vector<int> joints;
  };
  struct BlockS {
    Eigen::Index row = 0;
    int frame = 0;
    int n_obs = 0, n_model = 0;
    double scale_obs = 0.0, scale_model = 0.0;
  };
  struct Layout {
    Eigen::Index rows = 0, row_3d = 0, row_t = 0;
    bool use_2d = false, use_3d = false, use_t = false, use_s = false;
    std::vector<Block2d> b2d;
    std::vector<BlockS> bs;
  };

  void check_config() const {
    if (vars_ == FrameVars::Translation && static_cast<int>(fixed.size()) != frames_)
      throw InvalidInput("translation objective needs one fixed pose per frame");
    for (const auto& v : views)
      if (static_cast<int>(v.obs->size()) != frames_) throw InvalidInput("observation length differs from objective");
    if (!anchor.empty() && static_cast<int>(anchor.size()) != frames_)
      throw InvalidInput("anchor length differs from objective");
    if (lambda_s > 0 && sil_obs && static_cast<int>(sil_obs->size()) != frames_)
      throw InvalidInput("silhouette observation length differs from objective");
  }

  Layout layout() const {
    check_config();
    Layout lay;
    const int np = sk_.param_count();
    lay.use_2d = lambda_2d > 0 && !views.empty();
    if (lay.use_2d) {
      const double nviews = static_cast<double>(views.size());
      for (int t = 0; t < frames_; ++t)
        for (const auto& v : views) {
          Block2d b;
          b.row = lay.rows;
          b.joints = confident_joints((*v.obs)[t], threshold);
          if (!b.joints.empty())
            b.scale = std::sqrt(lambda_2d / (nviews * frames_ * static_cast<double>(b.joints.size())));
          lay.rows += 2 * static_cast<Eigen::Index>(b.joints.size());
          lay.b2d.push_back(std::move(b));
        }
    }
    lay.use_3d = !anchor.empty();
    if (lay.use_3d) {
      lay.row_3d = lay.rows;
      lay.rows += static_cast<Eigen::Index>(frames_) * np;
      anchor_sqrt_ = anchor_weight.size() ? Eigen::VectorXd(anchor_weight.cwiseSqrt()) : Eigen::VectorXd::Ones(np);
      if (anchor_sqrt_.size() != np) throw InvalidInput("anchor weight must have one entry per pose parameter");
    }
    lay.use_t = lambda_t > 0 && frames_ > 1;
    if (lay.use_t) {
      lay.row_t = lay.rows;
      lay.rows += static_cast<Eigen::Index>(frames_ - 1) * np;
    }
    lay.use_s = lambda_s > 0 && sil_camera && sil_obs && body;
    if (lay.use_s) {
      for (int t = 0; t < frames_; ++t) {
        BlockS b;
        b.row = lay.rows;
        b.frame = t;
        b.n_obs = static_cast<int>((*sil_obs)[t].silhouette.size());
        if (b.n_obs > 0) {
          b.n_model = detail::model_point_count(static_cast<std::size_t>(b.n_obs));
          b.scale_obs = std::sqrt(lambda_s * 0.5 / (frames_ * static_cast<double>(b.n_obs)));
          b.scale_model = std::sqrt(lambda_s * 0.5 / (frames_ * static_cast<double>(b.n_model)));
        }
        lay.rows += 2 * static_cast<Eigen::Index>(b.n_obs + b.n_model);
        lay.bs.push_back(b);
      }
    }
    return lay;
  }

  /// d(stacked pose)/d(frame vars), diagonal in variable order.
  Eigen::VectorXd chain_diag(const Eigen::VectorXd& x, int t) const {
    const int nv = frame_vars();
    Eigen::VectorXd c = Eigen::VectorXd::Ones(nv);
    if (vars_ == FrameVars::Full)
      for (int d = 0; d < sk_.dof_count(); ++d) {
        const JointLimit l = sk_.dof_limit(d);
        const double s = sigmoid(x[t * nv + d]);
        c[d] = (l.max - l.min) * s * (1.0 - s);
      }
    return c;
  }

  /// Fills the Chamfer residuals of one frame; with `ds`, also their
  /// derivative with respect to the stacked pose (central differences of the
  /// model outline, nearest-neighbour assignment held fixed).
  void silhouette_block(const BlockS& b, const SkeletalPose& pose, Eigen::VectorXd& r, Eigen::MatrixXd* ds) const {
    if (b.n_obs == 0) return;
    const auto& obs = (*sil_obs)[b.frame].silhouette;
    const auto model = detail::model_outline(*sil_camera, sk_, pose, *body, b.n_model);
    if (!model) return;
    std::vector<int> nn_obs(obs.size()), nn_model(model->size());
    for (std::size_t i = 0; i < obs.size(); ++i) nn_obs[i] = detail::nearest(*model, obs[i]);
    for (std::size_t j = 0; j < model->size(); ++j) nn_model[j] = detail::nearest(obs, (*model)[j]);
    const Eigen::Index row_m = b.row + 2 * b.n_obs;
    for (std::size_t i = 0; i < obs.size(); ++i)
      r.segment<2>(b.row + 2 * static_cast<Eigen::Index>(i)) = b.scale_obs * (obs[i] - (*model)[nn_obs[i]]);
    for (std::size_t j = 0; j < model->size(); ++j)
      r.segment<2>(row_m + 2 * static_cast<Eigen::Index>(j)) = b.scale_model * ((*model)[j] - obs[nn_model[j]]);
    if (!ds) return;

    const int np = sk_.param_count();
    *ds = Eigen::MatrixXd::Zero(2 * (b.n_obs + b.n_model), np);
    const Eigen::VectorXd s0 = pose.stacked();
    const int first = vars_ == FrameVars::Full ? 0 : sk_.dof_count() + 3;
    for (int k = first; k < np; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(s0[k]));
      Eigen::VectorXd sp = s0, sm = s0;
      sp[k] += h;
      sm[k] -= h;
      const auto mp = detail::model_outline(*sil_camera, sk_, SkeletalPose::from_stacked(sp), *body, b.n_model);
      const auto mm = detail::model_outline(*sil_camera, sk_, SkeletalPose::from_stacked(sm), *body, b.n_model);
      if (!mp || !mm) continue;
      for (std::size_t i = 0; i < obs.size(); ++i) {
        const Vec2 d = ((*mp)[nn_obs[i]] - (*mm)[nn_obs[i]]) / (2.0 * h);
        ds->block<2, 1>(2 * static_cast<Eigen::Index>(i), k) = -b.scale_obs * d;
      }
      for (std::size_t j = 0; j < model->size(); ++j) {
        const Vec2 d = ((*mp)[j] - (*mm)[j]) / (2.0 * h);
        ds->block<2, 1>(2 * (b.n_obs + static_cast<Eigen::Index>(j)), k) = b.scale_model * d;
      }
    }
  }

  const SkeletonModel& sk_;
  int frames_;
  FrameVars vars_;
  mutable Eigen::VectorXd anchor_sqrt_;
};

}  // namespace capref
