#pragma once

// JSON file formats: skeleton/1, camera/1, motion/1, observations/1.
// Doubles are written with 17 significant digits, so every save/load pair is
// bit-exact.

#include <capref/camera.hpp>
#include <capref/error.hpp>
#include <capref/motion.hpp>
#include <capref/skeleton.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace capref {

using json = nlohmann::json;

namespace io {

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

/// Parse with line/column context in the error message.
inline json parse(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
}

inline json load(const std::filesystem::path& path) { return parse(read_text(path), path.string()); }

inline void save(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

inline const json& field(const json& j, const char* key, const std::string& ctx) {
  if (!j.is_object()) throw ParseError(ctx + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(ctx + ": missing field '" + key + "'");
  return *it;
}

template <class T>
T get(const json& j, const char* key, const std::string& ctx) {
  const json& v = field(j, key, ctx);
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ParseError(ctx + "." + key + ": " + e.what());
  }
}

inline void check_format(const json& j, const std::string& expected, const std::string& ctx) {
  const std::string fmt = get<std::string>(j, "format", ctx);
  if (fmt != expected) throw UnsupportedVersion(ctx + ": unsupported format '" + fmt + "', expected '" + expected + "'");
}

inline json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd json_vec(const json& j, Eigen::Index expected, const std::string& ctx) {
  if (!j.is_array()) throw ParseError(ctx + ": expected an array");
  if (expected >= 0 && static_cast<Eigen::Index>(j.size()) != expected)
    throw ParseError(ctx + ": expected " + std::to_string(expected) + " numbers, got " + std::to_string(j.size()));
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(ctx + "[" + std::to_string(i) + "]: expected a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

/// Row-major flattening.
inline json mat_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  return a;
}

inline Eigen::MatrixXd json_mat(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& ctx) {
  const Eigen::VectorXd v = json_vec(j, rows * cols, ctx);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[r * cols + c];
  return m;
}

inline json points_json(const std::vector<Vec2>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back({p.x(), p.y()});
  return a;
}

inline std::vector<Vec2> json_points(const json& j, const std::string& ctx) {
  if (!j.is_array()) throw ParseError(ctx + ": expected an array of points");
  std::vector<Vec2> pts;
  pts.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) pts.push_back(json_vec(j[i], 2, ctx + "[" + std::to_string(i) + "]"));
  return pts;
}

}  // namespace io

// ---------------------------------------------------------------- skeleton/1

inline json skeleton_to_json(const SkeletonModel& sk, const CapsuleBody* body = nullptr) {
  json joints = json::array();
  for (const Joint& jt : sk.joints()) {
    json dof = json::array();
    for (Axis a : jt.dof) dof.push_back(std::string(1, "XYZ"[static_cast<int>(a)]));
    json lim = json::array();
    for (const auto& l : jt.limits) lim.push_back({l.min, l.max});
    joints.push_back({{"name", jt.name},
                      {"parent", jt.parent < 0 ? json(nullptr) : json(jt.parent)},
                      {"offset", {jt.offset.x(), jt.offset.y(), jt.offset.z()}},
                      {"dof", dof},
                      {"limits", lim}});
  }
  json regions = json::object();
  for (int r = 0; r < kRegionCount; ++r) regions[region_name(static_cast<Region>(r))] = json::array();
  for (int j = 0; j < sk.joint_count(); ++j) regions[region_name(sk.region(j))].push_back(j);
  json out = {{"format", "skeleton/1"}, {"joints", joints}, {"region_map", regions}};
  if (body) out["capsule_radii"] = body->radius;
  return out;
}

inline SkeletonModel skeleton_from_json(const json& j, const std::string& ctx = "skeleton",
                                        CapsuleBody* body = nullptr) {
  io::check_format(j, "skeleton/1", ctx);
  const json& arr = io::field(j, "joints", ctx);
  if (!arr.is_array()) throw ParseError(ctx + ".joints: expected an array");
  std::vector<Joint> joints;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string c = ctx + ".joints[" + std::to_string(i) + "]";
    Joint jt;
    jt.name = io::get<std::string>(arr[i], "name", c);
    const json& par = io::field(arr[i], "parent", c);
    jt.parent = par.is_null() ? -1 : io::get<int>(arr[i], "parent", c);
    jt.offset = io::json_vec(io::field(arr[i], "offset", c), 3, c + ".offset");
    for (const auto& a : io::get<std::vector<std::string>>(arr[i], "dof", c)) {
      if (a == "X") jt.dof.push_back(Axis::X);
      else if (a == "Y") jt.dof.push_back(Axis::Y);
      else if (a == "Z") jt.dof.push_back(Axis::Z);
      else throw ParseError(c + ".dof: unknown axis '" + a + "'");
    }
    const json& lim = io::field(arr[i], "limits", c);
    if (!lim.is_array()) throw ParseError(c + ".limits: expected an array");
    for (std::size_t k = 0; k < lim.size(); ++k) {
      const Eigen::VectorXd l = io::json_vec(lim[k], 2, c + ".limits[" + std::to_string(k) + "]");
      jt.limits.push_back({l[0], l[1]});
    }
    joints.push_back(std::move(jt));
  }
  std::vector<int> region(joints.size(), -1);
  const json& rm = io::field(j, "region_map", ctx);
  if (!rm.is_object()) throw ParseError(ctx + ".region_map: expected an object");
  int seen_regions = 0;
  for (int r = 0; r < kRegionCount; ++r) {
    const char* name = region_name(static_cast<Region>(r));
    auto it = rm.find(name);
    if (it == rm.end()) continue;
    ++seen_regions;
    for (const auto& idx : *it) {
      const int ji = idx.get<int>();
      if (ji < 0 || ji >= static_cast<int>(region.size()))
        throw ParseError(ctx + ".region_map." + name + ": joint index out of range");
      if (region[ji] != -1) throw InvalidInput(ctx + ": joint " + std::to_string(ji) + " assigned to two regions");
      region[ji] = r;
    }
  }
  if (static_cast<int>(rm.size()) != seen_regions)
    throw ParseError(ctx + ".region_map: only torso, left_arm, right_arm, left_leg, right_leg are allowed");
  std::vector<Region> regions;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (region[i] < 0) throw InvalidInput(ctx + ": joint " + std::to_string(i) + " has no region");
    regions.push_back(static_cast<Region>(region[i]));
  }
  SkeletonModel sk(std::move(joints), std::move(regions));
  if (body && j.contains("capsule_radii")) {
    body->radius = io::get<std::vector<double>>(j, "capsule_radii", ctx);
    body->validate(sk);
  }
  return sk;
}

inline void save_skeleton(const std::filesystem::path& path, const SkeletonModel& sk, const CapsuleBody* body = nullptr) {
  io::save(path, skeleton_to_json(sk, body));
}

inline SkeletonModel load_skeleton(const std::filesystem::path& path, CapsuleBody* body = nullptr) {
  return skeleton_from_json(io::load(path), path.string(), body);
}

// ------------------------------------------------------------------ camera/1

inline json camera_to_json(const Camera& c) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) rot.push_back(c.rotation(r, k));
  return {{"format", "camera/1"},
          {"fx", c.fx},
          {"fy", c.fy},
          {"cx", c.cx},
          {"cy", c.cy},
          {"rotation", rot},
          {"translation", {c.translation.x(), c.translation.y(), c.translation.z()}}};
}

inline Camera camera_from_json(const json& j, const std::string& ctx = "camera") {
  io::check_format(j, "camera/1", ctx);
  Camera c;
  c.fx = io::get<double>(j, "fx", ctx);
  c.fy = io::get<double>(j, "fy", ctx);
  c.cx = io::get<double>(j, "cx", ctx);
  c.cy = io::get<double>(j, "cy", ctx);
  c.rotation = io::json_mat(io::field(j, "rotation", ctx), 3, 3, ctx + ".rotation");
  c.translation = io::json_vec(io::field(j, "translation", ctx), 3, ctx + ".translation");
  c.validate();
  return c;
}

inline void save_camera(const std::filesystem::path& path, const Camera& c) { io::save(path, camera_to_json(c)); }
inline Camera load_camera(const std::filesystem::path& path) { return camera_from_json(io::load(path), path.string()); }

// ------------------------------------------------------------------ motion/1

inline json motion_to_json(const MotionMap& m) {
  return {{"format", "motion/1"},
          {"T", m.frames()},
          {"n_joints", m.joints()},
          {"quats", io::mat_json(m.quats)},
          {"conf", io::mat_json(m.conf)},
          {"translations", io::mat_json(m.translations)}};
}

inline MotionMap motion_from_json(const json& j, const std::string& ctx = "motion") {
  io::check_format(j, "motion/1", ctx);
  const int t_len = io::get<int>(j, "T", ctx);
  const int nj = io::get<int>(j, "n_joints", ctx);
  if (t_len < 0 || nj <= 0) throw ParseError(ctx + ": T and n_joints must be positive");
  MotionMap m;
  m.quats = io::json_mat(io::field(j, "quats", ctx), t_len, 4 * nj, ctx + ".quats");
  m.conf = io::json_mat(io::field(j, "conf", ctx), t_len, nj, ctx + ".conf");
  m.translations = io::json_mat(io::field(j, "translations", ctx), t_len, 3, ctx + ".translations");
  m.validate();
  return m;
}

inline void save_motion(const std::filesystem::path& path, const MotionMap& m) { io::save(path, motion_to_json(m)); }
inline MotionMap load_motion(const std::filesystem::path& path) { return motion_from_json(io::load(path), path.string()); }

// ------------------------------------------------------------ observations/1

inline json observations_to_json(const ObservationSequence& seq) {
  json frames = json::array();
  for (const auto& f : seq)
    frames.push_back({{"keypoints", io::points_json(f.keypoints)},
                      {"conf", io::vec_json(f.conf)},
                      {"silhouette", io::points_json(f.silhouette)}});
  return {{"format", "observations/1"}, {"frames", frames}};
}

inline ObservationSequence observations_from_json(const json& j, const std::string& ctx = "observations") {
  io::check_format(j, "observations/1", ctx);
  const json& arr = io::field(j, "frames", ctx);
  if (!arr.is_array()) throw ParseError(ctx + ".frames: expected an array");
  ObservationSequence seq;
  for (std::size_t t = 0; t < arr.size(); ++t) {
    const std::string c = ctx + ".frames[" + std::to_string(t) + "]";
    FrameObservations f;
    f.keypoints = io::json_points(io::field(arr[t], "keypoints", c), c + ".keypoints");
    f.conf = io::json_vec(io::field(arr[t], "conf", c), static_cast<Eigen::Index>(f.keypoints.size()), c + ".conf");
    f.silhouette = io::json_points(io::field(arr[t], "silhouette", c), c + ".silhouette");
    f.validate();
    seq.push_back(std::move(f));
  }
  return seq;
}

inline void save_observations(const std::filesystem::path& path, const ObservationSequence& s) {
  io::save(path, observations_to_json(s));
}
inline ObservationSequence load_observations(const std::filesystem::path& path) {
  return observations_from_json(io::load(path), path.string());
}

}  // namespace capref
