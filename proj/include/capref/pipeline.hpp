#pragma once

// End-to-end run: synthesize a scene, fit it, train the correction network,
// refine its output and evaluate every stage against the ground truth. Each
// stage reads and writes artifacts in one output directory, so the stages can
// also be run one at a time.

#include <capref/hybridnet.hpp>
#include <capref/json_io.hpp>
#include <capref/metrics.hpp>
#include <capref/refine.hpp>
#include <capref/synth.hpp>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace capref {

struct PipelineConfig {
  std::uint64_t seed = 42;  // overrides the scene and training seeds
  SceneConfig scene;
  TrainConfig train = [] {
    TrainConfig t;
    t.epochs = 200;
    return t;
  }();
  int window = 32;  // training window length, capped at the sequence length
  int stride = 8;
  bool skip_train = false;  // use `checkpoint` instead of training
  FitOptions fit;
  RefineOptions refine;
  std::filesystem::path out = "capref_run";
  std::filesystem::path skeleton;    // skeleton/1 file; empty means scene.skeleton
  std::filesystem::path checkpoint;  // empty means <out>/hybridnet.ckpt.json

  void validate() const {
    scene.validate();
    train.validate();
    fit.validate();
    refine.validate();
    if (window < 1 || stride < 1) throw InvalidInput("window and stride must be positive");
    if (out.empty()) throw InvalidInput("output path must not be empty");
    if (skip_train && checkpoint.empty()) throw InvalidInput("skipping training needs a checkpoint path");
  }

  SceneConfig scene_config() const {
    SceneConfig s = scene;
    s.seed = seed;
    return s;
  }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }

  std::filesystem::path checkpoint_path() const {
    return checkpoint.empty() ? out / "hybridnet.ckpt.json" : checkpoint;
  }
};

// ------------------------------------------------------------------- config

namespace detail {

/// Reads optional fields of one JSON object and rejects unknown keys.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
    if (!j.is_object()) throw ParseError(ctx_ + ": expected an object");
  }

  template <class T>
  void read(const char* key, T& value) {
    seen_.insert(key);
    if (j_.contains(key)) value = io::get<T>(j_, key, ctx_);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ParseError(ctx_ + ": unknown field '" + k + "'");
  }

 private:
  const json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

inline json lm_to_json(const LmOptions& o) {
  return {{"max_iterations", o.max_iterations}, {"initial_damping", o.initial_damping},
          {"damping_up", o.damping_up},         {"damping_down", o.damping_down},
          {"gradient_tolerance", o.gradient_tolerance}, {"step_tolerance", o.step_tolerance},
          {"cost_tolerance", o.cost_tolerance}};
}

inline void lm_from_json(const json& j, LmOptions& o, const std::string& ctx) {
  ObjectReader r(j, ctx);
  r.read("max_iterations", o.max_iterations);
  r.read("initial_damping", o.initial_damping);
  r.read("damping_up", o.damping_up);
  r.read("damping_down", o.damping_down);
  r.read("gradient_tolerance", o.gradient_tolerance);
  r.read("step_tolerance", o.step_tolerance);
  r.read("cost_tolerance", o.cost_tolerance);
  r.finish();
}

}  // namespace detail

inline json config_to_json(const PipelineConfig& c) {
  const SceneConfig& s = c.scene;
  const TrainConfig& t = c.train;
  const EnergyWeights& w = c.refine.weights;
  return {{"format", "pipeline/1"},
          {"seed", c.seed},
          {"paths", {{"out", c.out.string()}, {"skeleton", c.skeleton.string()}, {"checkpoint", c.checkpoint.string()}}},
          {"scene",
           {{"frames", s.frames},
            {"skeleton", s.skeleton},
            {"views", s.views},
            {"noise_px", s.noise_px},
            {"occlusion_rate", s.occlusion_rate},
            {"static_pose", s.static_pose},
            {"fps", s.fps},
            {"silhouette_points", s.silhouette_points},
            {"confidence_bias", s.confidence_bias}}},
          {"train",
           {{"epochs", t.epochs},
            {"batch", t.batch},
            {"lr_gen", t.lr_gen},
            {"lr_disc", t.lr_disc},
            {"decay", t.decay},
            {"decay_final_epochs", t.decay_final_epochs},
            {"use_adv", t.use_adv},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"eps", t.eps},
            {"window", c.window},
            {"stride", c.stride},
            {"skip", c.skip_train}}},
          {"weights",
           {{"lambda_2d", w.lambda_2d},
            {"lambda_t", w.lambda_t},
            {"lambda_s", w.lambda_s},
            {"conf_threshold", w.conf_threshold}}},
          {"fit",
           {{"restarts", c.fit.restarts}, {"tracking_weight", c.fit.tracking_weight}, {"lm", detail::lm_to_json(c.fit.lm)}}},
          {"refine", {{"flipflop_rounds", c.refine.flipflop_rounds}, {"lm", detail::lm_to_json(c.refine.lm)}}}};
}

/// Every field except "format" is optional and defaults to PipelineConfig{}.
/// The energy weights apply to both the fits and the refinement.
inline PipelineConfig config_from_json(const json& j, const std::string& ctx = "config") {
  io::check_format(j, "pipeline/1", ctx);
  PipelineConfig c;
  detail::ObjectReader top(j, ctx);
  std::string fmt;
  top.read("format", fmt);
  top.read("seed", c.seed);
  if (const json* p = top.child("paths")) {
    detail::ObjectReader r(*p, ctx + ".paths");
    std::string out = c.out.string(), sk, ck;
    r.read("out", out);
    r.read("skeleton", sk);
    r.read("checkpoint", ck);
    r.finish();
    c.out = out;
    c.skeleton = sk;
    c.checkpoint = ck;
  }
  if (const json* p = top.child("scene")) {
    detail::ObjectReader r(*p, ctx + ".scene");
    SceneConfig& s = c.scene;
    r.read("frames", s.frames);
    r.read("skeleton", s.skeleton);
    r.read("views", s.views);
    r.read("noise_px", s.noise_px);
    r.read("occlusion_rate", s.occlusion_rate);
    r.read("static_pose", s.static_pose);
    r.read("fps", s.fps);
    r.read("silhouette_points", s.silhouette_points);
    r.read("confidence_bias", s.confidence_bias);
    r.finish();
  }
  if (const json* p = top.child("train")) {
    detail::ObjectReader r(*p, ctx + ".train");
    TrainConfig& t = c.train;
    r.read("epochs", t.epochs);
    r.read("batch", t.batch);
    r.read("lr_gen", t.lr_gen);
    r.read("lr_disc", t.lr_disc);
    r.read("decay", t.decay);
    r.read("decay_final_epochs", t.decay_final_epochs);
    r.read("use_adv", t.use_adv);
    r.read("beta1", t.beta1);
    r.read("beta2", t.beta2);
    r.read("eps", t.eps);
    r.read("window", c.window);
    r.read("stride", c.stride);
    r.read("skip", c.skip_train);
    r.finish();
  }
  if (const json* p = top.child("weights")) {
    detail::ObjectReader r(*p, ctx + ".weights");
    EnergyWeights& w = c.refine.weights;
    r.read("lambda_2d", w.lambda_2d);
    r.read("lambda_t", w.lambda_t);
    r.read("lambda_s", w.lambda_s);
    r.read("conf_threshold", w.conf_threshold);
    r.finish();
  }
  c.fit.weights = c.refine.weights;
  if (const json* p = top.child("fit")) {
    detail::ObjectReader r(*p, ctx + ".fit");
    r.read("restarts", c.fit.restarts);
    r.read("tracking_weight", c.fit.tracking_weight);
    if (const json* lm = r.child("lm")) detail::lm_from_json(*lm, c.fit.lm, ctx + ".fit.lm");
    r.finish();
  }
  if (const json* p = top.child("refine")) {
    detail::ObjectReader r(*p, ctx + ".refine");
    r.read("flipflop_rounds", c.refine.flipflop_rounds);
    if (const json* lm = r.child("lm")) detail::lm_from_json(*lm, c.refine.lm, ctx + ".refine.lm");
    r.finish();
  }
  top.finish();
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw InvalidInput(ctx + ": " + e.what());
  }
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  return config_from_json(io::load(path), path.string());
}

// ------------------------------------------------------------------- report

struct StageMetrics {
  std::string stage;
  double mpjpe_mm = 0.0;
  double pck_05 = 0.0;  // percent
  double pck_03 = 0.0;
  std::vector<double> per_frame_mm;
};

struct EvalReport {
  std::vector<StageMetrics> stages;

  const StageMetrics& at(const std::string& stage) const {
    for (const auto& s : stages)
      if (s.stage == stage) return s;
    throw InvalidInput("report has no stage '" + stage + "'");
  }

  void validate() const {
    for (const auto& s : stages) {
      if (!(s.mpjpe_mm >= 0.0)) throw InvalidInput("MPJPE must be >= 0");
      for (double p : {s.pck_05, s.pck_03})
        if (!(p >= 0.0 && p <= 100.0)) throw InvalidInput("PCK must lie in [0, 100]");
    }
  }
};

inline EvalReport evaluate(const MotionMap& gt, const std::vector<std::pair<std::string, MotionMap>>& stages,
                           const SkeletonModel& sk) {
  EvalReport r;
  for (const auto& [label, m] : stages) {
    StageMetrics s;
    s.stage = label;
    s.per_frame_mm = per_frame_mpjpe(m, gt, sk);
    s.mpjpe_mm = mpjpe(m, gt, sk);
    s.pck_05 = pck(m, gt, sk, 0.5);
    s.pck_03 = pck(m, gt, sk, 0.3);
    r.stages.push_back(std::move(s));
  }
  r.validate();
  return r;
}

inline json report_to_json(const EvalReport& r) {
  json stages = json::array();
  for (const auto& s : r.stages)
    stages.push_back({{"stage", s.stage},
                      {"mpjpe_mm", s.mpjpe_mm},
                      {"pck_0.5", s.pck_05},
                      {"pck_0.3", s.pck_03},
                      {"per_frame_mpjpe_mm", s.per_frame_mm}});
  return {{"format", "report/1"}, {"miou", "n/a"}, {"stages", stages}};
}

inline std::string errors_csv(const EvalReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "frame,stage,mpjpe_mm\n";
  for (const auto& s : r.stages)
    for (std::size_t t = 0; t < s.per_frame_mm.size(); ++t) out << t << ',' << s.stage << ',' << s.per_frame_mm[t] << '\n';
  return out.str();
}

// ------------------------------------------------------------------- stages

/// File names inside the output directory.
namespace artifact {
inline constexpr const char* kScene = "scene";
inline constexpr const char* kInit = "init.motion.json";
inline constexpr const char* kSparse = "sparse.motion.json";
inline constexpr const char* kHybrid = "hybrid.motion.json";
inline constexpr const char* kRefined = "refined.motion.json";
inline constexpr const char* kTraining = "training.json";
inline constexpr const char* kRefineLog = "refine.json";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kCsv = "errors.csv";
inline constexpr const char* kConfig = "config.json";
}  // namespace artifact

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, std::ostream* log = nullptr) : cfg_(std::move(cfg)), log_(log) {
    cfg_.validate();
  }

  const PipelineConfig& config() const { return cfg_; }
  const std::vector<std::filesystem::path>& written() const { return written_; }

  void synth() {
    SyntheticScene s;
    if (cfg_.skeleton.empty()) {
      s = synth_generate(cfg_.scene_config());
    } else {
      CapsuleBody body;
      SkeletonModel sk = load_skeleton(cfg_.skeleton, &body);
      if (body.radius.empty()) body = CapsuleBody::uniform(sk, 0.06);
      s = synth_generate(cfg_.scene_config(), std::move(sk), std::move(body));
    }
    save_scene(path(artifact::kScene), s);
    note(artifact::kScene);
    scene_ = std::move(s);
  }

  void fit() {
    const SyntheticScene& s = scene();
    save(artifact::kInit, initial_fit(s.mono_obs, s.mono_camera, s.skeleton, cfg_.fit));
  }

  void sparse_fit() {
    const SyntheticScene& s = scene();
    save(artifact::kSparse, sparse_view_fit(s.sparse_obs, s.sparse_cameras, s.skeleton, cfg_.fit));
  }

  /// Pairs (initial fit, sparse-view fit) cut into windows; the unpaired
  /// reference is the scene's marker motion.
  void train() {
    const SyntheticScene& s = scene();
    const MotionMap init = load_motion(path(artifact::kInit));
    const MotionMap sparse = load_motion(path(artifact::kSparse));
    const int window = std::min(cfg_.window, init.frames());
    const std::vector<TrainSample> data = cut_windows({init, sparse}, window, cfg_.stride);
    TrainResult r = capref::train(data, {s.marker_ref}, HybridArch::for_skeleton(s.skeleton), cfg_.train_config());
    const auto ck = cfg_.checkpoint_path();
    save_checkpoint(ck, r.gen, r.disc);
    written_.push_back(ck);

    json hist = json::array();
    for (std::size_t e = 0; e < r.history.size(); ++e)
      hist.push_back({{"epoch", e + 1}, {"sv", r.history[e].sv}, {"adv", r.history[e].adv}, {"disc", r.history[e].disc}});
    io::save(path(artifact::kTraining), json{{"windows", data.size()}, {"window", window}, {"history", hist}});
    note(artifact::kTraining);
    if (log_)
      *log_ << "train: " << data.size() << " windows, final L_sv " << r.history.back().sv << ", L_adv "
            << r.history.back().adv << "\n";
  }

  void infer() {
    Checkpoint ck = load_checkpoint(cfg_.checkpoint_path());
    save(artifact::kHybrid, ck.gen.correct(load_motion(path(artifact::kInit))));
  }

  void refine() {
    const SyntheticScene& s = scene();
    const MotionMap init = load_motion(path(artifact::kInit));
    const MotionMap hybrid = load_motion(path(artifact::kHybrid));
    const RefineResult r = capref::refine(init, hybrid.quats, s.mono_obs, s.mono_camera, s.skeleton, s.body, cfg_.refine);
    save(artifact::kRefined, r.motion);
    json lm = json::array();
    for (const auto& l : r.lm)
      lm.push_back({{"iterations", l.iterations},
                    {"initial_cost", l.initial_cost},
                    {"final_cost", l.final_cost},
                    {"status", to_string(l.status)}});
    io::save(path(artifact::kRefineLog), json{{"stage1_e2d_before", r.stage1_e2d_before},
                                              {"stage1_e2d_after", r.stage1_e2d_after},
                                              {"total_before", r.total_before},
                                              {"total_after", r.total_after},
                                              {"lm", lm}});
    note(artifact::kRefineLog);
  }

  /// Metrics from the motion files alone.
  EvalReport eval() {
    const std::filesystem::path sd = path(artifact::kScene);
    const SkeletonModel sk = load_skeleton(sd / "skeleton.json");
    const MotionMap gt = load_motion(sd / "gt.motion.json");
    std::vector<std::pair<std::string, MotionMap>> stages;
    for (auto [label, file] : {std::pair{"init", artifact::kInit}, std::pair{"hybrid", artifact::kHybrid},
                               std::pair{"refined", artifact::kRefined}})
      stages.emplace_back(label, load_motion(path(file)));
    const EvalReport r = evaluate(gt, stages, sk);
    io::save(path(artifact::kReport), report_to_json(r));
    note(artifact::kReport);
    io::write_text(path(artifact::kCsv), errors_csv(r));
    note(artifact::kCsv);
    if (log_)
      for (const auto& s : r.stages)
        *log_ << "eval: " << s.stage << " MPJPE " << s.mpjpe_mm << " mm, PCK@0.5 " << s.pck_05 << " %\n";
    return r;
  }

  /// All stages in order. On failure every artifact written by this run is
  /// renamed with a ".partial" suffix and the error is rethrown.
  EvalReport run() {
    try {
      io::save(path(artifact::kConfig), config_to_json(cfg_));
      note(artifact::kConfig);
      step("synth", [&] { synth(); });
      step("fit", [&] { fit(); });
      step("sparse-fit", [&] { sparse_fit(); });
      if (!cfg_.skip_train) step("train", [&] { train(); });
      step("infer", [&] { infer(); });
      step("refine", [&] { refine(); });
      return eval();
    } catch (...) {
      for (const auto& p : written_) {
        std::error_code ec;
        std::filesystem::rename(p, p.string() + ".partial", ec);
      }
      throw;
    }
  }

 private:
  std::filesystem::path path(const char* name) const { return cfg_.out / name; }

  void note(const char* name) { written_.push_back(path(name)); }

  void save(const char* name, const MotionMap& m) {
    save_motion(path(name), m);
    note(name);
  }

  const SyntheticScene& scene() {
    if (!scene_) scene_ = load_scene(path(artifact::kScene));
    return *scene_;
  }

  template <class F>
  void step(const char* name, F&& f) {
    if (log_) *log_ << name << "...\n";
    f();
  }

  PipelineConfig cfg_;
  std::ostream* log_;
  std::optional<SyntheticScene> scene_;
  std::vector<std::filesystem::path> written_;
};

inline EvalReport run_pipeline(const PipelineConfig& cfg, std::ostream* log = nullptr) {
  return Pipeline(cfg, log).run();
}

}  // namespace capref
