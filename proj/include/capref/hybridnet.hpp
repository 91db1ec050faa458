#pragma once

// Motion-correction network: a global/local temporal encoder with region
// pooling and a GRU decoder (generator), plus a GRU motion discriminator.

#include <capref/json_io.hpp>
#include <capref/motion.hpp>
#include <capref/nn/layers.hpp>
#include <capref/skeleton.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace capref {

inline constexpr double kLambdaQuat = 1e-5;

struct HybridArch {
  int n_joints = 15;
  std::vector<Region> regions;  // one entry per joint
  int global_channels = 128;
  int local_channels = 16;
  int gru_hidden = 256;
  int decoder_hidden1 = 256;
  int decoder_hidden2 = 128;
  int disc_hidden = 128;
  int kernel = 7;
  double dropout = 0.1;

  static HybridArch for_skeleton(const SkeletonModel& sk) {
    HybridArch a;
    a.n_joints = sk.joint_count();
    a.regions = sk.regions();
    return a;
  }

  /// Narrow widths for gradient checks and quick tests.
  static HybridArch toy(const SkeletonModel& sk) {
    HybridArch a = for_skeleton(sk);
    a.global_channels = 6;
    a.local_channels = 3;
    a.gru_hidden = 5;
    a.decoder_hidden1 = 6;
    a.decoder_hidden2 = 5;
    a.disc_hidden = 4;
    return a;
  }

  void validate() const {
    if (n_joints < 1) throw InvalidInput("network needs at least one joint");
    if (static_cast<int>(regions.size()) != n_joints) throw InvalidInput("region map size must equal joint count");
    if (std::min({global_channels, local_channels, gru_hidden, decoder_hidden1, decoder_hidden2, disc_hidden}) < 1)
      throw InvalidInput("layer widths must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw InvalidInput("kernel width must be odd");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidInput("dropout rate must lie in [0, 1)");
  }

  int input_channels() const { return 5 * n_joints; }
  int output_channels() const { return 4 * n_joints; }
  int latent_channels() const { return global_channels + kRegionCount * local_channels; }

  bool operator==(const HybridArch&) const = default;
};

/// Network input layout: [4N quaternion channels, N confidence channels].
inline nn::Mat encode_input(const MotionMap& m) {
  nn::Mat x(m.frames(), 5 * m.joints());
  x << m.quats, m.conf;
  return x;
}

class Generator {
 public:
  Generator() = default;
  explicit Generator(HybridArch arch) : arch_(std::move(arch)) {
    arch_.validate();
    const int c_in = arch_.input_channels(), cg = arch_.global_channels, cl = arch_.local_channels;
    global_conv_ = {nn::Conv1d("global.conv0", c_in, cg, arch_.kernel), nn::Conv1d("global.conv1", cg, cg, arch_.kernel),
                    nn::Conv1d("global.conv2", cg, cg, arch_.kernel)};
    global_bn_ = {nn::BatchNorm("global.bn0", cg), nn::BatchNorm("global.bn1", cg)};
    for (int j = 0; j < arch_.n_joints; ++j)
      local_conv_.emplace_back("local" + std::to_string(j) + ".conv", 5, cl, arch_.kernel);
    gru_ = nn::Gru("decoder.gru", arch_.latent_channels(), arch_.gru_hidden);
    dropout_ = nn::Dropout(arch_.dropout);
    fc_ = {nn::Linear("decoder.fc0", arch_.gru_hidden, arch_.decoder_hidden1),
           nn::Linear("decoder.fc1", arch_.decoder_hidden1, arch_.decoder_hidden2),
           nn::Linear("decoder.fc2", arch_.decoder_hidden2, arch_.output_channels())};
  }

  void init(std::mt19937_64& rng) {
    for (auto& c : global_conv_) c.init(rng);
    for (auto& c : local_conv_) c.init(rng);
    gru_.init(rng);
    for (auto& f : fc_) f.init(rng);
  }

  const HybridArch& arch() const { return arch_; }

  /// x: T x 5N per sequence; returns T x 4N per sequence.
  nn::Batch forward(const nn::Batch& x, nn::Mode mode, std::mt19937_64* rng = nullptr) {
    const int n = arch_.n_joints, cg = arch_.global_channels, cl = arch_.local_channels;
    for (const auto& m : x) {
      if (m.rows() < arch_.kernel)
        throw SequenceTooShort("sequence has " + std::to_string(m.rows()) + " frames, the encoder needs at least " +
                               std::to_string(arch_.kernel));
      if (m.cols() != arch_.input_channels())
        throw InvalidInput("network input has " + std::to_string(m.cols()) + " channels, expected " +
                           std::to_string(arch_.input_channels()));
    }
    nn::Batch g = x;
    for (int l = 0; l < 3; ++l) {
      g = global_conv_[l].forward(g);
      if (l < 2) g = global_elu_[l].forward(global_bn_[l].forward(g, mode));
    }
    std::vector<nn::Batch> local(n);
    for (int j = 0; j < n; ++j) {
      nn::Batch xj(x.size());
      for (std::size_t b = 0; b < x.size(); ++b) {
        xj[b].resize(x[b].rows(), 5);
        xj[b] << x[b].middleCols(4 * j, 4), x[b].col(4 * n + j);
      }
      local[j] = local_conv_[j].forward(xj);
    }
    nn::Batch fused(x.size());
    for (std::size_t b = 0; b < x.size(); ++b) {
      fused[b] = nn::Mat::Zero(x[b].rows(), arch_.latent_channels());
      fused[b].leftCols(cg) = g[b];
      for (int j = 0; j < n; ++j) fused[b].middleCols(cg + region_index(j) * cl, cl) += local[j][b];
    }
    nn::Batch h = dropout_.forward(gru_.forward(fused), mode, rng);
    h = fc_elu_[0].forward(fc_[0].forward(h));
    h = fc_elu_[1].forward(fc_[1].forward(h));
    return fc_[2].forward(h);
  }

  /// Accumulates parameter gradients for d(loss)/d(output).
  void backward(const nn::Batch& dout) {
    const int n = arch_.n_joints, cg = arch_.global_channels, cl = arch_.local_channels;
    nn::Batch d = fc_[2].backward(dout);
    d = fc_[1].backward(fc_elu_[1].backward(d));
    d = fc_[0].backward(fc_elu_[0].backward(d));
    const nn::Batch dfused = gru_.backward(dropout_.backward(d));
    nn::Batch dg(dfused.size());
    for (std::size_t b = 0; b < dfused.size(); ++b) dg[b] = dfused[b].leftCols(cg);
    for (int l = 2; l >= 0; --l) {
      if (l < 2) dg = global_bn_[l].backward(global_elu_[l].backward(dg));
      dg = global_conv_[l].backward(dg);
    }
    for (int j = 0; j < n; ++j) {
      nn::Batch dl(dfused.size());
      for (std::size_t b = 0; b < dfused.size(); ++b) dl[b] = dfused[b].middleCols(cg + region_index(j) * cl, cl);
      local_conv_[j].backward(dl);
    }
  }

  nn::TensorList params() {
    nn::TensorList p;
    for (auto& c : global_conv_) c.collect(p);
    for (auto& bn : global_bn_) bn.collect(p);
    for (auto& c : local_conv_) c.collect(p);
    gru_.collect(p);
    for (auto& f : fc_) f.collect(p);
    return p;
  }

  nn::TensorList buffers() {
    nn::TensorList p;
    for (auto& bn : global_bn_) bn.collect_buffers(p);
    return p;
  }

  /// Eval-mode correction of a whole motion map. Conf and translations pass
  /// through; quaternions are renormalized.
  MotionMap correct(const MotionMap& m) {
    if (m.joints() != arch_.n_joints) throw InvalidInput("motion joint count does not match the network");
    const nn::Batch out = forward({encode_input(m)}, nn::Mode::Eval);
    MotionMap r = m;
    r.quats = normalize_quat_rows(out[0]);
    return r;
  }

 private:
  int region_index(int j) const { return static_cast<int>(arch_.regions[j]); }

  HybridArch arch_;
  std::array<nn::Conv1d, 3> global_conv_;
  std::array<nn::BatchNorm, 2> global_bn_;
  std::array<nn::Elu, 2> global_elu_;
  std::vector<nn::Conv1d> local_conv_;
  nn::Gru gru_;
  nn::Dropout dropout_;
  std::array<nn::Linear, 3> fc_;
  std::array<nn::Elu, 2> fc_elu_;
};

class Discriminator {
 public:
  Discriminator() = default;
  explicit Discriminator(const HybridArch& arch)
      : gru_("disc.gru", arch.output_channels(), arch.disc_hidden), head_("disc.head", arch.disc_hidden, 1) {}

  void init(std::mt19937_64& rng) {
    gru_.init(rng);
    head_.init(rng);
  }

  /// One probability per sequence.
  std::vector<double> forward(const nn::Batch& quats) {
    for (const auto& m : quats)
      if (m.rows() < 1) throw InvalidInput("discriminator needs at least one frame");
    const nn::Batch h = gru_.forward(quats);
    nn::Batch last(h.size());
    for (std::size_t b = 0; b < h.size(); ++b) last[b] = h[b].bottomRows(1);
    const nn::Batch logit = head_.forward(last);
    prob_.resize(h.size());
    for (std::size_t b = 0; b < h.size(); ++b) prob_[b] = nn::sigmoid(logit[b](0, 0));
    frames_.resize(h.size());
    for (std::size_t b = 0; b < h.size(); ++b) frames_[b] = h[b].rows();
    return prob_;
  }

  /// Accumulates parameter gradients; returns d(loss)/d(input).
  nn::Batch backward(const std::vector<double>& dprob) {
    nn::Batch dlogit(dprob.size());
    for (std::size_t b = 0; b < dprob.size(); ++b)
      dlogit[b] = nn::Mat::Constant(1, 1, dprob[b] * prob_[b] * (1.0 - prob_[b]));
    const nn::Batch dlast = head_.backward(dlogit);
    nn::Batch dh(dprob.size());
    for (std::size_t b = 0; b < dprob.size(); ++b) {
      dh[b] = nn::Mat::Zero(frames_[b], gru_.hidden());
      dh[b].bottomRows(1) = dlast[b];
    }
    return gru_.backward(dh);
  }

  nn::TensorList params() {
    nn::TensorList p;
    gru_.collect(p);
    head_.collect(p);
    return p;
  }

 private:
  nn::Gru gru_;
  nn::Linear head_;
  std::vector<double> prob_;
  std::vector<Eigen::Index> frames_;
};

/// Squared error to the reference plus the unit-norm penalty on every
/// predicted quaternion. Writes d(loss)/d(pred) when `grad` is given.
inline double loss_sv(const nn::Mat& pred, const nn::Mat& ref, nn::Mat* grad = nullptr) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols() || pred.cols() % 4 != 0)
    throw InvalidInput("loss_sv: prediction and reference shapes differ");
  const nn::Mat diff = pred - ref;
  double loss = diff.squaredNorm();
  if (grad) *grad = 2.0 * diff;
  for (Eigen::Index t = 0; t < pred.rows(); ++t)
    for (Eigen::Index c = 0; c < pred.cols(); c += 4) {
      const double nq = pred.row(t).segment<4>(c).norm();
      loss += kLambdaQuat * (nq - 1.0) * (nq - 1.0);
      if (grad && nq > 0.0) grad->row(t).segment<4>(c) += 2.0 * kLambdaQuat * (nq - 1.0) / nq * pred.row(t).segment<4>(c);
    }
  return loss;
}

inline double loss_adv(double d_fake) { return (d_fake - 1.0) * (d_fake - 1.0); }

inline double loss_disc(double d_real, double d_fake) { return (d_real - 1.0) * (d_real - 1.0) + d_fake * d_fake; }

struct TrainConfig {
  int epochs = 500;
  int batch = 32;
  double lr_gen = 1e-3;
  double lr_disc = 1e-2;
  double decay = 0.1;
  int decay_final_epochs = 100;
  std::uint64_t seed = 42;
  bool use_adv = true;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void validate() const {
    if (epochs < 1) throw InvalidInput("training needs epochs >= 1");
    if (batch < 1) throw InvalidInput("batch size must be positive");
    if (!(lr_gen > 0.0) || !(lr_disc > 0.0) || !(decay > 0.0)) throw InvalidInput("learning rates must be positive");
    if (decay_final_epochs < 0) throw InvalidInput("decay window must be non-negative");
  }

  double rate(double base, int epoch) const { return epoch > epochs - decay_final_epochs ? base * decay : base; }
};

struct TrainSample {
  MotionMap input;
  MotionMap target;
};

struct EpochStats {
  double sv = 0, adv = 0, disc = 0;
};

struct StepLosses {
  double sv = 0, adv = 0;
};

/// Batch-mean L_sv (+ L_adv) gradients into the generator. The discriminator
/// is frozen: its gradients are cleared afterwards. Returns the losses and
/// leaves the generator output in `out`.
inline StepLosses generator_gradients(Generator& gen, Discriminator& disc, const nn::Batch& input,
                                      const nn::Batch& target, bool use_adv, std::mt19937_64* rng,
                                      nn::Batch* out = nullptr) {
  const nn::Batch pred = gen.forward(input, nn::Mode::Train, rng);
  const double inv_b = 1.0 / static_cast<double>(pred.size());
  StepLosses loss;
  nn::Batch dpred(pred.size());
  for (std::size_t b = 0; b < pred.size(); ++b) {
    loss.sv += inv_b * loss_sv(pred[b], target[b], &dpred[b]);
    dpred[b] *= inv_b;
  }
  if (use_adv) {
    const std::vector<double> d = disc.forward(pred);
    std::vector<double> dd(d.size());
    for (std::size_t b = 0; b < d.size(); ++b) {
      loss.adv += inv_b * loss_adv(d[b]);
      dd[b] = inv_b * 2.0 * (d[b] - 1.0);
    }
    const nn::Batch dx = disc.backward(dd);
    nn::zero_grads(disc.params());
    for (std::size_t b = 0; b < pred.size(); ++b) dpred[b] += dx[b];
  }
  gen.backward(dpred);
  if (out) *out = pred;
  return loss;
}

/// Batch-mean L_D gradients into the discriminator; the generator output is
/// treated as a constant.
inline double discriminator_gradients(Discriminator& disc, const nn::Batch& real, const nn::Batch& fake) {
  double loss = 0.0;
  for (const auto* set : {&real, &fake}) {
    const bool is_real = set == &real;
    const double inv_b = 1.0 / static_cast<double>(set->size());
    const std::vector<double> d = disc.forward(*set);
    std::vector<double> dd(d.size());
    for (std::size_t b = 0; b < d.size(); ++b) {
      const double target = is_real ? 1.0 : 0.0;
      loss += inv_b * (d[b] - target) * (d[b] - target);
      dd[b] = inv_b * 2.0 * (d[b] - target);
    }
    disc.backward(dd);
  }
  return loss;
}

/// Random length-T window of a random unpaired sequence.
inline nn::Mat sample_window(const std::vector<MotionMap>& pool, Eigen::Index frames, std::mt19937_64& rng) {
  const auto& m = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
  const auto start = std::uniform_int_distribution<Eigen::Index>(0, m.frames() - frames)(rng);
  return m.quats.middleRows(start, frames);
}

/// Overlapping fixed-length windows of a paired sample.
inline std::vector<TrainSample> cut_windows(const TrainSample& s, int window, int stride) {
  if (window < 1 || stride < 1) throw InvalidInput("window and stride must be positive");
  const int t_len = s.input.frames();
  if (s.target.frames() != t_len) throw InvalidInput("paired sequences differ in length");
  std::vector<TrainSample> out;
  if (t_len < window) return out;
  std::vector<int> starts;
  for (int t = 0; t + window <= t_len; t += stride) starts.push_back(t);
  if (starts.back() + window < t_len) starts.push_back(t_len - window);
  for (int t : starts) {
    TrainSample w;
    for (auto [src, dst] : {std::pair{&s.input, &w.input}, std::pair{&s.target, &w.target}}) {
      dst->quats = src->quats.middleRows(t, window);
      dst->conf = src->conf.middleRows(t, window);
      dst->translations = src->translations.middleRows(t, window);
    }
    out.push_back(std::move(w));
  }
  return out;
}

struct TrainResult {
  Generator gen;
  Discriminator disc;
  std::vector<EpochStats> history;
};

/// Alternating generator / discriminator Adam steps over shuffled batches.
/// Every sample must share one length.
inline TrainResult train(const std::vector<TrainSample>& data, const std::vector<MotionMap>& unpaired,
                         const HybridArch& arch, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw InvalidInput("training dataset is empty");
  const int t_len = data[0].input.frames();
  for (const auto& s : data) {
    if (s.input.frames() != t_len || s.target.frames() != t_len)
      throw InvalidInput("training sequences must share one length");
    if (s.input.joints() != arch.n_joints || s.target.joints() != arch.n_joints)
      throw InvalidInput("training sequence joint count does not match the network");
  }
  if (t_len < arch.kernel) throw SequenceTooShort("training sequences are shorter than the kernel");
  if (cfg.use_adv) {
    if (unpaired.empty()) throw InvalidInput("adversarial training needs unpaired reference motion");
    for (const auto& m : unpaired)
      if (m.frames() < t_len) throw InvalidInput("unpaired reference is shorter than the training window");
  }

  std::mt19937_64 rng(cfg.seed);
  TrainResult r{Generator(arch), Discriminator(arch), {}};
  r.gen.init(rng);
  r.disc.init(rng);
  nn::Adam opt_g(cfg.beta1, cfg.beta2, cfg.eps), opt_d(cfg.beta1, cfg.beta2, cfg.eps);
  const nn::TensorList gp = r.gen.params(), dp = r.disc.params();

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats acc;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch), ++batches) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      nn::Batch input, target;
      for (std::size_t k = start; k < stop; ++k) {
        input.push_back(encode_input(data[order[k]].input));
        target.push_back(data[order[k]].target.quats);
      }
      const std::string where = "epoch " + std::to_string(epoch) + " batch " + std::to_string(batches);

      nn::zero_grads(gp);
      nn::Batch fake;
      const StepLosses gl = generator_gradients(r.gen, r.disc, input, target, cfg.use_adv, &rng, &fake);
      if (!std::isfinite(gl.sv) || !std::isfinite(gl.adv)) throw NumericFailure("non-finite generator loss at " + where);
      nn::check_finite_grads(gp);
      opt_g.step(gp, cfg.rate(cfg.lr_gen, epoch));
      acc.sv += gl.sv;
      acc.adv += gl.adv;

      if (cfg.use_adv) {
        nn::Batch real;
        for (std::size_t k = start; k < stop; ++k) real.push_back(sample_window(unpaired, t_len, rng));
        nn::zero_grads(dp);
        const double ld = discriminator_gradients(r.disc, real, fake);
        if (!std::isfinite(ld)) throw NumericFailure("non-finite discriminator loss at " + where);
        nn::check_finite_grads(dp);
        opt_d.step(dp, cfg.rate(cfg.lr_disc, epoch));
        acc.disc += ld;
      }
    }
    acc.sv /= batches;
    acc.adv /= batches;
    acc.disc /= batches;
    r.history.push_back(acc);
  }
  return r;
}

/// Discriminator trained alone on fixed real and fake sets (no generator).
inline Discriminator train_discriminator(const nn::Batch& real, const nn::Batch& fake, const HybridArch& arch,
                                         const TrainConfig& cfg) {
  cfg.validate();
  if (real.empty() || fake.empty()) throw InvalidInput("discriminator training needs real and fake samples");
  std::mt19937_64 rng(cfg.seed);
  Discriminator disc(arch);
  disc.init(rng);
  nn::Adam opt(cfg.beta1, cfg.beta2, cfg.eps);
  const nn::TensorList dp = disc.params();
  std::vector<std::size_t> ri(real.size()), fi(fake.size());
  std::iota(ri.begin(), ri.end(), 0);
  std::iota(fi.begin(), fi.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(ri.begin(), ri.end(), rng);
    std::shuffle(fi.begin(), fi.end(), rng);
    for (std::size_t s = 0; s < std::max(ri.size(), fi.size()); s += bs) {
      nn::Batch rb, fb;
      for (std::size_t k = s; k < s + bs; ++k) {
        if (k < ri.size()) rb.push_back(real[ri[k]]);
        if (k < fi.size()) fb.push_back(fake[fi[k]]);
      }
      if (rb.empty() || fb.empty()) break;
      nn::zero_grads(dp);
      if (!std::isfinite(discriminator_gradients(disc, rb, fb)))
        throw NumericFailure("non-finite discriminator loss at epoch " + std::to_string(epoch));
      nn::check_finite_grads(dp);
      opt.step(dp, cfg.rate(cfg.lr_disc, epoch));
    }
  }
  return disc;
}

/// mean D(real) - mean D(fake).
inline double separability(Discriminator& disc, const nn::Batch& real, const nn::Batch& fake) {
  const auto dr = disc.forward(real);
  const auto df = disc.forward(fake);
  return std::accumulate(dr.begin(), dr.end(), 0.0) / static_cast<double>(dr.size()) -
         std::accumulate(df.begin(), df.end(), 0.0) / static_cast<double>(df.size());
}

/// Batch-mean L_sv of the generator in eval mode.
inline double evaluate_sv(Generator& gen, const std::vector<TrainSample>& data) {
  double s = 0.0;
  for (const auto& d : data) s += loss_sv(gen.forward({encode_input(d.input)}, nn::Mode::Eval)[0], d.target.quats);
  return s / static_cast<double>(data.size());
}

// ---- checkpoint "hybridnet/1" ----

namespace detail {

inline json tensors_json(const nn::TensorList& ts) {
  json a = json::array();
  for (const nn::Tensor* t : ts)
    a.push_back({{"name", t->name}, {"shape", {t->value.rows(), t->value.cols()}}, {"data", io::mat_json(t->value)}});
  return a;
}

inline void tensors_from_json(const json& a, const nn::TensorList& ts, const std::string& ctx) {
  if (!a.is_array() || a.size() != ts.size())
    throw ParseError(ctx + ": expected " + std::to_string(ts.size()) + " tensors");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const std::string c = ctx + "[" + std::to_string(i) + "]";
    const auto name = io::get<std::string>(a[i], "name", c);
    if (name != ts[i]->name) throw ParseError(c + ": expected tensor '" + ts[i]->name + "', got '" + name + "'");
    const auto shape = io::get<std::vector<Eigen::Index>>(a[i], "shape", c);
    if (shape.size() != 2 || shape[0] != ts[i]->value.rows() || shape[1] != ts[i]->value.cols())
      throw ParseError(c + ": shape of '" + name + "' does not match the architecture");
    ts[i]->value = io::json_mat(io::field(a[i], "data", c), shape[0], shape[1], c + ".data");
    if (!ts[i]->value.allFinite()) throw ParseError(c + ": non-finite values in '" + name + "'");
  }
}

}  // namespace detail

inline json arch_to_json(const HybridArch& a) {
  json regions = json::array();
  for (Region r : a.regions) regions.push_back(region_name(r));
  return {{"n_joints", a.n_joints},
          {"regions", regions},
          {"global_channels", a.global_channels},
          {"local_channels", a.local_channels},
          {"gru_hidden", a.gru_hidden},
          {"decoder_hidden", {a.decoder_hidden1, a.decoder_hidden2}},
          {"disc_hidden", a.disc_hidden},
          {"kernel", a.kernel},
          {"dropout", a.dropout}};
}

inline HybridArch arch_from_json(const json& j, const std::string& ctx) {
  HybridArch a;
  a.n_joints = io::get<int>(j, "n_joints", ctx);
  a.regions.clear();
  for (const auto& name : io::get<std::vector<std::string>>(j, "regions", ctx)) {
    bool found = false;
    for (int r = 0; r < kRegionCount; ++r)
      if (region_name(static_cast<Region>(r)) == name) {
        a.regions.push_back(static_cast<Region>(r));
        found = true;
      }
    if (!found) throw ParseError(ctx + ".regions: unknown region '" + name + "'");
  }
  a.global_channels = io::get<int>(j, "global_channels", ctx);
  a.local_channels = io::get<int>(j, "local_channels", ctx);
  a.gru_hidden = io::get<int>(j, "gru_hidden", ctx);
  const auto dec = io::get<std::vector<int>>(j, "decoder_hidden", ctx);
  if (dec.size() != 2) throw ParseError(ctx + ".decoder_hidden: expected two widths");
  a.decoder_hidden1 = dec[0];
  a.decoder_hidden2 = dec[1];
  a.disc_hidden = io::get<int>(j, "disc_hidden", ctx);
  a.kernel = io::get<int>(j, "kernel", ctx);
  a.dropout = io::get<double>(j, "dropout", ctx);
  try {
    a.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(ctx + ": " + e.what());
  }
  return a;
}

inline void save_checkpoint(const std::filesystem::path& path, Generator& gen, Discriminator& disc) {
  const json j = {{"format", "hybridnet/1"},
                  {"arch", arch_to_json(gen.arch())},
                  {"generator", detail::tensors_json(gen.params())},
                  {"generator_buffers", detail::tensors_json(gen.buffers())},
                  {"discriminator", detail::tensors_json(disc.params())}};
  io::save(path, j);
}

struct Checkpoint {
  Generator gen;
  Discriminator disc;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string ctx = path.string();
  const json j = io::load(path);
  io::check_format(j, "hybridnet/1", ctx);
  const HybridArch arch = arch_from_json(io::field(j, "arch", ctx), ctx + ".arch");
  Checkpoint c{Generator(arch), Discriminator(arch)};
  detail::tensors_from_json(io::field(j, "generator", ctx), c.gen.params(), ctx + ".generator");
  detail::tensors_from_json(io::field(j, "generator_buffers", ctx), c.gen.buffers(), ctx + ".generator_buffers");
  detail::tensors_from_json(io::field(j, "discriminator", ctx), c.disc.params(), ctx + ".discriminator");
  for (const nn::Tensor* t : c.gen.buffers())
    if (t->name.ends_with("running_var") && (t->value.array() <= 0.0).any())
      throw ParseError(ctx + ": running variance must be positive in '" + t->name + "'");
  return c;
}

}  // namespace capref
