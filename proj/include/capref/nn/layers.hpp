#pragma once

// Minimal layers with hand-written backward passes. A batch is a list of
// sequences, each a T x C matrix (rows are time steps). Every layer caches what
// its backward pass needs during forward; backward accumulates into `grad`.

#include <capref/error.hpp>

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace capref::nn {

using Mat = Eigen::MatrixXd;
using Batch = std::vector<Mat>;

enum class Mode { Train, Eval };

struct Tensor {
  std::string name;
  Mat value;
  Mat grad;

  Tensor() = default;
  Tensor(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using TensorList = std::vector<Tensor*>;

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases alike.
inline void init_uniform(Tensor& t, double fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = u(rng);
}

/// Same-length 1D convolution over time with zero padding.
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, int in, int out, int kernel)
      : in_(in), out_(out), kernel_(kernel), weight(name + ".weight", kernel * in, out), bias(name + ".bias", 1, out) {}

  void init(std::mt19937_64& rng) {
    init_uniform(weight, kernel_ * in_, rng);
    init_uniform(bias, kernel_ * in_, rng);
  }

  Batch forward(const Batch& x) {
    cols_.resize(x.size());
    Batch y(x.size());
    for (std::size_t b = 0; b < x.size(); ++b) {
      cols_[b] = im2col(x[b]);
      y[b] = cols_[b] * weight.value;
      y[b].rowwise() += bias.value.row(0);
    }
    return y;
  }

  Batch backward(const Batch& dy) {
    Batch dx(dy.size());
    const int pad = kernel_ / 2;
    for (std::size_t b = 0; b < dy.size(); ++b) {
      weight.grad.noalias() += cols_[b].transpose() * dy[b];
      bias.grad.row(0) += dy[b].colwise().sum();
      const Mat dcol = dy[b] * weight.value.transpose();
      const Eigen::Index t_len = dy[b].rows();
      dx[b] = Mat::Zero(t_len, in_);
      for (int k = 0; k < kernel_; ++k) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, pad - k);
        const Eigen::Index hi = std::min<Eigen::Index>(t_len, t_len + pad - k);
        if (hi <= lo) continue;
        dx[b].middleRows(lo + k - pad, hi - lo) += dcol.block(lo, k * in_, hi - lo, in_);
      }
    }
    return dx;
  }

  void collect(TensorList& p) {
    p.push_back(&weight);
    p.push_back(&bias);
  }

  int in() const { return in_; }
  int out() const { return out_; }

 private:
  Mat im2col(const Mat& x) const {
    const Eigen::Index t_len = x.rows();
    const int pad = kernel_ / 2;
    Mat col = Mat::Zero(t_len, kernel_ * in_);
    for (int k = 0; k < kernel_; ++k) {
      const Eigen::Index lo = std::max<Eigen::Index>(0, pad - k);
      const Eigen::Index hi = std::min<Eigen::Index>(t_len, t_len + pad - k);
      if (hi <= lo) continue;
      col.block(lo, k * in_, hi - lo, in_) = x.middleRows(lo + k - pad, hi - lo);
    }
    return col;
  }

  int in_ = 0, out_ = 0, kernel_ = 1;
  Batch cols_;

 public:
  Tensor weight, bias;
};

/// Batch normalization over all (sequence, time) rows per channel.
class BatchNorm {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm() = default;
  BatchNorm(const std::string& name, int channels)
      : gamma(name + ".gamma", 1, channels),
        beta(name + ".beta", 1, channels),
        running_mean(name + ".running_mean", 1, channels),
        running_var(name + ".running_var", 1, channels) {
    gamma.value.setOnes();
    running_var.value.setOnes();
  }

  Batch forward(const Batch& x, Mode mode) {
    const Eigen::Index c = gamma.value.cols();
    mode_ = mode;
    Eigen::RowVectorXd mean, var;
    if (mode == Mode::Train) {
      Eigen::Index n = 0;
      mean = Eigen::RowVectorXd::Zero(c);
      for (const auto& m : x) {
        mean += m.colwise().sum();
        n += m.rows();
      }
      mean /= static_cast<double>(n);
      var = Eigen::RowVectorXd::Zero(c);
      for (const auto& m : x) var += (m.rowwise() - mean).array().square().colwise().sum().matrix();
      var /= static_cast<double>(n);
      count_ = n;
      running_mean.value.row(0) = (1.0 - kMomentum) * running_mean.value.row(0) + kMomentum * mean;
      const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
      running_var.value.row(0) = (1.0 - kMomentum) * running_var.value.row(0) + kMomentum * unbias * var;
    } else {
      mean = running_mean.value.row(0);
      var = running_var.value.row(0);
    }
    inv_std_ = (var.array() + kEps).rsqrt().matrix();
    xhat_.resize(x.size());
    Batch y(x.size());
    for (std::size_t b = 0; b < x.size(); ++b) {
      xhat_[b] = ((x[b].rowwise() - mean).array().rowwise() * inv_std_.array()).matrix();
      y[b] = (xhat_[b].array().rowwise() * gamma.value.row(0).array()).matrix();
      y[b].rowwise() += beta.value.row(0);
    }
    return y;
  }

  Batch backward(const Batch& dy) {
    const Eigen::Index c = gamma.value.cols();
    Eigen::RowVectorXd sum_dxhat = Eigen::RowVectorXd::Zero(c), sum_dxhat_xhat = Eigen::RowVectorXd::Zero(c);
    Batch dxhat(dy.size());
    for (std::size_t b = 0; b < dy.size(); ++b) {
      gamma.grad.row(0) += (dy[b].array() * xhat_[b].array()).colwise().sum().matrix();
      beta.grad.row(0) += dy[b].colwise().sum();
      dxhat[b] = (dy[b].array().rowwise() * gamma.value.row(0).array()).matrix();
      sum_dxhat += dxhat[b].colwise().sum();
      sum_dxhat_xhat += (dxhat[b].array() * xhat_[b].array()).colwise().sum().matrix();
    }
    Batch dx(dy.size());
    if (mode_ == Mode::Eval) {
      for (std::size_t b = 0; b < dy.size(); ++b) dx[b] = (dxhat[b].array().rowwise() * inv_std_.array()).matrix();
      return dx;
    }
    const double n = static_cast<double>(count_);
    for (std::size_t b = 0; b < dy.size(); ++b) {
      Eigen::ArrayXXd t = n * dxhat[b].array();
      t.rowwise() -= sum_dxhat.array();
      t -= xhat_[b].array().rowwise() * sum_dxhat_xhat.array();
      dx[b] = (t.rowwise() * (inv_std_.array() / n)).matrix();
    }
    return dx;
  }

  void collect(TensorList& p) {
    p.push_back(&gamma);
    p.push_back(&beta);
  }
  void collect_buffers(TensorList& p) {
    p.push_back(&running_mean);
    p.push_back(&running_var);
  }

  Tensor gamma, beta;
  Tensor running_mean, running_var;

 private:
  Mode mode_ = Mode::Train;
  Eigen::Index count_ = 0;
  Eigen::RowVectorXd inv_std_;
  Batch xhat_;
};

/// ELU with alpha = 1.
class Elu {
 public:
  Batch forward(const Batch& x) {
    y_.resize(x.size());
    for (std::size_t b = 0; b < x.size(); ++b)
      y_[b] = x[b].unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
    return y_;
  }
  Batch backward(const Batch& dy) const {
    Batch dx(dy.size());
    for (std::size_t b = 0; b < dy.size(); ++b)
      dx[b] = dy[b].binaryExpr(y_[b], [](double g, double y) { return y > 0.0 ? g : g * (y + 1.0); });
    return dx;
  }

 private:
  Batch y_;
};

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out)
      : in_(in), weight(name + ".weight", in, out), bias(name + ".bias", 1, out) {}

  void init(std::mt19937_64& rng) {
    init_uniform(weight, in_, rng);
    init_uniform(bias, in_, rng);
  }

  Batch forward(const Batch& x) {
    x_ = x;
    Batch y(x.size());
    for (std::size_t b = 0; b < x.size(); ++b) {
      y[b] = x[b] * weight.value;
      y[b].rowwise() += bias.value.row(0);
    }
    return y;
  }

  Batch backward(const Batch& dy) {
    Batch dx(dy.size());
    for (std::size_t b = 0; b < dy.size(); ++b) {
      weight.grad.noalias() += x_[b].transpose() * dy[b];
      bias.grad.row(0) += dy[b].colwise().sum();
      dx[b] = dy[b] * weight.value.transpose();
    }
    return dx;
  }

  void collect(TensorList& p) {
    p.push_back(&weight);
    p.push_back(&bias);
  }

  Tensor weight, bias;

 private:
  int in_ = 0;
  Batch x_;
};

/// Inverted dropout; identity in eval mode.
class Dropout {
 public:
  explicit Dropout(double rate = 0.0) : rate_(rate) {}

  Batch forward(const Batch& x, Mode mode, std::mt19937_64* rng) {
    active_ = mode == Mode::Train && rate_ > 0.0;
    if (!active_) return x;
    if (!rng) throw InvalidInput("dropout in train mode needs a random generator");
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double keep = 1.0 / (1.0 - rate_);
    mask_.resize(x.size());
    Batch y(x.size());
    for (std::size_t b = 0; b < x.size(); ++b) {
      mask_[b].resize(x[b].rows(), x[b].cols());
      for (Eigen::Index i = 0; i < mask_[b].size(); ++i) mask_[b].data()[i] = u01(*rng) < rate_ ? 0.0 : keep;
      y[b] = x[b].cwiseProduct(mask_[b]);
    }
    return y;
  }

  Batch backward(const Batch& dy) const {
    if (!active_) return dy;
    Batch dx(dy.size());
    for (std::size_t b = 0; b < dy.size(); ++b) dx[b] = dy[b].cwiseProduct(mask_[b]);
    return dx;
  }

  double rate() const { return rate_; }

 private:
  double rate_ = 0.0;
  bool active_ = false;
  Batch mask_;
};

/// Single-layer GRU, gate order (reset, update, candidate), zero initial state.
///   r = sigma(x Wr + br_x + h Ur + br_h)
///   z = sigma(x Wz + bz_x + h Uz + bz_h)
///   n = tanh(x Wn + bn_x + r * (h Un + bn_h))
///   h' = (1 - z) * n + z * h
/// All sequences of a batch must share one length.
class Gru {
 public:
  Gru() = default;
  Gru(const std::string& name, int in, int hidden)
      : in_(in),
        hidden_(hidden),
        w_input(name + ".w_input", in, 3 * hidden),
        w_hidden(name + ".w_hidden", hidden, 3 * hidden),
        b_input(name + ".b_input", 1, 3 * hidden),
        b_hidden(name + ".b_hidden", 1, 3 * hidden) {}

  void init(std::mt19937_64& rng) {
    for (Tensor* t : {&w_input, &w_hidden, &b_input, &b_hidden}) init_uniform(*t, hidden_, rng);
  }

  int hidden() const { return hidden_; }

  /// Returns the hidden state at every step (T x H per sequence).
  Batch forward(const Batch& x) {
    const std::size_t nb = x.size();
    if (nb == 0) return {};
    const Eigen::Index t_len = x[0].rows();
    for (const auto& m : x)
      if (m.rows() != t_len) throw InvalidInput("GRU batch sequences must share one length");
    const int h = hidden_;
    x_ = x;
    gx_.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      gx_[b] = x[b] * w_input.value;
      gx_[b].rowwise() += b_input.value.row(0);
    }
    steps_.assign(static_cast<std::size_t>(t_len), Step{});
    Mat hprev = Mat::Zero(static_cast<Eigen::Index>(nb), h);
    Batch out(nb, Mat(t_len, h));
    for (Eigen::Index t = 0; t < t_len; ++t) {
      Step& s = steps_[static_cast<std::size_t>(t)];
      Mat gx(static_cast<Eigen::Index>(nb), 3 * h);
      for (std::size_t b = 0; b < nb; ++b) gx.row(static_cast<Eigen::Index>(b)) = gx_[b].row(t);
      Mat gh = hprev * w_hidden.value;
      gh.rowwise() += b_hidden.value.row(0);
      s.r = sigmoid(gx.leftCols(h) + gh.leftCols(h));
      s.z = sigmoid(gx.middleCols(h, h) + gh.middleCols(h, h));
      s.ghn = gh.rightCols(h);
      s.n = (gx.rightCols(h).array() + s.r.array() * s.ghn.array()).tanh().matrix();
      s.hprev = hprev;
      hprev = ((1.0 - s.z.array()) * s.n.array() + s.z.array() * hprev.array()).matrix();
      for (std::size_t b = 0; b < nb; ++b) out[b].row(t) = hprev.row(static_cast<Eigen::Index>(b));
    }
    return out;
  }

  /// dy: gradient with respect to every hidden state (T x H per sequence).
  Batch backward(const Batch& dy) {
    const std::size_t nb = dy.size();
    if (nb == 0) return {};
    const Eigen::Index t_len = dy[0].rows();
    const int h = hidden_;
    Batch dgx(nb, Mat(t_len, 3 * h));
    Mat dh_next = Mat::Zero(static_cast<Eigen::Index>(nb), h);
    for (Eigen::Index t = t_len - 1; t >= 0; --t) {
      const Step& s = steps_[static_cast<std::size_t>(t)];
      Mat dh = dh_next;
      for (std::size_t b = 0; b < nb; ++b) dh.row(static_cast<Eigen::Index>(b)) += dy[b].row(t);
      const Eigen::ArrayXXd dn = dh.array() * (1.0 - s.z.array());
      const Eigen::ArrayXXd dz = dh.array() * (s.hprev.array() - s.n.array());
      const Eigen::ArrayXXd dan = dn * (1.0 - s.n.array().square());
      const Eigen::ArrayXXd dr = dan * s.ghn.array();
      const Eigen::ArrayXXd dar = dr * s.r.array() * (1.0 - s.r.array());
      const Eigen::ArrayXXd daz = dz * s.z.array() * (1.0 - s.z.array());
      Mat dgh(static_cast<Eigen::Index>(nb), 3 * h);
      dgh << dar.matrix(), daz.matrix(), (dan * s.r.array()).matrix();
      w_hidden.grad.noalias() += s.hprev.transpose() * dgh;
      b_hidden.grad.row(0) += dgh.colwise().sum();
      dh_next = (dh.array() * s.z.array()).matrix() + dgh * w_hidden.value.transpose();
      for (std::size_t b = 0; b < nb; ++b) {
        const auto bi = static_cast<Eigen::Index>(b);
        dgx[b].row(t) << dar.row(bi).matrix(), daz.row(bi).matrix(), dan.row(bi).matrix();
      }
    }
    Batch dx(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      w_input.grad.noalias() += x_[b].transpose() * dgx[b];
      b_input.grad.row(0) += dgx[b].colwise().sum();
      dx[b] = dgx[b] * w_input.value.transpose();
    }
    return dx;
  }

  void collect(TensorList& p) {
    for (Tensor* t : {&w_input, &w_hidden, &b_input, &b_hidden}) p.push_back(t);
  }

  Tensor w_input, w_hidden, b_input, b_hidden;

 private:
  static Mat sigmoid(const Mat& a) { return (1.0 / (1.0 + (-a.array()).exp())).matrix(); }

  struct Step {
    Mat r, z, n, ghn, hprev;
  };

  int in_ = 0, hidden_ = 0;
  Batch x_, gx_;
  std::vector<Step> steps_;
};

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

/// Adam with bias correction; one moment pair per tensor.
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const TensorList& params, double lr) {
    if (m_.empty()) {
      for (const Tensor* p : params) {
        m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i];
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

inline void zero_grads(const TensorList& params) {
  for (Tensor* p : params) p->zero_grad();
}

/// Throws NumericFailure naming the first tensor with a non-finite gradient.
inline void check_finite_grads(const TensorList& params) {
  for (const Tensor* p : params)
    if (!p->grad.allFinite()) throw NumericFailure("non-finite gradient in layer '" + p->name + "'");
}

}  // namespace capref::nn
