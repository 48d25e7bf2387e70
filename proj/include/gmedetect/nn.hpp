// nn.hpp
// Minimal deterministic neural-network engine for 1-D sequence classifiers:
// conv1d (front zero padding), batch normalization, ReLU, width-2 max
// pooling, squeeze-and-excitation gating, global average pooling, dense
// layers and softmax cross-entropy, with analytic backward passes and Adam.
//
// A Value carries a batch either as stacked sequences (rows = batch*length,
// cols = channels) or as flat feature rows (rows = batch, length == 0).
// Models emit logits; softmax lives in the loss and prediction helpers. The
// terminal Softmax entry of a ModelSpec is a structural marker.

#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <vector>

#include "gmedetect/common.hpp"
#include "gmedetect/featurize.hpp"

namespace gme::nn {

struct Value {
  Eigen::MatrixXd data;
  int batch = 0;
  int length = 0;  // 0 = flat rows
  int channels = 0;
  bool flat() const { return length == 0; }

  static Value seq(Eigen::MatrixXd m, int batch, int length, int channels) {
    Value v{std::move(m), batch, length, channels};
    return v;
  }
  static Value flat_rows(Eigen::MatrixXd m) {
    Value v;
    v.batch = static_cast<int>(m.rows());
    v.channels = static_cast<int>(m.cols());
    v.length = 0;
    v.data = std::move(m);
    return v;
  }
};

struct ParamRef {
  Eigen::MatrixXd* value;
  Eigen::MatrixXd* grad;
  bool weight_decay;  // L2 applies to conv/dense weights only
};

struct LayerSpec {
  enum Kind : uint8_t {
    Conv1d = 0,
    BatchNorm = 1,
    Relu = 2,
    MaxPool = 3,
    Se = 4,
    GlobalPool = 5,
    Dense = 6,
    Softmax = 7,
  };
  Kind kind = Relu;
  int i0 = 0, i1 = 0, i2 = 0;
  double f0 = 0.0;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Value forward(const Value& x, bool training) = 0;
  virtual Value backward(const Value& grad_out) = 0;
  virtual void collect_params(std::vector<ParamRef>&) {}
  virtual LayerSpec spec() const = 0;
  virtual void write_params(ByteWriter&) const {}
  virtual void read_params(ByteReader&) {}
};

namespace detail {
inline void write_matrix_rm(ByteWriter& w, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.f64(m(i, j));
}
inline void read_matrix_rm(ByteReader& r, Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Conv1d: cross-correlation along the length axis with k-1 zeros prepended,
// so output length equals input length. Tap j multiplies x_{t-(k-1)+j}; for
// the default k = 2 that is (w0 * x_{t-1} + w1 * x_t).
class Conv1dLayer : public Layer {
 public:
  Conv1dLayer(int k, int c_in, int c_out) : k_(k), c_in_(c_in), c_out_(c_out) {
    if (k < 1 || c_in < 1 || c_out < 1) throw DataError("conv1d: bad shape");
    taps_.resize(k_);
    tap_grads_.resize(k_);
    for (int j = 0; j < k_; ++j) {
      taps_[j].setZero(c_in_, c_out_);
      tap_grads_[j].setZero(c_in_, c_out_);
    }
    bias_.setZero(1, c_out_);
    bias_grad_.setZero(1, c_out_);
  }

  void init(Rng& rng) {
    const double a = 1.0 / std::sqrt(double(k_) * c_in_);
    for (int j = 0; j < k_; ++j)
      for (int ci = 0; ci < c_in_; ++ci)
        for (int co = 0; co < c_out_; ++co) taps_[j](ci, co) = rng.uniform(-a, a);
    bias_.setZero();
  }

  Value forward(const Value& x, bool) override {
    if (x.flat() || x.channels != c_in_)
      throw DataError("conv1d: input shape mismatch");
    input_ = x;
    Eigen::MatrixXd out(x.data.rows(), c_out_);
    out = x.data * taps_[k_ - 1];  // tap aligned with x_t
    for (int j = 0; j < k_ - 1; ++j) {
      // Tap j multiplies x shifted down by (k-1-j) rows within each sample.
      const int shift = k_ - 1 - j;
      for (int b = 0; b < x.batch; ++b) {
        const Eigen::Index base = Eigen::Index(b) * x.length;
        if (x.length > shift)
          out.middleRows(base + shift, x.length - shift).noalias() +=
              x.data.middleRows(base, x.length - shift) * taps_[j];
      }
    }
    out.rowwise() += bias_.row(0);
    return Value::seq(std::move(out), x.batch, x.length, c_out_);
  }

  Value backward(const Value& g) override {
    bias_grad_.row(0) += g.data.colwise().sum();
    tap_grads_[k_ - 1].noalias() += input_.data.transpose() * g.data;
    Eigen::MatrixXd gx = g.data * taps_[k_ - 1].transpose();
    for (int j = 0; j < k_ - 1; ++j) {
      const int shift = k_ - 1 - j;
      for (int b = 0; b < g.batch; ++b) {
        const Eigen::Index base = Eigen::Index(b) * g.length;
        if (g.length > shift) {
          tap_grads_[j].noalias() +=
              input_.data.middleRows(base, g.length - shift).transpose() *
              g.data.middleRows(base + shift, g.length - shift);
          gx.middleRows(base, g.length - shift).noalias() +=
              g.data.middleRows(base + shift, g.length - shift) *
              taps_[j].transpose();
        }
      }
    }
    return Value::seq(std::move(gx), g.batch, g.length, c_in_);
  }

  void collect_params(std::vector<ParamRef>& out) override {
    for (int j = 0; j < k_; ++j)
      out.push_back({&taps_[j], &tap_grads_[j], true});
    out.push_back({&bias_, &bias_grad_, false});
  }

  LayerSpec spec() const override {
    return {LayerSpec::Conv1d, k_, c_in_, c_out_, 0.0};
  }
  void write_params(ByteWriter& w) const override {
    for (const auto& t : taps_) detail::write_matrix_rm(w, t);
    detail::write_matrix_rm(w, bias_);
  }
  void read_params(ByteReader& r) override {
    for (auto& t : taps_) detail::read_matrix_rm(r, t);
    detail::read_matrix_rm(r, bias_);
  }

  // Direct access used by the layer-level tests.
  Eigen::MatrixXd& tap(int j) { return taps_[j]; }
  Eigen::MatrixXd& bias() { return bias_; }

 private:
  int k_, c_in_, c_out_;
  std::vector<Eigen::MatrixXd> taps_, tap_grads_;
  Eigen::MatrixXd bias_, bias_grad_;
  Value input_;
};

// ---------------------------------------------------------------------------
// Batch normalization over all rows (batch and length) per channel, with
// population variance, running statistics for inference, and the standard
// backward pass. Training mode requires batch >= 2.
class BatchNormLayer : public Layer {
 public:
  explicit BatchNormLayer(int channels, double eps = 1e-5,
                          double momentum = 0.1)
      : c_(channels), eps_(eps), momentum_(momentum) {
    gamma_.setOnes(1, c_);
    beta_.setZero(1, c_);
    gamma_grad_.setZero(1, c_);
    beta_grad_.setZero(1, c_);
    running_mean_.setZero(1, c_);
    running_var_.setOnes(1, c_);
  }

  Value forward(const Value& x, bool training) override {
    if (x.channels != c_) throw DataError("batchnorm: channel mismatch");
    Value out = x;
    if (training) {
      if (x.batch < 2)
        throw DataError("batchnorm: training requires batch size >= 2");
      const double n = double(x.data.rows());
      Eigen::RowVectorXd mean = x.data.colwise().sum() / n;
      Eigen::MatrixXd centered = x.data.rowwise() - mean;
      Eigen::RowVectorXd var = centered.array().square().colwise().sum() / n;
      inv_std_ = (var.array() + eps_).sqrt().inverse();
      xhat_ = centered.array().rowwise() * inv_std_.array();
      out.data = (xhat_.array().rowwise() * gamma_.row(0).array()).rowwise() +
                 beta_.row(0).array();
      running_mean_.row(0) =
          (1.0 - momentum_) * running_mean_.row(0) + momentum_ * mean;
      running_var_.row(0) =
          (1.0 - momentum_) * running_var_.row(0) + momentum_ * var;
    } else {
      Eigen::RowVectorXd inv =
          (running_var_.row(0).array() + eps_).sqrt().inverse();
      out.data = ((x.data.rowwise() - running_mean_.row(0))
                      .array()
                      .rowwise() *
                  (inv.array() * gamma_.row(0).array()))
                     .rowwise() +
                 beta_.row(0).array();
    }
    return out;
  }

  Value backward(const Value& g) override {
    const double n = double(g.data.rows());
    Eigen::RowVectorXd sum_g = g.data.colwise().sum();
    Eigen::RowVectorXd sum_gx = (g.data.array() * xhat_.array()).colwise().sum();
    gamma_grad_.row(0) += sum_gx;
    beta_grad_.row(0) += sum_g;
    Value out = g;
    out.data =
        ((g.data.array().rowwise() -
          (sum_g / n).array())  // centered gradient
             .matrix()
             .array() -
         (xhat_.array().rowwise() * (sum_gx / n).array()))
            .rowwise() *
        (gamma_.row(0).array() * inv_std_.array());
    return out;
  }

  void collect_params(std::vector<ParamRef>& out) override {
    out.push_back({&gamma_, &gamma_grad_, false});
    out.push_back({&beta_, &beta_grad_, false});
  }

  LayerSpec spec() const override { return {LayerSpec::BatchNorm, c_, 0, 0, eps_}; }
  void write_params(ByteWriter& w) const override {
    detail::write_matrix_rm(w, gamma_);
    detail::write_matrix_rm(w, beta_);
    detail::write_matrix_rm(w, running_mean_);
    detail::write_matrix_rm(w, running_var_);
  }
  void read_params(ByteReader& r) override {
    detail::read_matrix_rm(r, gamma_);
    detail::read_matrix_rm(r, beta_);
    detail::read_matrix_rm(r, running_mean_);
    detail::read_matrix_rm(r, running_var_);
  }

  Eigen::MatrixXd& gamma() { return gamma_; }
  Eigen::MatrixXd& beta() { return beta_; }

 private:
  int c_;
  double eps_, momentum_;
  Eigen::MatrixXd gamma_, beta_, gamma_grad_, beta_grad_;
  Eigen::MatrixXd running_mean_, running_var_;
  Eigen::MatrixXd xhat_;
  Eigen::RowVectorXd inv_std_;
};

// ---------------------------------------------------------------------------
class ReluLayer : public Layer {
 public:
  Value forward(const Value& x, bool) override {
    mask_ = (x.data.array() > 0.0).cast<double>();
    Value out = x;
    out.data = x.data.cwiseMax(0.0);
    return out;
  }
  Value backward(const Value& g) override {
    Value out = g;
    out.data = g.data.array() * mask_.array();
    return out;
  }
  LayerSpec spec() const override { return {LayerSpec::Relu, 0, 0, 0, 0.0}; }

 private:
  Eigen::MatrixXd mask_;
};

// ---------------------------------------------------------------------------
// Width-2, stride-2 max pooling along the length axis; a trailing element of
// an odd-length input is dropped. Ties route to the earlier element.
class MaxPoolLayer : public Layer {
 public:
  Value forward(const Value& x, bool) override {
    if (x.flat() || x.length < 2) throw DataError("maxpool: length must be >= 2");
    in_length_ = x.length;
    const int out_len = x.length / 2;
    Eigen::MatrixXd out(Eigen::Index(x.batch) * out_len, x.channels);
    choice_.resize(out.rows(), x.channels);
    for (int b = 0; b < x.batch; ++b) {
      const Eigen::Index ib = Eigen::Index(b) * x.length;
      const Eigen::Index ob = Eigen::Index(b) * out_len;
      for (int t = 0; t < out_len; ++t) {
        for (int c = 0; c < x.channels; ++c) {
          const double a = x.data(ib + 2 * t, c);
          const double d = x.data(ib + 2 * t + 1, c);
          const bool second = d > a;
          out(ob + t, c) = second ? d : a;
          choice_(ob + t, c) = second ? 1 : 0;
        }
      }
    }
    return Value::seq(std::move(out), x.batch, out_len, x.channels);
  }

  Value backward(const Value& g) override {
    Eigen::MatrixXd gx =
        Eigen::MatrixXd::Zero(Eigen::Index(g.batch) * in_length_, g.channels);
    for (int b = 0; b < g.batch; ++b) {
      const Eigen::Index ib = Eigen::Index(b) * in_length_;
      const Eigen::Index ob = Eigen::Index(b) * g.length;
      for (int t = 0; t < g.length; ++t)
        for (int c = 0; c < g.channels; ++c)
          gx(ib + 2 * t + choice_(ob + t, c), c) = g.data(ob + t, c);
    }
    return Value::seq(std::move(gx), g.batch, in_length_, g.channels);
  }

  LayerSpec spec() const override { return {LayerSpec::MaxPool, 0, 0, 0, 0.0}; }

 private:
  int in_length_ = 0;
  Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> choice_;
};

// ---------------------------------------------------------------------------
// Squeeze-and-excitation: per-sample channel gating
//   z = mean over length, s = sigmoid(W2 relu(W1 z + b1) + b2), y = x * s.
class SeLayer : public Layer {
 public:
  SeLayer(int channels, int reduction) : c_(channels), r_(reduction) {
    if (r_ < 1 || c_ % r_ != 0)
      throw DataError("se: reduction must divide the channel count");
    const int mid = c_ / r_;
    w1_.setZero(mid, c_);
    w2_.setZero(c_, mid);
    b1_.setZero(1, mid);
    b2_.setZero(1, c_);
    w1_grad_.setZero(mid, c_);
    w2_grad_.setZero(c_, mid);
    b1_grad_.setZero(1, mid);
    b2_grad_.setZero(1, c_);
  }

  void init(Rng& rng) {
    const double a1 = 1.0 / std::sqrt(double(c_));
    for (Eigen::Index i = 0; i < w1_.rows(); ++i)
      for (Eigen::Index j = 0; j < w1_.cols(); ++j) w1_(i, j) = rng.uniform(-a1, a1);
    const double a2 = 1.0 / std::sqrt(double(c_ / r_));
    for (Eigen::Index i = 0; i < w2_.rows(); ++i)
      for (Eigen::Index j = 0; j < w2_.cols(); ++j) w2_(i, j) = rng.uniform(-a2, a2);
    b1_.setZero();
    b2_.setZero();
  }

  Value forward(const Value& x, bool) override {
    if (x.flat() || x.channels != c_) throw DataError("se: input shape mismatch");
    input_ = x;
    const int mid = c_ / r_;
    z_.resize(x.batch, c_);
    h_.resize(x.batch, mid);
    s_.resize(x.batch, c_);
    Value out = x;
    for (int b = 0; b < x.batch; ++b) {
      const Eigen::Index base = Eigen::Index(b) * x.length;
      z_.row(b) = x.data.middleRows(base, x.length).colwise().mean();
      Eigen::RowVectorXd a1 = z_.row(b) * w1_.transpose() + b1_.row(0);
      h_.row(b) = a1.cwiseMax(0.0);
      Eigen::RowVectorXd a2 = h_.row(b) * w2_.transpose() + b2_.row(0);
      s_.row(b) = (1.0 / (1.0 + (-a2.array()).exp())).matrix();
      out.data.middleRows(base, x.length) =
          x.data.middleRows(base, x.length).array().rowwise() *
          s_.row(b).array();
    }
    return out;
  }

  Value backward(const Value& g) override {
    Value out = g;
    for (int b = 0; b < g.batch; ++b) {
      const Eigen::Index base = Eigen::Index(b) * g.length;
      // Trunk path.
      out.data.middleRows(base, g.length) =
          g.data.middleRows(base, g.length).array().rowwise() *
          s_.row(b).array();
      // Gate path.
      Eigen::RowVectorXd ds =
          (g.data.middleRows(base, g.length).array() *
           input_.data.middleRows(base, g.length).array())
              .colwise()
              .sum();
      Eigen::RowVectorXd da2 =
          ds.array() * s_.row(b).array() * (1.0 - s_.row(b).array());
      w2_grad_.noalias() += da2.transpose() * h_.row(b);
      b2_grad_.row(0) += da2;
      Eigen::RowVectorXd dh = da2 * w2_;
      Eigen::RowVectorXd da1 =
          dh.array() * (h_.row(b).array() > 0.0).cast<double>();
      w1_grad_.noalias() += da1.transpose() * z_.row(b);
      b1_grad_.row(0) += da1;
      Eigen::RowVectorXd dz = da1 * w1_;
      out.data.middleRows(base, g.length).rowwise() += dz / double(g.length);
    }
    return out;
  }

  void collect_params(std::vector<ParamRef>& out) override {
    out.push_back({&w1_, &w1_grad_, true});
    out.push_back({&b1_, &b1_grad_, false});
    out.push_back({&w2_, &w2_grad_, true});
    out.push_back({&b2_, &b2_grad_, false});
  }

  LayerSpec spec() const override { return {LayerSpec::Se, c_, r_, 0, 0.0}; }
  void write_params(ByteWriter& w) const override {
    detail::write_matrix_rm(w, w1_);
    detail::write_matrix_rm(w, b1_);
    detail::write_matrix_rm(w, w2_);
    detail::write_matrix_rm(w, b2_);
  }
  void read_params(ByteReader& r) override {
    detail::read_matrix_rm(r, w1_);
    detail::read_matrix_rm(r, b1_);
    detail::read_matrix_rm(r, w2_);
    detail::read_matrix_rm(r, b2_);
  }

  Eigen::MatrixXd& w1() { return w1_; }
  Eigen::MatrixXd& w2() { return w2_; }
  Eigen::MatrixXd& b2() { return b2_; }

 private:
  int c_, r_;
  Eigen::MatrixXd w1_, w2_, b1_, b2_;
  Eigen::MatrixXd w1_grad_, w2_grad_, b1_grad_, b2_grad_;
  Eigen::MatrixXd z_, h_, s_;
  Value input_;
};

// ---------------------------------------------------------------------------
class GlobalPoolLayer : public Layer {
 public:
  Value forward(const Value& x, bool) override {
    if (x.flat()) throw DataError("global pool: expected a sequence");
    length_ = x.length;
    Eigen::MatrixXd out(x.batch, x.channels);
    for (int b = 0; b < x.batch; ++b)
      out.row(b) =
          x.data.middleRows(Eigen::Index(b) * x.length, x.length).colwise().mean();
    return Value::flat_rows(std::move(out));
  }
  Value backward(const Value& g) override {
    Eigen::MatrixXd gx(Eigen::Index(g.batch) * length_, g.channels);
    for (int b = 0; b < g.batch; ++b)
      gx.middleRows(Eigen::Index(b) * length_, length_) =
          (g.data.row(b) / double(length_)).replicate(length_, 1);
    return Value::seq(std::move(gx), g.batch, length_, g.channels);
  }
  LayerSpec spec() const override { return {LayerSpec::GlobalPool, 0, 0, 0, 0.0}; }

 private:
  int length_ = 0;
};

// ---------------------------------------------------------------------------
// Dense layer computing y = W x + b per row, W stored in the (out x in)
// orientation.
class DenseLayer : public Layer {
 public:
  DenseLayer(int f_in, int f_out) : f_in_(f_in), f_out_(f_out) {
    w_.setZero(f_out, f_in);
    w_grad_.setZero(f_out, f_in);
    b_.setZero(1, f_out);
    b_grad_.setZero(1, f_out);
  }

  void init(Rng& rng) {
    const double a = 1.0 / std::sqrt(double(f_in_));
    for (int i = 0; i < f_out_; ++i)
      for (int j = 0; j < f_in_; ++j) w_(i, j) = rng.uniform(-a, a);
    b_.setZero();
  }

  Value forward(const Value& x, bool) override {
    if (!x.flat() || x.channels != f_in_) throw DataError("dense: shape mismatch");
    input_ = x;
    Eigen::MatrixXd out = x.data * w_.transpose();
    out.rowwise() += b_.row(0);
    return Value::flat_rows(std::move(out));
  }
  Value backward(const Value& g) override {
    w_grad_.noalias() += g.data.transpose() * input_.data;
    b_grad_.row(0) += g.data.colwise().sum();
    return Value::flat_rows(g.data * w_);
  }

  void collect_params(std::vector<ParamRef>& out) override {
    out.push_back({&w_, &w_grad_, true});
    out.push_back({&b_, &b_grad_, false});
  }

  LayerSpec spec() const override { return {LayerSpec::Dense, f_in_, f_out_, 0, 0.0}; }
  void write_params(ByteWriter& w) const override {
    detail::write_matrix_rm(w, w_);
    detail::write_matrix_rm(w, b_);
  }
  void read_params(ByteReader& r) override {
    detail::read_matrix_rm(r, w_);
    detail::read_matrix_rm(r, b_);
  }

  Eigen::MatrixXd& weight() { return w_; }
  Eigen::MatrixXd& bias() { return b_; }

 private:
  int f_in_, f_out_;
  Eigen::MatrixXd w_, w_grad_, b_, b_grad_;
  Value input_;
};

// ---------------------------------------------------------------------------
// Softmax cross-entropy with max subtraction. Returns the mean loss, the
// probability rows and the logit gradient (p - onehot) / batch.
struct SoftmaxCrossEntropy {
  double loss = 0.0;
  Eigen::MatrixXd probs;
  Eigen::MatrixXd dlogits;
};

inline SoftmaxCrossEntropy softmax_cross_entropy(const Eigen::MatrixXd& logits,
                                                 const std::vector<int>& labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw DataError("softmax: label count mismatch");
  SoftmaxCrossEntropy out;
  out.probs.resizeLike(logits);
  out.dlogits.resizeLike(logits);
  const double n = double(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
    out.probs.row(i) = e / e.sum();
    const int cls = labels[static_cast<std::size_t>(i)];
    if (cls < 0 || cls >= logits.cols()) throw DataError("softmax: bad class");
    out.loss -= std::log(std::max(out.probs(i, cls), 1e-300));
    out.dlogits.row(i) = out.probs.row(i) / n;
    out.dlogits(i, cls) -= 1.0 / n;
  }
  out.loss /= n;
  return out;
}

// ---------------------------------------------------------------------------
// Model: an ordered layer stack ending in a structural Softmax marker.
struct ModelSpec {
  std::vector<LayerSpec> layers;
  int64_t feature_length = 0;
  bool se_enabled = false;
  int se_reduction = 0;
};

inline std::unique_ptr<Layer> make_layer(const LayerSpec& s) {
  switch (s.kind) {
    case LayerSpec::Conv1d:
      return std::make_unique<Conv1dLayer>(s.i0, s.i1, s.i2);
    case LayerSpec::BatchNorm:
      return std::make_unique<BatchNormLayer>(s.i0, s.f0);
    case LayerSpec::Relu:
      return std::make_unique<ReluLayer>();
    case LayerSpec::MaxPool:
      return std::make_unique<MaxPoolLayer>();
    case LayerSpec::Se:
      return std::make_unique<SeLayer>(s.i0, s.i1);
    case LayerSpec::GlobalPool:
      return std::make_unique<GlobalPoolLayer>();
    case LayerSpec::Dense:
      return std::make_unique<DenseLayer>(s.i0, s.i1);
    case LayerSpec::Softmax:
      return nullptr;  // structural marker, not an executable layer
  }
  throw DataError("unknown layer kind");
}

class Model {
 public:
  Model() = default;
  explicit Model(ModelSpec spec) : spec_(std::move(spec)) {
    if (spec_.layers.empty() || spec_.layers.back().kind != LayerSpec::Softmax)
      throw DataError("model: spec must end with a terminal softmax");
    for (std::size_t i = 0; i + 1 < spec_.layers.size(); ++i) {
      if (spec_.layers[i].kind == LayerSpec::Softmax)
        throw DataError("model: softmax must be terminal");
      layers_.push_back(make_layer(spec_.layers[i]));
    }
  }

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelSpec& spec() const { return spec_; }
  std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }

  Eigen::MatrixXd forward_logits(const Value& input, bool training) {
    Value v = input;
    for (auto& l : layers_) v = l->forward(v, training);
    if (!v.flat()) throw DataError("model: head did not produce flat rows");
    return v.data;
  }

  void backward(const Eigen::MatrixXd& dlogits, int batch) {
    Value g = Value::flat_rows(dlogits);
    g.batch = batch;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      g = (*it)->backward(g);
  }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    for (auto& l : layers_) l->collect_params(out);
    return out;
  }

  void zero_grads() {
    for (auto p : params()) p.grad->setZero();
  }

  Eigen::MatrixXd predict_proba(const Value& input) {
    Eigen::MatrixXd logits = forward_logits(input, false);
    Eigen::MatrixXd probs(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double m = logits.row(i).maxCoeff();
      Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
      probs.row(i) = e / e.sum();
    }
    return probs;
  }

 private:
  ModelSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Reference classifier stack: two conv/bn/relu/pool modules (16 then 32
// kernels), optional SE before global pooling, dense head, softmax.
inline Model build_model(int64_t feature_length, bool se_enabled, uint64_t seed,
                         int se_reduction = 4) {
  if (feature_length < 4) throw DataError("build_model: feature length must be >= 4");
  ModelSpec spec;
  spec.feature_length = feature_length;
  spec.se_enabled = se_enabled;
  spec.se_reduction = se_enabled ? se_reduction : 0;
  spec.layers = {
      {LayerSpec::Conv1d, 2, 1, 16, 0.0},
      {LayerSpec::BatchNorm, 16, 0, 0, 1e-5},
      {LayerSpec::Relu, 0, 0, 0, 0.0},
      {LayerSpec::MaxPool, 0, 0, 0, 0.0},
      {LayerSpec::Conv1d, 2, 16, 32, 0.0},
      {LayerSpec::BatchNorm, 32, 0, 0, 1e-5},
      {LayerSpec::Relu, 0, 0, 0, 0.0},
      {LayerSpec::MaxPool, 0, 0, 0, 0.0},
  };
  if (se_enabled) spec.layers.push_back({LayerSpec::Se, 32, se_reduction, 0, 0.0});
  spec.layers.push_back({LayerSpec::GlobalPool, 0, 0, 0, 0.0});
  spec.layers.push_back({LayerSpec::Dense, 32, 2, 0, 0.0});
  spec.layers.push_back({LayerSpec::Softmax, 2, 0, 0, 0.0});

  Model model(std::move(spec));
  Rng rng(seed);
  for (auto& l : model.layers()) {
    if (auto* conv = dynamic_cast<Conv1dLayer*>(l.get())) conv->init(rng);
    if (auto* se = dynamic_cast<SeLayer*>(l.get())) se->init(rng);
    if (auto* dense = dynamic_cast<DenseLayer*>(l.get())) dense->init(rng);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Adam with bias-corrected moment estimates:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
//   theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 coefficient, decay-flagged params only
};

struct AdamState {
  uint64_t t = 0;
  std::vector<Eigen::MatrixXd> m, v;

  void ensure(const std::vector<ParamRef>& params) {
    if (!m.empty()) {
      if (m.size() != params.size())
        throw DataError("adam: state does not match parameter list");
      return;
    }
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
      m.emplace_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
      v.emplace_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
    }
  }
};

inline void adam_step(const std::vector<ParamRef>& params, AdamState& state,
                      const AdamConfig& cfg) {
  state.ensure(params);
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::MatrixXd g = *params[i].grad;
    if (params[i].weight_decay && cfg.weight_decay > 0.0)
      g += cfg.weight_decay * *params[i].value;
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    Eigen::ArrayXXd mhat = state.m[i].array() / bc1;
    Eigen::ArrayXXd vhat = state.v[i].array() / bc2;
    params[i].value->array() -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint format ("GMEM"): header with the layer list and training
// provenance, float64 parameter payload (including batchnorm running
// statistics), feature normalization statistics, optional Adam state.

struct CheckpointMeta {
  uint8_t feature_kind = 0;
  uint16_t n_qubits = 0;
  uint64_t feature_length = 0;
  uint64_t dataset_digest = 0;
  uint64_t split_seed = 0;
  double train_fraction = 0.0;
};

inline std::string save_checkpoint(Model& model, const NormStats& stats,
                                   const CheckpointMeta& meta,
                                   const AdamState* adam = nullptr) {
  ByteWriter w;
  w.magic("GMEM");
  w.u32(1);
  w.u8(meta.feature_kind);
  w.u16(meta.n_qubits);
  w.u64(meta.feature_length);
  const auto& spec = model.spec();
  w.u8(spec.se_enabled ? 1 : 0);
  w.u32(static_cast<uint32_t>(spec.se_reduction));
  w.u64(meta.dataset_digest);
  w.u64(meta.split_seed);
  w.f64(meta.train_fraction);
  w.u32(static_cast<uint32_t>(spec.layers.size()));
  for (const auto& ls : spec.layers) {
    w.u8(static_cast<uint8_t>(ls.kind));
    w.u32(static_cast<uint32_t>(ls.i0));
    w.u32(static_cast<uint32_t>(ls.i1));
    w.u32(static_cast<uint32_t>(ls.i2));
    w.f64(ls.f0);
  }
  for (const auto& l : model.layers()) l->write_params(w);
  w.u64(stats.mean.size());
  w.f64s(stats.mean.data(), stats.mean.size());
  w.f64s(stats.scale.data(), stats.scale.size());
  w.u8(adam ? 1 : 0);
  if (adam) {
    w.u64(adam->t);
    for (const auto& m : adam->m) detail::write_matrix_rm(w, m);
    for (const auto& v : adam->v) detail::write_matrix_rm(w, v);
  }
  return w.data();
}

struct Checkpoint {
  Model model;
  NormStats stats;
  CheckpointMeta meta;
  std::optional<AdamState> adam;
};

inline Checkpoint load_checkpoint(const std::string& bytes) {
  ByteReader r(bytes);
  r.expect_magic("GMEM", "checkpoint");
  if (r.u32() != 1) throw DataError("checkpoint: unsupported version");
  Checkpoint ck;
  ck.meta.feature_kind = r.u8();
  ck.meta.n_qubits = r.u16();
  ck.meta.feature_length = r.u64();
  ModelSpec spec;
  spec.feature_length = static_cast<int64_t>(ck.meta.feature_length);
  spec.se_enabled = r.u8() != 0;
  spec.se_reduction = static_cast<int>(r.u32());
  ck.meta.dataset_digest = r.u64();
  ck.meta.split_seed = r.u64();
  ck.meta.train_fraction = r.f64();
  const uint32_t layer_count = r.u32();
  if (layer_count > 64) throw DataError("checkpoint: implausible layer count");
  for (uint32_t i = 0; i < layer_count; ++i) {
    LayerSpec ls;
    ls.kind = static_cast<LayerSpec::Kind>(r.u8());
    ls.i0 = static_cast<int>(r.u32());
    ls.i1 = static_cast<int>(r.u32());
    ls.i2 = static_cast<int>(r.u32());
    ls.f0 = r.f64();
    spec.layers.push_back(ls);
  }
  ck.model = Model(std::move(spec));
  for (auto& l : ck.model.layers()) l->read_params(r);
  const uint64_t stat_len = r.u64();
  ck.stats.mean.resize(stat_len);
  ck.stats.scale.resize(stat_len);
  r.f64s(ck.stats.mean.data(), stat_len);
  r.f64s(ck.stats.scale.data(), stat_len);
  if (r.u8()) {
    AdamState adam;
    adam.t = r.u64();
    auto params = ck.model.params();
    for (const auto& p : params)
      adam.m.emplace_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
    for (auto& m : adam.m) detail::read_matrix_rm(r, m);
    for (const auto& p : params)
      adam.v.emplace_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
    for (auto& v : adam.v) detail::read_matrix_rm(r, v);
    ck.adam = std::move(adam);
  }
  return ck;
}

}  // namespace gme::nn
