#include <catch2/catch_amalgamated.hpp>

#include "gmedetect/nn.hpp"

using namespace gme;
using namespace gme::nn;
using Catch::Approx;

namespace {

Value seq_value(const std::vector<double>& data, int batch, int length,
                int channels) {
  Eigen::MatrixXd m(Eigen::Index(batch) * length, channels);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = data[k++];
  return Value::seq(std::move(m), batch, length, channels);
}

Value random_seq(int batch, int length, int channels, uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(Eigen::Index(batch) * length, channels);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  return Value::seq(std::move(m), batch, length, channels);
}

// Finite-difference oracle: checks the input and parameter gradients of a
// layer against central differences of the probe loss sum(output * R).
void gradcheck(Layer& layer, const Value& input, uint64_t probe_seed,
               double step = 1e-5, double tol = 1e-4) {
  auto loss_of = [&](const Value& x) {
    Value out = layer.forward(x, true);
    Rng probe(probe_seed);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < out.data.rows(); ++i)
      for (Eigen::Index j = 0; j < out.data.cols(); ++j)
        acc += out.data(i, j) * probe.uniform(-1.0, 1.0);
    return acc;
  };

  // Analytic gradients.
  std::vector<ParamRef> params;
  layer.collect_params(params);
  for (auto p : params) p.grad->setZero();
  Value out = layer.forward(input, true);
  Value g = out;
  {
    Rng probe(probe_seed);
    for (Eigen::Index i = 0; i < g.data.rows(); ++i)
      for (Eigen::Index j = 0; j < g.data.cols(); ++j)
        g.data(i, j) = probe.uniform(-1.0, 1.0);
  }
  Value gin = layer.backward(g);

  double grad_scale = 1e-6;
  grad_scale = std::max(grad_scale, gin.data.cwiseAbs().maxCoeff());
  for (auto p : params)
    if (p.grad->size() > 0)
      grad_scale = std::max(grad_scale, p.grad->cwiseAbs().maxCoeff());

  // Input gradient.
  Value x = input;
  for (Eigen::Index i = 0; i < x.data.rows(); ++i)
    for (Eigen::Index j = 0; j < x.data.cols(); ++j) {
      const double saved = x.data(i, j);
      x.data(i, j) = saved + step;
      const double up = loss_of(x);
      x.data(i, j) = saved - step;
      const double dn = loss_of(x);
      x.data(i, j) = saved;
      const double fd = (up - dn) / (2.0 * step);
      REQUIRE(std::abs(fd - gin.data(i, j)) <= tol * grad_scale);
    }

  // Parameter gradients (re-run so cached activations match the loss).
  for (auto p : params) p.grad->setZero();
  layer.forward(input, true);
  layer.backward(g);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Eigen::MatrixXd& w = *params[pi].value;
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        const double saved = w(i, j);
        w(i, j) = saved + step;
        const double up = loss_of(input);
        w(i, j) = saved - step;
        const double dn = loss_of(input);
        w(i, j) = saved;
        const double fd = (up - dn) / (2.0 * step);
        REQUIRE(std::abs(fd - (*params[pi].grad)(i, j)) <= tol * grad_scale);
      }
  }
}

}  // namespace

TEST_CASE("conv1d hand examples with the front zero pad") {
  Conv1dLayer conv(2, 1, 1);
  auto x = seq_value({1, 2, 3}, 1, 3, 1);

  conv.tap(0)(0, 0) = 1.0;  // multiplies x_{t-1}
  conv.tap(1)(0, 0) = 1.0;  // multiplies x_t
  auto y = conv.forward(x, true);
  REQUIRE(y.data(0, 0) == 1.0);
  REQUIRE(y.data(1, 0) == 3.0);
  REQUIRE(y.data(2, 0) == 5.0);

  conv.tap(0)(0, 0) = 0.0;
  conv.tap(1)(0, 0) = 1.0;
  y = conv.forward(x, true);
  REQUIRE(y.data(0, 0) == 1.0);
  REQUIRE(y.data(1, 0) == 2.0);
  REQUIRE(y.data(2, 0) == 3.0);

  conv.tap(0)(0, 0) = 1.0;
  conv.tap(1)(0, 0) = 0.0;
  y = conv.forward(x, true);
  REQUIRE(y.data(0, 0) == 0.0);
  REQUIRE(y.data(1, 0) == 1.0);
  REQUIRE(y.data(2, 0) == 2.0);
}

TEST_CASE("batchnorm hand examples") {
  BatchNormLayer bn(1);
  auto x = seq_value({-1.0, 1.0}, 2, 1, 1);
  auto y = bn.forward(x, true);
  const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
  REQUIRE(y.data(0, 0) == Approx(-expected).margin(1e-12));
  REQUIRE(y.data(1, 0) == Approx(expected).margin(1e-12));

  // Constant input normalizes to zero.
  BatchNormLayer bn2(1);
  auto c = seq_value({3.0, 3.0, 3.0, 3.0}, 2, 2, 1);
  auto yc = bn2.forward(c, true);
  REQUIRE(yc.data.cwiseAbs().maxCoeff() < 1e-9);

  // Zero gamma pins the output at beta.
  BatchNormLayer bn3(1);
  bn3.gamma()(0, 0) = 0.0;
  bn3.beta()(0, 0) = 0.7;
  auto yb = bn3.forward(x, true);
  REQUIRE(yb.data(0, 0) == 0.7);
  REQUIRE(yb.data(1, 0) == 0.7);

  BatchNormLayer bn4(1);
  auto single = seq_value({1.0, 2.0}, 1, 2, 1);
  REQUIRE_THROWS_AS(bn4.forward(single, true), DataError);
  REQUIRE_NOTHROW(bn4.forward(single, false));
}

TEST_CASE("relu basics") {
  ReluLayer relu;
  auto x = seq_value({-1.0, 0.0, 2.0}, 1, 3, 1);
  auto y = relu.forward(x, true);
  REQUIRE(y.data(0, 0) == 0.0);
  REQUIRE(y.data(1, 0) == 0.0);
  REQUIRE(y.data(2, 0) == 2.0);
  auto yy = relu.forward(y, true);
  REQUIRE((yy.data - y.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("maxpool hand examples and odd-length floor") {
  MaxPoolLayer pool;
  auto x = seq_value({1, 3, 2, 5}, 1, 4, 1);
  auto y = pool.forward(x, true);
  REQUIRE(y.length == 2);
  REQUIRE(y.data(0, 0) == 3.0);
  REQUIRE(y.data(1, 0) == 5.0);

  auto odd = seq_value({1, 3, 2}, 1, 3, 1);
  auto yo = pool.forward(odd, true);
  REQUIRE(yo.length == 1);
  REQUIRE(yo.data(0, 0) == 3.0);

  auto neg = seq_value({-2, -1}, 1, 2, 1);
  REQUIRE(pool.forward(neg, true).data(0, 0) == -1.0);

  auto tiny = seq_value({5.0}, 1, 1, 1);
  REQUIRE_THROWS_AS(pool.forward(tiny, true), DataError);
}

TEST_CASE("global average pool") {
  GlobalPoolLayer gap;
  auto x = seq_value({1, 2, 3}, 1, 3, 1);
  auto y = gap.forward(x, true);
  REQUIRE(y.flat());
  REQUIRE(y.data(0, 0) == Approx(2.0));

  auto c = seq_value({4, 4, 4, 4}, 2, 2, 1);
  auto yc = gap.forward(c, true);
  REQUIRE(yc.data(0, 0) == 4.0);
  REQUIRE(yc.data(1, 0) == 4.0);

  auto z = seq_value({0, 0, 0, 0}, 1, 2, 2);
  REQUIRE(gap.forward(z, true).data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("se block limits") {
  SeLayer se(4, 2);
  auto u = random_seq(2, 3, 4, 99);

  // Zero weights: sigmoid(0) = 1/2 gates every channel at one half.
  auto y = se.forward(u, true);
  REQUIRE((y.data - 0.5 * u.data).cwiseAbs().maxCoeff() < 1e-12);

  // Saturated gate: output approaches the input.
  se.b2().setConstant(50.0);
  y = se.forward(u, true);
  REQUIRE((y.data - u.data).cwiseAbs().maxCoeff() < 1e-9);

  // Zero input stays zero.
  Value zero = seq_value(std::vector<double>(24, 0.0), 2, 3, 4);
  auto yz = se.forward(zero, true);
  REQUIRE(yz.data.cwiseAbs().maxCoeff() == 0.0);

  REQUIRE_THROWS_AS(SeLayer(6, 4), DataError);
}

TEST_CASE("dense layer semantics y = Wx + b") {
  DenseLayer dense(3, 3);
  dense.weight().setIdentity();
  auto x = Value::flat_rows(Eigen::MatrixXd::Random(2, 3));
  auto y = dense.forward(x, true);
  REQUIRE((y.data - x.data).cwiseAbs().maxCoeff() < 1e-15);

  DenseLayer d2(3, 2);
  Rng rng(5);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) d2.weight()(i, j) = rng.uniform(-1, 1);
  d2.bias()(0, 0) = 0.25;
  d2.bias()(0, 1) = -0.5;
  Eigen::MatrixXd e1 = Eigen::MatrixXd::Zero(1, 3);
  e1(0, 0) = 1.0;
  auto ye = d2.forward(Value::flat_rows(e1), true);
  REQUIRE(ye.data(0, 0) == Approx(d2.weight()(0, 0) + 0.25));
  REQUIRE(ye.data(0, 1) == Approx(d2.weight()(1, 0) - 0.5));

  DenseLayer d3(3, 2);
  auto yz = d3.forward(Value::flat_rows(Eigen::MatrixXd::Random(1, 3)), true);
  REQUIRE(yz.data(0, 0) == 0.0);  // zero weights emit the (zero) bias
}

TEST_CASE("softmax cross entropy examples and properties") {
  Eigen::MatrixXd logits(1, 2);
  logits << 0.0, 0.0;
  auto r = softmax_cross_entropy(logits, {0});
  REQUIRE(r.probs(0, 0) == Approx(0.5).margin(1e-15));
  REQUIRE(r.loss == Approx(std::log(2.0)).margin(1e-12));

  logits << std::log(2.0), 0.0;
  r = softmax_cross_entropy(logits, {1});
  REQUIRE(r.probs(0, 0) == Approx(2.0 / 3.0).margin(1e-12));
  REQUIRE(r.probs(0, 1) == Approx(1.0 / 3.0).margin(1e-12));

  // Shift invariance and probability-vector property.
  Eigen::MatrixXd l2(3, 2);
  l2 << 1.7, -0.3, 400.0, 398.0, -5.0, 5.0;
  auto a = softmax_cross_entropy(l2, {0, 1, 1});
  Eigen::MatrixXd shifted = l2;
  shifted.array() += 123.0;
  auto b = softmax_cross_entropy(shifted, {0, 1, 1});
  REQUIRE((a.probs - b.probs).cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(a.probs.row(i).sum() == Approx(1.0).margin(1e-12));
    REQUIRE(a.probs.row(i).minCoeff() > 0.0);
    REQUIRE(a.probs.row(i).maxCoeff() < 1.0);
  }
}

TEST_CASE("finite-difference gradients per layer") {
  {
    Conv1dLayer conv(2, 3, 4);
    Rng rng(11);
    conv.init(rng);
    gradcheck(conv, random_seq(2, 5, 3, 21), 1001);
  }
  {
    BatchNormLayer bn(3);
    gradcheck(bn, random_seq(3, 4, 3, 22), 1002);
  }
  {
    ReluLayer relu;
    gradcheck(relu, random_seq(2, 6, 2, 23), 1003);
  }
  {
    MaxPoolLayer pool;
    gradcheck(pool, random_seq(2, 6, 3, 24), 1004);
  }
  {
    SeLayer se(4, 2);
    Rng rng(12);
    se.init(rng);
    gradcheck(se, random_seq(2, 5, 4, 25), 1005);
  }
  {
    GlobalPoolLayer gap;
    gradcheck(gap, random_seq(2, 5, 3, 26), 1006);
  }
  {
    DenseLayer dense(5, 3);
    Rng rng(13);
    dense.init(rng);
    Rng xr(27);
    Eigen::MatrixXd x(4, 5);
    for (Eigen::Index i = 0; i < 4; ++i)
      for (Eigen::Index j = 0; j < 5; ++j) x(i, j) = xr.uniform(-1, 1);
    gradcheck(dense, Value::flat_rows(x), 1007);
  }
}

TEST_CASE("se gate saturated at one passes the trunk gradient through") {
  SeLayer se(2, 2);
  se.b2().setConstant(60.0);  // s == 1 to machine precision
  auto u = random_seq(1, 4, 2, 31);
  se.forward(u, true);
  Value g = random_seq(1, 4, 2, 32);
  auto gin = se.backward(g);
  // With s == 1 the sigmoid derivative vanishes, so only the trunk remains.
  REQUIRE((gin.data - g.data).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("softmax-CE gradient matches finite differences") {
  Rng rng(77);
  Eigen::MatrixXd logits(3, 2);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) logits(i, j) = rng.uniform(-2, 2);
  std::vector<int> labels = {0, 1, 0};
  auto r = softmax_cross_entropy(logits, labels);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) {
      Eigen::MatrixXd up = logits, dn = logits;
      up(i, j) += h;
      dn(i, j) -= h;
      const double fd = (softmax_cross_entropy(up, labels).loss -
                         softmax_cross_entropy(dn, labels).loss) /
                        (2 * h);
      REQUIRE(std::abs(fd - r.dlogits(i, j)) < 1e-7);
    }
}

TEST_CASE("adam hand examples") {
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(1, 1);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Constant(1, 1, 1.0);
  std::vector<ParamRef> params = {{&theta, &grad, false}};
  AdamState state;
  adam_step(params, state, {.lr = 0.001});
  REQUIRE(theta(0, 0) == Approx(-0.001 / (1.0 + 1e-8)).margin(1e-12));

  // Zero gradient with zero state leaves parameters unchanged.
  Eigen::MatrixXd theta2 = Eigen::MatrixXd::Constant(1, 1, 0.4);
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 1);
  std::vector<ParamRef> p2 = {{&theta2, &zero, false}};
  AdamState s2;
  adam_step(p2, s2, {.lr = 0.001});
  REQUIRE(theta2(0, 0) == 0.4);

  // Scaling the gradient at step one leaves the step near lr (sign-like).
  Eigen::MatrixXd theta3 = Eigen::MatrixXd::Zero(1, 1);
  Eigen::MatrixXd g10 = Eigen::MatrixXd::Constant(1, 1, 10.0);
  std::vector<ParamRef> p3 = {{&theta3, &g10, false}};
  AdamState s3;
  adam_step(p3, s3, {.lr = 0.001});
  REQUIRE(std::abs(theta3(0, 0)) == Approx(0.001).epsilon(1e-6));
}

TEST_CASE("one adam step reduces a 1-D quadratic loss") {
  for (double magnitude : {1e-3, 1e-1, 1.0, 10.0, 1e3}) {
    Eigen::MatrixXd theta = Eigen::MatrixXd::Constant(1, 1, magnitude);
    Eigen::MatrixXd grad = theta;  // d/dtheta of 0.5 theta^2
    std::vector<ParamRef> params = {{&theta, &grad, false}};
    AdamState state;
    adam_step(params, state, {.lr = 0.001});
    REQUIRE(0.5 * theta(0, 0) * theta(0, 0) < 0.5 * magnitude * magnitude);
  }
}

TEST_CASE("build_model structure and determinism") {
  auto plain = build_model(32, false, 7);
  auto gated = build_model(32, true, 7);
  REQUIRE(gated.spec().layers.size() == plain.spec().layers.size() + 1);
  REQUIRE(plain.spec().layers.back().kind == LayerSpec::Softmax);

  // A 32-long input reaches the head through two floor-halvings.
  auto x = random_seq(2, 32, 1, 55);
  Value v = x;
  auto& layers = plain.layers();
  for (std::size_t i = 0; i < 8; ++i) v = layers[i]->forward(v, true);
  REQUIRE(v.length == 8);
  REQUIRE(v.channels == 32);

  auto logits = plain.forward_logits(x, true);
  REQUIRE(logits.rows() == 2);
  REQUIRE(logits.cols() == 2);

  // Same seed, bitwise identical parameters.
  auto again = build_model(32, true, 7);
  auto pa = gated.params();
  auto pb = again.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    REQUIRE((*pa[i].value - *pb[i].value).cwiseAbs().maxCoeff() == 0.0);

  REQUIRE_THROWS_AS(build_model(3, false, 1), DataError);
}

TEST_CASE("model overfits a 16-sample separable toy set") {
  const int n = 16, len = 8;
  Rng rng(2024);
  Eigen::MatrixXd features(n * len, 1);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    const int cls = i % 2;
    labels[i] = cls;
    for (int t = 0; t < len; ++t)
      features(i * len + t, 0) =
          (cls == 0 ? -0.5 : 0.5) + 0.05 * rng.uniform(-1, 1);
  }
  Value input = Value::seq(features, n, len, 1);

  auto model = build_model(len, false, 3);
  AdamState adam;
  double loss = 1.0;
  for (int step = 0; step < 500 && loss >= 0.01; ++step) {
    model.zero_grads();
    auto logits = model.forward_logits(input, true);
    auto ce = softmax_cross_entropy(logits, labels);
    loss = ce.loss;
    model.backward(ce.dlogits, n);
    adam_step(model.params(), adam, {.lr = 0.001});
  }
  REQUIRE(loss < 0.01);
}

TEST_CASE("checkpoint round trip preserves behaviour") {
  auto model = build_model(16, true, 99);
  NormStats stats;
  stats.mean.assign(16, 0.25);
  stats.scale.assign(16, 2.0);
  CheckpointMeta meta;
  meta.feature_kind = 1;
  meta.n_qubits = 4;
  meta.feature_length = 16;
  meta.dataset_digest = 0xDEADBEEF;
  meta.split_seed = 42;
  meta.train_fraction = 0.7;

  auto x = random_seq(3, 16, 1, 5);
  // One training pass moves the batchnorm running statistics.
  softmax_cross_entropy(model.forward_logits(x, true), {0, 1, 0});
  auto before = model.predict_proba(x);

  auto bytes = save_checkpoint(model, stats, meta);
  auto loaded = load_checkpoint(bytes);
  REQUIRE(loaded.meta.n_qubits == 4);
  REQUIRE(loaded.meta.dataset_digest == 0xDEADBEEF);
  REQUIRE(loaded.meta.train_fraction == 0.7);
  REQUIRE(loaded.stats.scale[3] == 2.0);
  REQUIRE(loaded.model.spec().se_enabled);

  auto after = loaded.model.predict_proba(x);
  REQUIRE((before - after).cwiseAbs().maxCoeff() == 0.0);

  // Round trip with Adam state.
  AdamState adam;
  model.zero_grads();
  auto ce2 = softmax_cross_entropy(model.forward_logits(x, true), {0, 1, 0});
  model.backward(ce2.dlogits, 3);
  adam_step(model.params(), adam, {.lr = 0.001});
  auto bytes2 = save_checkpoint(model, stats, meta, &adam);
  auto loaded2 = load_checkpoint(bytes2);
  REQUIRE(loaded2.adam.has_value());
  REQUIRE(loaded2.adam->t == 1);
  REQUIRE((loaded2.adam->m[0] - adam.m[0]).cwiseAbs().maxCoeff() == 0.0);
}
