#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cslab/common/errors.hpp"
#include "cslab/numerics/checkpoint.hpp"
#include "cslab/numerics/layers.hpp"
#include "cslab/numerics/rmsprop.hpp"
#include "cslab/numerics/tape.hpp"
#include "gradient_suite.hpp"

using namespace cslab;
using namespace cslab::nn;
using cslab::testing::grad_check;

namespace {

Parameter random_param(const std::string& name, std::size_t r, std::size_t c, Rng& rng,
                       double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Parameter p{name, Tensor::matrix(r, c), {}};
  for (double& v : p.value.values()) v = d(rng);
  return p;
}

constexpr double kPrimitiveTol = 1e-4;
constexpr int kRandomTrials = 50;

}  // namespace

TEST(Matmul, IdentityAndHandExample) {
  Tape t;
  Var i2 = t.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  Var m = t.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  Var out = matmul(i2, m);
  EXPECT_EQ(out.value().storage(), (std::vector<double>{1, 2, 3, 4}));

  Var a = t.constant(Tensor::from_rows({{1, 2}}));
  Var b = t.constant(Tensor::from_rows({{3}, {4}}));
  EXPECT_DOUBLE_EQ(matmul(a, b).value().item(), 11.0);
}

TEST(Matmul, ShapeMismatchThrows) {
  Tape t;
  Var a = t.constant(Tensor::matrix(2, 3));
  Var b = t.constant(Tensor::matrix(2, 3));
  EXPECT_THROW(matmul(a, b), DimensionError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  Parameter a = random_param("a", 5, 4, rng);
  Parameter b = random_param("b", 4, 3, rng);
  auto r = grad_check({&a, &b}, [&](Tape& t) { return sum(matmul(t.leaf(a), t.leaf(b))); });
  EXPECT_LT(r.relative_error, kPrimitiveTol);
}

TEST(Elementwise, TrivialValues) {
  Tape t;
  EXPECT_DOUBLE_EQ(tanh(t.constant(Tensor::scalar(0))).value().item(), 0.0);
  EXPECT_DOUBLE_EQ(sigmoid(t.constant(Tensor::scalar(0))).value().item(), 0.5);
  EXPECT_DOUBLE_EQ(relu(t.constant(Tensor::scalar(-3))).value().item(), 0.0);
  EXPECT_DOUBLE_EQ(relu(t.constant(Tensor::scalar(3))).value().item(), 3.0);
}

TEST(Elementwise, IncompatibleShapesThrow) {
  Tape t;
  Var a = t.constant(Tensor::matrix(2, 3));
  Var b = t.constant(Tensor::matrix(3, 2));
  EXPECT_THROW(add(a, b), DimensionError);
  EXPECT_THROW(mul(a, b), DimensionError);
  EXPECT_THROW(add_bias(a, t.constant(Tensor::matrix(1, 2))), DimensionError);
}

TEST(Elementwise, ScalarBroadcast) {
  Tape t;
  Var a = t.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  Var s = t.constant(Tensor::scalar(10));
  EXPECT_EQ(add(a, s).value().storage(), (std::vector<double>{11, 12, 13, 14}));
  EXPECT_EQ(mul(s, a).value().storage(), (std::vector<double>{10, 20, 30, 40}));
  EXPECT_EQ(sub(s, a).value().storage(), (std::vector<double>{9, 8, 7, 6}));
}

// Every differentiable primitive against central differences on 50 random
// inputs.
TEST(Gradients, AllPrimitivesMatchFiniteDifferences) {
  const auto errors = cslab::testing::primitive_gradient_errors(kRandomTrials, 2024);
  EXPECT_EQ(errors.size(), 21u);
  for (const auto& [name, err] : errors) EXPECT_LT(err, kPrimitiveTol) << name;
}

TEST(Tape, EachOperationVisitedOnceAndGradientsAccumulate) {
  Parameter x{"x", Tensor::scalar(3.0), {}};
  x.zero_grad();
  Tape t;
  Var xv = t.leaf(x);
  Var y = add(mul(xv, xv), xv);  // x^2 + x
  Var loss = sum(y);
  t.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad.item(), 7.0);  // 2x + 1
  EXPECT_EQ(t.backward_visits(), 3u);    // mul, add, sum
}

TEST(Tape, DeterministicReplay) {
  auto run = [] {
    Rng rng(11);
    Linear l("l", 6, 3, rng);
    Tensor x = Tensor::matrix(4, 6);
    std::normal_distribution<double> d;
    for (double& v : x.values()) v = d(rng);
    Tape t;
    Var loss = softmax_cross_entropy(l.forward(t, t.constant(x)), std::vector<int>{0, 1, 2, 1});
    t.backward(loss);
    return std::make_pair(loss.value().item(), l.weight.grad.storage());
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Tape, FrozenParametersReceiveNoGradient) {
  Parameter p{"p", Tensor::scalar(2.0), {}};
  p.zero_grad();
  const Parameter& cp = p;
  Tape t;
  t.backward(sum(mul(bind(t, cp), t.constant(Tensor::scalar(5)))));
  EXPECT_DOUBLE_EQ(p.grad.item(), 0.0);
}

TEST(Tape, StraightThroughPassesGradientUnchanged) {
  Parameter x{"x", Tensor::row({0.3, -0.8}), {}};
  x.zero_grad();
  Tape t;
  Var st = straight_through(t.leaf(x), Tensor::row({0.0, -1.0}));
  EXPECT_EQ(st.value().storage(), (std::vector<double>{0.0, -1.0}));
  t.backward(sum(scale(st, 3.0)));
  EXPECT_EQ(x.grad.storage(), (std::vector<double>{3.0, 3.0}));
}

TEST(SoftmaxCrossEntropy, UniformLogits) {
  Tape t;
  Var logits = t.constant(Tensor::matrix(3, 4, 0.7));
  EXPECT_NEAR(softmax_cross_entropy(logits, std::vector<int>{0, 2, 3}).value().item(),
              std::log(4.0), 1e-12);
}

TEST(SoftmaxCrossEntropy, SaturatedCorrect) {
  Tape t;
  Var logits = t.constant(Tensor::from_rows({{1e6, 0, 0}, {0, 0, 1e6}}));
  EXPECT_NEAR(softmax_cross_entropy(logits, std::vector<int>{0, 2}).value().item(), 0.0, 1e-12);
}

TEST(SoftmaxCrossEntropy, SoftTargetEqualToSoftmaxGivesEntropy) {
  Tensor logits = Tensor::from_rows({{0.2, -1.0, 2.5}, {1.0, 1.0, -0.5}});
  Tensor p = softmax_rows(logits);
  double entropy = 0.0;  // direct computation, averaged over rows
  for (double v : p.values()) entropy -= v * std::log(v);
  entropy /= 2.0;
  Tape t;
  EXPECT_NEAR(softmax_cross_entropy(t.constant(logits), p).value().item(), entropy, 1e-12);
}

TEST(SoftmaxCrossEntropy, RejectsNonNormalizedTargets) {
  Tape t;
  Var logits = t.constant(Tensor::matrix(1, 3));
  EXPECT_THROW(softmax_cross_entropy(logits, Tensor::from_rows({{0.5, 0.4, 0.0}})),
               ValidationError);
  EXPECT_THROW(softmax_cross_entropy(t.constant(Tensor::matrix(1, 1)), std::vector<int>{0}),
               DimensionError);
}

TEST(SoftmaxRows, RowsSumToOne) {
  Rng rng(5);
  std::normal_distribution<double> d(0, 30);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x = Tensor::matrix(4, 7);
    for (double& v : x.values()) v = d(rng);
    Tensor p = softmax_rows(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 7; ++c) s += p.at(r, c);
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Mse, ValuesAndGradient) {
  Tape t;
  Tensor target = Tensor::from_rows({{1, 2}, {3, 4}});
  EXPECT_DOUBLE_EQ(mse(t.constant(target), target).value().item(), 0.0);
  Tensor plus_one = Tensor::from_rows({{2, 3}, {4, 5}});
  EXPECT_DOUBLE_EQ(mse(t.constant(plus_one), target).value().item(), 1.0);
  EXPECT_THROW(mse(t.constant(Tensor::matrix(1, 3)), target), DimensionError);

  Parameter pred{"pred", Tensor::from_rows({{0.5, -1}, {2, 7}}), {}};
  pred.zero_grad();
  Tape t2;
  t2.backward(mse(t2.leaf(pred), target));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(pred.grad[i], 2.0 * (pred.value[i] - target[i]) / 4.0, 1e-12);
  }
  auto r = grad_check({&pred}, [&](Tape& tp) { return mse(tp.leaf(pred), target); });
  EXPECT_LT(r.relative_error, kPrimitiveTol);
}

TEST(Rmsprop, ZeroGradientLeavesParametersUnchanged) {
  Parameter p{"p", Tensor::row({1.0, -2.0}), {}};
  p.zero_grad();
  Rmsprop opt;
  std::vector<Parameter*> ps = {&p};
  opt.step(ps);
  EXPECT_EQ(p.value.storage(), (std::vector<double>{1.0, -2.0}));
}

TEST(Rmsprop, SingleStepFormula) {
  Parameter p{"p", Tensor::scalar(1.0), Tensor::scalar(1.0)};
  Rmsprop opt({.learning_rate = 0.01, .decay = 0.9, .epsilon = 1e-8});
  std::vector<Parameter*> ps = {&p};
  opt.step(ps);
  EXPECT_NEAR(opt.accumulators()[0].item(), 0.1, 1e-15);
  EXPECT_NEAR(p.value.item(), 1.0 - 0.01 / (std::sqrt(0.1) + 1e-8), 1e-15);
}

TEST(Rmsprop, ConvergesOnQuadratic) {
  const RmspropOptions opts{.learning_rate = 0.05, .decay = 0.9, .epsilon = 1e-8};
  // Oracle: the update rule written out directly.
  double p_ref = 5.0, acc = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double g = 2.0 * p_ref;
    acc = opts.decay * acc + (1 - opts.decay) * g * g;
    p_ref -= opts.learning_rate * g / (std::sqrt(acc) + opts.epsilon);
  }
  Parameter p{"p", Tensor::scalar(5.0), {}};
  Rmsprop opt(opts);
  std::vector<Parameter*> ps = {&p};
  for (int i = 0; i < 200; ++i) {
    p.zero_grad();
    Tape t;
    Var v = t.leaf(p);
    t.backward(sum(mul(v, v)));
    opt.step(ps);
    ASSERT_GE(opt.accumulators()[0].item(), 0.0);
  }
  EXPECT_NEAR(p.value.item(), p_ref, 1e-12);
  EXPECT_LT(std::abs(p.value.item()), 0.5);
}

TEST(Rmsprop, NonFiniteGradientNamesParameter) {
  Parameter p{"encoder.weight", Tensor::scalar(1.0), Tensor::scalar(NAN)};
  Rmsprop opt;
  std::vector<Parameter*> ps = {&p};
  try {
    opt.step(ps);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.weight"), std::string::npos);
  }
  EXPECT_EQ(p.value.item(), 1.0);
}

TEST(Gru, ZeroParametersClosedForm) {
  Rng rng(1);
  GruCell cell("gru", 3, 2, rng);
  cell.for_each_parameter([](Parameter& p) { p.value.fill(0.0); });
  Tape t;
  Var h = t.constant(Tensor::row({0.8, -0.4}));
  Var x = t.constant(Tensor::row({1.0, 2.0, 3.0}));
  Var out = cell.forward(t, h, x);
  EXPECT_NEAR(out.value()[0], 0.4, 1e-15);
  EXPECT_NEAR(out.value()[1], -0.2, 1e-15);
  Var zero = cell.forward(t, t.constant(Tensor::matrix(1, 2)), x);
  EXPECT_EQ(zero.value().storage(), (std::vector<double>{0.0, 0.0}));
  EXPECT_THROW(cell.forward(t, h, t.constant(Tensor::matrix(1, 2))), DimensionError);
}

TEST(Gru, GradientOfSquaredNormMatchesFiniteDifferences) {
  Rng rng(3);
  GruCell cell("gru", 4, 3, rng);
  Tensor h0 = random_param("h", 2, 3, rng, 0.5).value;
  Tensor x = random_param("x", 2, 4, rng).value;
  auto params = parameters_of(cell);
  auto r = grad_check(params, [&](Tape& t) {
    Var h = cell.forward(t, t.constant(h0), t.constant(x));
    return sum(mul(h, h));
  });
  EXPECT_LT(r.relative_error, kPrimitiveTol);
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(9);
  Mlp mlp("mlp", std::vector<std::size_t>{3, 5, 2}, false, rng);
  const auto before = parameters_of(std::as_const(mlp));
  std::stringstream ss;
  write_checkpoint(ss, capture(before, R"({"kind":"mlp"})"));
  EXPECT_EQ(ss.str().rfind("CSLAB-CKPT-1\n", 0), 0u);
  Checkpoint loaded = read_checkpoint(ss);
  EXPECT_EQ(loaded.metadata, R"({"kind":"mlp"})");

  Rng other(10);
  Mlp copy("mlp", std::vector<std::size_t>{3, 5, 2}, false, other);
  auto dst = parameters_of(copy);
  restore(dst, loaded);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    EXPECT_EQ(dst[i]->value.storage(), before[i]->value.storage());
  }
}

TEST(Checkpoint, RejectsBadInput) {
  std::stringstream bad("NOT-A-CKPT\n");
  EXPECT_THROW(read_checkpoint(bad), ValidationError);
  Rng rng(1);
  Linear a("l", 2, 3, rng), b("l", 3, 3, rng);
  auto ckpt = capture(parameters_of(std::as_const(a)));
  auto dst = parameters_of(b);
  EXPECT_THROW(restore(dst, ckpt), ValidationError);
}
