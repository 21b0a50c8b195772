#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "kexnet/rng.hpp"
#include "kexnet/tensor.hpp"

using namespace kexnet;

TEST(Forward, SoftmaxOfZerosIsUniform) {
  Tape t;
  Var p = t.softmax(t.constant(Tensor::vector({0, 0})));
  EXPECT_DOUBLE_EQ(t.value(p)[0], 0.5);
  EXPECT_DOUBLE_EQ(t.value(p)[1], 0.5);
  for (std::size_t label : {0u, 1u}) {
    Var ce = t.cross_entropy(p, label);
    EXPECT_NEAR(t.value(ce)[0], std::log(2.0), 1e-15);
  }
}

TEST(Forward, SoftmaxIsStableForLargeLogits) {
  Tape t;
  Var p = t.softmax(t.constant(Tensor::vector({1000, 1000, 998})));
  const double z = 2 + std::exp(-2.0);
  EXPECT_NEAR(t.value(p)[0], 1 / z, 1e-15);
  EXPECT_NEAR(t.value(p)[2], std::exp(-2.0) / z, 1e-15);
}

TEST(Forward, GateFunctionsAtZero) {
  Tape t;
  Var z = t.constant(Tensor::vector({0}));
  EXPECT_EQ(t.value(t.tanh(z))[0], 0.0);
  EXPECT_EQ(t.value(t.sigmoid(z))[0], 0.5);
}

TEST(Forward, MatVecAndShapeErrors) {
  Tape t;
  Parameter w("w", Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var y = t.matvec(t.param(w), t.constant(Tensor::vector({1, 0, -1})));
  EXPECT_EQ(t.value(y), Tensor::vector({-2, -2}));
  EXPECT_EQ(t.ops, 12u);
  EXPECT_THROW(t.matvec(t.param(w), t.constant(Tensor::vector({1, 2}))), ShapeError);
  EXPECT_THROW(t.add(t.constant(Tensor::vector({1})), t.constant(Tensor::vector({1, 2}))), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Forward, NonFiniteOutputIsAnError) {
  Tape t;
  Var big = t.constant(Tensor::vector({1e308, 1e308}));
  EXPECT_THROW(t.add(big, big), std::domain_error);
}

TEST(Forward, ConcatAndSlice) {
  Tape t;
  std::vector<Var> xs{t.constant(Tensor::vector({1, 2})), t.constant(Tensor::vector({3}))};
  Var c = t.concat(xs);
  EXPECT_EQ(t.value(c), Tensor::vector({1, 2, 3}));
  EXPECT_EQ(t.value(t.slice(c, 1, 2)), Tensor::vector({2, 3}));
  EXPECT_THROW(t.slice(c, 2, 2), ShapeError);
}

TEST(Backward, TanhDerivativeAtZero) {
  Tape t;
  Parameter x("x", Tensor::vector({0}));
  x.zero_grad();
  std::vector<Var> one{t.tanh(t.param(x))};
  t.backward(t.mean(one));
  EXPECT_DOUBLE_EQ(x.grad[0], 1.0);
}

TEST(Backward, CrossEntropyOfSoftmaxIsPMinusY) {
  Tape t;
  Parameter z("z", Tensor::vector({0, 0}));
  z.zero_grad();
  t.backward(t.cross_entropy(t.softmax(t.param(z)), 0));
  EXPECT_NEAR(z.grad[0], -0.5, 1e-15);
  EXPECT_NEAR(z.grad[1], 0.5, 1e-15);
}

TEST(Backward, RootMustBeScalar) {
  Tape t;
  Var v = t.constant(Tensor::vector({1, 2}));
  EXPECT_THROW(t.backward(v), ShapeError);
}

// Every op against central differences on a small composite graph.
TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(3);
  auto rnd = [&](std::vector<std::size_t> s) {
    Tensor x(std::move(s));
    for (double& v : x.data) v = rng.normal();
    return x;
  };
  Parameter w("w", rnd({4, 3})), u("u", rnd({4, 4})), b("b", rnd({4})), x("x", rnd({3})), a("a", rnd({3, 10}));
  std::vector<Parameter*> ps{&w, &u, &b, &x, &a};

  auto loss = [&](Tape& t) {
    Var xv = t.param(x);
    Var h = t.tanh(t.add(t.matvec(t.param(w), xv), t.param(b)));
    Var g = t.sigmoid(t.matvec(t.param(u), h));
    std::vector<Var> parts{h, g, t.mul(h, g)};
    Var s = t.sum_list(parts);
    std::vector<Var> cat{s, t.slice(s, 1, 2), t.tanh(s)};
    Var logits = t.matvec(t.param(a), t.concat(cat));
    Var p = t.softmax(logits);
    std::vector<Var> ces{t.cross_entropy(p, 0), t.cross_entropy(p, 2)};
    return t.mean(ces);
  };

  for (Parameter* p : ps) p->zero_grad();
  Tape t;
  t.backward(loss(t));
  const double eps = 1e-5;
  for (Parameter* p : ps) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + eps;
      Tape t1;
      const double up = t1.value(loss(t1))[0];
      p->value[i] = keep - eps;
      Tape t2;
      const double down = t2.value(loss(t2))[0];
      p->value[i] = keep;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = p->grad[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-7});
      EXPECT_LT(rel, 1e-4) << p->name << "[" << i << "] analytic " << analytic << " numeric " << numeric;
    }
  }
}

TEST(Backward, SeedScalesGradients) {
  Parameter x("x", Tensor::vector({0.3}));
  x.zero_grad();
  Tape t;
  t.backward(t.tanh(t.param(x)), 0.25);
  EXPECT_DOUBLE_EQ(x.grad[0], 0.25 * (1 - std::tanh(0.3) * std::tanh(0.3)));
}

TEST(Backward, ConstParametersGetNoGradient) {
  Parameter w("w", Tensor({1, 1}, {2.0}));
  w.zero_grad();
  const Parameter& cw = w;
  Tape t;
  t.backward(t.matvec(t.param(cw), t.constant(Tensor::vector({3}))));
  EXPECT_EQ(w.grad[0], 0.0);
}

TEST(RmsProp, ScriptedStep) {
  Parameter p("p", Tensor::vector({1.0}));
  p.grad = Tensor::vector({1.0});
  RmsPropState s;
  std::vector<Parameter*> ps{&p};
  rmsprop_step(ps, s, RmsPropConfig{0.001, 0.9, 1e-8});
  EXPECT_DOUBLE_EQ(p.value[0], 1 - 0.001 * 1 / (std::sqrt(0.1) + 1e-8));
  EXPECT_DOUBLE_EQ(s.v[0][0], 0.1);
}

TEST(RmsProp, ZeroGradientLeavesParameter) {
  Parameter p("p", Tensor::vector({0.7, -2.0}));
  p.zero_grad();
  RmsPropState s;
  std::vector<Parameter*> ps{&p};
  for (int i = 0; i < 5; ++i) rmsprop_step(ps, s, RmsPropConfig{});
  EXPECT_EQ(p.value, Tensor::vector({0.7, -2.0}));
}

TEST(RmsProp, ConstantGradientStepApproachesLearningRate) {
  Parameter p("p", Tensor::vector({0.0, 0.0}));
  p.grad = Tensor::vector({3.0, -0.02});
  RmsPropState s;
  std::vector<Parameter*> ps{&p};
  const RmsPropConfig cfg;
  double before[2] = {0, 0};
  for (int i = 0; i < 400; ++i) {
    before[0] = p.value[0];
    before[1] = p.value[1];
    rmsprop_step(ps, s, cfg);
  }
  EXPECT_NEAR(before[0] - p.value[0], cfg.lr, 1e-9);
  EXPECT_NEAR(p.value[1] - before[1], cfg.lr, 1e-9);
}
