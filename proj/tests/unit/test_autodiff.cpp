#include <gtest/gtest.h>

#include <cmath>

#include "daml/adam.hpp"
#include "daml/autodiff.hpp"
#include "daml/errors.hpp"
#include "daml/gradcheck.hpp"
#include "daml/rng.hpp"
#include "reference.hpp"

using namespace daml;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

oracle::Matrix to_matrix(const Tensor& t) {
  oracle::Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

}  // namespace

TEST(Tensor, RejectsSizeMismatchAndZeroDims) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor({0, 3}), ShapeError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.at(1, 2), 1.5);
}

TEST(Tensor, ItemNeedsOneElement) {
  EXPECT_EQ(Tensor::scalar(4.0).item(), 4.0);
  EXPECT_THROW(Tensor({2}).item(), ShapeError);
}

TEST(Ops, SoftmaxOfEqualLogitsIsUniform) {
  Var y = softmax(Var::constant(Tensor::row({0, 0, 0})));
  for (double v : y.value().data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Ops, TanhAndSigmoidAtZero) {
  EXPECT_EQ(tanh(Var::constant(Tensor::scalar(0))).value().item(), 0.0);
  EXPECT_EQ(sigmoid(Var::constant(Tensor::scalar(0))).value().item(), 0.5);
}

TEST(Ops, MatmulMatchesTripleLoop) {
  Rng rng(11);
  const Tensor a = random_tensor({2, 3}, rng), b = random_tensor({3, 4}, rng);
  const Tensor c = matmul(Var::constant(a), Var::constant(b)).value();
  const auto expected = oracle::matmul(to_matrix(a), to_matrix(b));
  ASSERT_EQ(c.shape(), (Shape{2, 4}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(c.at(i, j), expected[i][j], 1e-14);
}

TEST(Ops, MatmulBtMatchesTransposedTripleLoop) {
  Rng rng(12);
  const Tensor a = random_tensor({3, 2}, rng), b = random_tensor({4, 2}, rng);
  oracle::Matrix bt(2, std::vector<double>(4));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) bt[j][i] = b.at(i, j);
  const auto expected = oracle::matmul(to_matrix(a), bt);
  const Tensor c = matmul_bt(Var::constant(a), Var::constant(b)).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(c.at(i, j), expected[i][j], 1e-14);
}

TEST(Ops, ShapeErrorsNameTheOp) {
  Var a = Var::constant(Tensor({2, 3})), b = Var::constant(Tensor({2, 2}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(add(a, b), ShapeError);
}

TEST(Ops, OverflowIsANumericError) {
  EXPECT_THROW(exp(Var::constant(Tensor::scalar(1000.0))), NumericError);
}

TEST(Ops, LogClampsAtFloor) {
  EXPECT_NEAR(log(Var::constant(Tensor::scalar(0.0))).value().item(), std::log(1e-12), 1e-12);
}

TEST(Ops, SoftmaxRowsArePositiveAndSumToOne) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({4, 7}, rng, -30.0, 30.0);
    Tensor y = softmax(Var::constant(x)).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        EXPECT_GT(y.at(r, c), 0.0);
        total += y.at(r, c);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Ops, MaskedSoftmaxZeroesMaskedEntries) {
  Tensor mask = Tensor::matrix(2, 3, {1, 0, 1, 0, 1, 0});
  Tensor y = masked_softmax(Var::constant(Tensor::matrix(2, 3, {1, 5, 1, 2, 3, 4})), mask).value();
  EXPECT_EQ(y.at(0, 1), 0.0);
  EXPECT_NEAR(y.at(0, 0), 0.5, 1e-15);
  EXPECT_EQ(y.at(1, 1), 1.0);
  EXPECT_THROW(masked_softmax(Var::constant(Tensor({1, 2})), Tensor({1, 2})), Error);
}

TEST(Ops, GatherRowsChecksRange) {
  Var table = Var::constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const std::int64_t ids[] = {1, 1, 0};
  Tensor g = gather_rows(table, ids).value();
  EXPECT_EQ(g, Tensor::matrix(3, 2, {3, 4, 3, 4, 1, 2}));
  const std::int64_t bad[] = {2};
  EXPECT_THROW(gather_rows(table, bad), Error);
}

TEST(Backward, SumGivesOnes) {
  Var x = Var::parameter(Tensor({2, 3}, 0.7));
  backward(sum(x));
  for (double g : x.grad().data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SumOfSquares) {
  Var x = Var::parameter(Tensor::row({1, 2, 3}));
  backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad(), Tensor::row({2, 4, 6}));
}

TEST(Backward, NonScalarRootIsAnError) {
  Var x = Var::parameter(Tensor::row({1, 2}));
  EXPECT_THROW(backward(x), Error);
}

TEST(Backward, RepeatedCallsAccumulate) {
  Var x = Var::parameter(Tensor::row({1, 2, 3}));
  Var y = sum(mul(x, x));
  backward(y);
  backward(y);
  EXPECT_EQ(x.grad(), Tensor::row({4, 8, 12}));
  x.zero_grad();
  EXPECT_EQ(x.grad(), Tensor::row({0, 0, 0}));
}

TEST(Backward, DiamondAccumulatesBothPaths) {
  Rng rng(3);
  Var x = Var::parameter(random_tensor({2, 3}, rng));
  std::vector<NamedParam> params{{"x", x}};
  auto report = finite_diff_check(params, [&] {
    Var shared = tanh(x);
    return sum(mul(exp(shared), sigmoid(shared)));
  });
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(Backward, KlGradientMatchesFiniteDifferences) {
  Rng rng(9);
  Tensor p = softmax(Var::constant(random_tensor({3, 5}, rng))).value();
  Var z = Var::parameter(random_tensor({3, 5}, rng));
  std::vector<NamedParam> params{{"z", z}};
  GradCheckOptions opt;
  opt.step = 1e-6;
  auto report = finite_diff_check(
      params,
      [&] {
        Var logq = log(softmax(z));
        Var cross = sum(mul(Var::constant(p), logq));
        return scale(cross, -1.0);
      },
      opt);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
  EXPECT_LT(report.max_rel_error, 1e-4);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Var x = Var::parameter(Tensor::row({1, 2}));
  NoGradGuard guard;
  Var y = sum(mul(x, x));
  EXPECT_FALSE(y.requires_grad());
}

TEST(Backward, ForwardIsDeterministic) {
  Rng r1(4), r2(4);
  Tensor a = random_tensor({5, 6}, r1), b = random_tensor({5, 6}, r2);
  EXPECT_EQ(softmax(tanh(Var::constant(a))).value(), softmax(tanh(Var::constant(b))).value());
}

TEST(GradReverse, ForwardIsIdentity) {
  Tensor x = Tensor::row({1.5, -2.0});
  EXPECT_EQ(grad_reverse(Var::constant(x), 0.005).value(), x);
}

TEST(GradReverse, BackwardScalesByMinusEta) {
  Var x = Var::parameter(Tensor::row({1.5, -2.0}));
  backward(sum(grad_reverse(x, 0.005)));
  EXPECT_EQ(x.grad(), Tensor::row({-0.005, -0.005}));
}

TEST(GradReverse, ZeroEtaBlocksTheGradient) {
  Var x = Var::parameter(Tensor::row({1.5, -2.0}));
  backward(sum(grad_reverse(x, 0.0)));
  for (double g : x.grad().data()) EXPECT_EQ(g, 0.0);
}

TEST(GradReverse, ExactForArbitraryUpstream) {
  Rng rng(21);
  Var x = Var::parameter(random_tensor({3, 4}, rng));
  Tensor w = random_tensor({3, 4}, rng);
  const double eta = 0.37;
  backward(sum(mul(grad_reverse(x, eta), Var::constant(w))));
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(x.grad()[i], -eta * w[i]);
}

TEST(GradReverse, NegativeEtaRejected) {
  EXPECT_THROW(grad_reverse(Var::constant(Tensor::scalar(1)), -0.1), Error);
}

TEST(GradReverse, DomainLossGradientIsMinusEtaTimesFiniteDifference) {
  Rng rng(8);
  Var d = Var::parameter(random_tensor({4, 3}, rng));
  Tensor w = random_tensor({3, 1}, rng, -1.0, 1.0);
  const double eta = 0.005;
  auto dom = [&](const Var& features) {
    Var prob = sigmoid(matmul(features, Var::constant(w)));
    Tensor z({4, 1});
    z[0] = z[2] = 1.0;
    Tensor nz({4, 1}, 1.0);
    nz[0] = nz[2] = 0.0;
    Var ll = add(mul(Var::constant(z), log(prob)), mul(Var::constant(nz), log(affine(prob, -1, 1))));
    return scale(sum(ll), -0.25);
  };
  std::vector<NamedParam> params{{"d", d}};
  auto report = finite_diff_check(params, [&] { return dom(grad_reverse(d, eta)); }, {},
                                  [&](std::size_t) { return scale(dom(d), -eta); });
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(GradCheck, ConstantBuilderHasZeroGradientAndError) {
  Var x = Var::parameter(Tensor::row({1, 2}));
  std::vector<NamedParam> params{{"x", x}};
  auto report = finite_diff_check(params, [&] { return sum(mul(Var::constant(Tensor::row({0, 0})), x)); });
  EXPECT_TRUE(report.passed);
  EXPECT_EQ(report.max_rel_error, 0.0);
  for (double g : x.grad().data()) EXPECT_EQ(g, 0.0);
}

TEST(GradCheck, NonDeterministicBuilderDetected) {
  Var x = Var::parameter(Tensor::row({1, 2}));
  std::vector<NamedParam> params{{"x", x}};
  int calls = 0;
  EXPECT_THROW(finite_diff_check(params, [&] { return affine(sum(x), 1.0, ++calls); }), Error);
}

TEST(GradCheck, WrongGradientIsReportedWithItsName) {
  Var x = Var::parameter(Tensor::row({0.3, -0.4}));
  std::vector<NamedParam> params{{"weights", x}};
  // Reversal without an oracle: analytic and numeric disagree in sign.
  auto report = finite_diff_check(params, [&] { return sum(mul(grad_reverse(x, 1.0), x)); });
  EXPECT_FALSE(report.passed);
  EXPECT_EQ(report.worst_param, "weights");
}

TEST(Adam, OneStepFromFreshState) {
  Var p = Var::parameter(Tensor::scalar(0.0));
  p.mutable_grad()[0] = 1.0;
  AdamState state;
  std::vector<Var> params{p};
  adam_step(params, state);
  oracle::ScalarAdam ref;
  EXPECT_NEAR(p.value().item(), ref.step(0.0, 1.0), 1e-18);
  EXPECT_NEAR(p.value().item(), -0.0009999999900, 1e-15);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, TwoStepsMatchRecurrence) {
  Var p = Var::parameter(Tensor::scalar(0.25));
  AdamState state;
  std::vector<Var> params{p};
  oracle::ScalarAdam ref;
  double expected = 0.25;
  for (int i = 0; i < 2; ++i) {
    p.zero_grad();
    p.mutable_grad()[0] = 1.0;
    adam_step(params, state);
    expected = ref.step(expected, 1.0);
    EXPECT_NEAR(p.value().item(), expected, 1e-16);
  }
}

TEST(Adam, VaryingGradientsMatchRecurrence) {
  Var p = Var::parameter(Tensor::row({0.5, -1.0}));
  AdamState state;
  state.settings.learning_rate = 0.01;
  std::vector<Var> params{p};
  oracle::ScalarAdam r0, r1;
  r0.lr = r1.lr = 0.01;
  double e0 = 0.5, e1 = -1.0;
  const double grads[][2] = {{0.3, -2.0}, {-0.1, 0.5}, {2.0, 0.0}, {0.7, 1e-4}};
  for (const auto& g : grads) {
    p.zero_grad();
    p.mutable_grad()[0] = g[0];
    p.mutable_grad()[1] = g[1];
    adam_step(params, state);
    e0 = r0.step(e0, g[0]);
    e1 = r1.step(e1, g[1]);
    EXPECT_NEAR(p.value()[0], e0, 1e-15);
    EXPECT_NEAR(p.value()[1], e1, 1e-15);
  }
  for (double v : state.second_moment[0].data()) EXPECT_GE(v, 0.0);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Var p = Var::parameter(Tensor::row({0.5, -1.0}));
  p.mutable_grad();
  AdamState state;
  std::vector<Var> params{p};
  adam_step(params, state);
  EXPECT_EQ(p.value(), Tensor::row({0.5, -1.0}));
}

TEST(Adam, ShapeMismatchWithStateIsAnError) {
  Var p = Var::parameter(Tensor::row({0.5, -1.0}));
  p.mutable_grad()[0] = 1.0;
  AdamState state;
  std::vector<Var> params{p};
  adam_step(params, state);
  Var q = Var::parameter(Tensor::row({1.0, 2.0, 3.0}));
  q.mutable_grad();
  std::vector<Var> other{q};
  EXPECT_THROW(adam_step(other, state), ShapeError);
}

TEST(Adam, DoesNotClearGradients) {
  Var p = Var::parameter(Tensor::scalar(0.0));
  p.mutable_grad()[0] = 0.5;
  AdamState state;
  std::vector<Var> params{p};
  adam_step(params, state);
  EXPECT_EQ(p.grad().item(), 0.5);
}

TEST(Adam, SkipsParametersWithoutGradient) {
  Var used = Var::parameter(Tensor::scalar(1.0));
  Var unused = Var::parameter(Tensor::scalar(2.0));
  std::vector<Var> params{used, unused};
  zero_grads(params);
  backward(scale(used, 3.0));
  AdamState state;
  adam_step(params, state);
  EXPECT_NE(used.value().item(), 1.0);
  EXPECT_EQ(unused.value().item(), 2.0);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(derive_seed(5, "batching")), b(derive_seed(5, "batching"));
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  EXPECT_NE(derive_seed(5, "init-group-1"), derive_seed(5, "init-group-2"));
  EXPECT_NE(derive_seed(5, "batching"), derive_seed(6, "batching"));
}

TEST(Rng, DrawsStayInRange) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
    const auto v = rng.between(-2, 2);
    EXPECT_GE(v, -2);
    EXPECT_LE(v, 2);
  }
}
