#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "mlcap/autodiff.hpp"
#include "mlcap/errors.hpp"
#include "mlcap/gradcheck.hpp"
#include "mlcap/random.hpp"

namespace mlcap::ad {
namespace {

Tensor random_tensor(Rng& rng, Shape shape, bool grad = true) {
  std::vector<double> data(num_elements(shape));
  for (double& x : data) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(std::move(shape), std::move(data), grad);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tape tape;
  const Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  const Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(matmul(tape, eye, m)), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, ZeroAnnihilates) {
  Tape tape;
  const Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(matmul(tape, m, Tensor::zeros({2, 2}))), std::vector<double>(4, 0.0));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape tape;
  try {
    matmul(tape, Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  std::vector<Tensor> in = {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})};
  const Tensor w = random_tensor(rng, {3, 2}, false);
  const auto f = [&](Tape& t) { return sum(t, hadamard(t, matmul(t, in[0], in[1]), w)); };
  EXPECT_LT(gradient_check(f, in).max_relative_error, 1e-5);
}

TEST(Elementwise, AnalyticValues) {
  Tape tape;
  const Tensor zero = Tensor::scalar(0.0);
  EXPECT_EQ(sigmoid(tape, zero).item(), 0.5);
  EXPECT_EQ(tanh(tape, zero).item(), 0.0);
}

TEST(Elementwise, SigmoidIsStableAtExtremes) {
  Tape tape;
  const Tensor x = Tensor::from_data({2}, {-800.0, 800.0});
  const auto y = values(sigmoid(tape, x));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 1.0);
}

TEST(Elementwise, BinaryShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(add(tape, Tensor::zeros({3}), Tensor::zeros({4})), DimensionError);
  EXPECT_THROW(hadamard(tape, Tensor::zeros({2, 2}), Tensor::zeros({4})), DimensionError);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  std::vector<Tensor> in = {random_tensor(rng, {5}), random_tensor(rng, {5})};
  const Tensor w = random_tensor(rng, {5}, false);
  EXPECT_LT(gradient_check([&](Tape& t) { return sum(t, hadamard(t, hadamard(t, in[0], in[1]), w)); },
                           in).max_relative_error,
            1e-5);
  std::vector<Tensor> one = {in[0]};
  EXPECT_LT(gradient_check([&](Tape& t) { return sum(t, hadamard(t, sigmoid(t, in[0]), w)); }, one)
                .max_relative_error,
            1e-5);
  EXPECT_LT(gradient_check([&](Tape& t) { return sum(t, hadamard(t, tanh(t, in[0]), w)); }, one)
                .max_relative_error,
            1e-5);
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogV) {
  Tape tape;
  const Tensor logits = Tensor::filled({4}, 0.7);
  for (std::size_t target = 0; target < 4; ++target) {
    EXPECT_NEAR(softmax_cross_entropy(tape, logits, target).item(), std::log(4.0), 1e-15);
  }
}

TEST(SoftmaxCrossEntropy, SaturatedCorrectClassGivesZero) {
  Tape tape;
  const Tensor logits = Tensor::from_data({3}, {0.0, 1e6, 0.0});
  EXPECT_EQ(softmax_cross_entropy(tape, logits, 1).item(), 0.0);
}

TEST(SoftmaxCrossEntropy, TargetOutOfRangeThrows) {
  Tape tape;
  EXPECT_THROW(softmax_cross_entropy(tape, Tensor::zeros({3}), 3), IndexError);
}

TEST(SoftmaxCrossEntropy, GradientIsSoftmaxMinusOneHot) {
  Rng rng(3);
  std::vector<Tensor> in = {random_tensor(rng, {7})};
  Tape tape;
  tape.backward(softmax_cross_entropy(tape, in[0], 2));
  auto expected = softmax(in[0].data());
  expected[2] -= 1.0;
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(in[0].grad()[i], expected[i], 1e-15);
  in[0].zero_grad();
  EXPECT_LT(gradient_check([&](Tape& t) { return softmax_cross_entropy(t, in[0], 2); }, in)
                .max_relative_error,
            1e-5);
}

TEST(WeightedCrossEntropy, MatchesPerRowLosses) {
  Rng rng(4);
  const Tensor logits = random_tensor(rng, {3, 5});
  const std::vector<std::size_t> targets = {1, 4, 0};
  const std::vector<double> weights = {1.0, 0.0, 2.5};
  Tape tape;
  const double total = weighted_cross_entropy(tape, logits, targets, weights).item();
  double expected = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    const auto row = logits.data().subspan(r * 5, 5);
    expected -= weights[r] * log_softmax(row)[targets[r]];
  }
  EXPECT_NEAR(total, expected, 1e-13);
}

TEST(WeightedCrossEntropy, ZeroWeightRowIgnoresInvalidTarget) {
  Tape tape;
  const Tensor logits = Tensor::zeros({2, 3}, true);
  const std::vector<std::size_t> targets = {0, 0};
  const std::vector<double> weights = {1.0, 0.0};
  const Tensor loss = weighted_cross_entropy(tape, logits, targets, weights);
  tape.backward(loss);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(logits.grad()[3 + j], 0.0);
}

TEST(Backward, SumGivesOnes) {
  Tensor w = Tensor::filled({2, 3}, 4.0, true);
  Tape tape;
  tape.backward(sum(tape, w));
  EXPECT_EQ(values(Tensor::from_data({6}, {w.grad().begin(), w.grad().end()})),
            std::vector<double>(6, 1.0));
}

TEST(Backward, ConstantLossIsNoOp) {
  Tape tape;
  const Tensor c = Tensor::scalar(0.0);
  const Tensor loss = scale(tape, c, 2.0);
  EXPECT_NO_THROW(tape.backward(loss));
  EXPECT_FALSE(c.has_grad());
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Backward, NonScalarLossThrows) {
  Tensor w = Tensor::zeros({2}, true);
  Tape tape;
  const Tensor y = scale(tape, w, 1.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, SecondCallThrows) {
  Tensor w = Tensor::zeros({2}, true);
  Tape tape;
  const Tensor loss = sum(tape, w);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), ContractError);
}

TEST(Backward, StaleLeafGradientThrows) {
  Tensor w = Tensor::zeros({2}, true);
  {
    Tape tape;
    tape.backward(sum(tape, w));
  }
  Tape tape;
  const Tensor loss = sum(tape, w);
  EXPECT_THROW(tape.backward(loss), ContractError);
  w.zero_grad();
  Tape fresh;
  EXPECT_NO_THROW(fresh.backward(sum(fresh, w)));
}

TEST(Backward, ForeignLossThrows) {
  Tensor w = Tensor::zeros({2}, true);
  Tape a;
  Tape b;
  const Tensor loss = sum(a, w);
  EXPECT_THROW(b.backward(loss), ContractError);
}

TEST(Backward, SharedInputAccumulatesWithinPass) {
  Tensor x = Tensor::from_data({1}, {3.0}, true);
  Tape tape;
  tape.backward(sum(tape, hadamard(tape, x, x)));
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(NoGradTape, RecordsNothing) {
  Tensor w = Tensor::zeros({2}, true);
  Tape tape(Tape::Mode::kNoGrad);
  const Tensor y = sum(tape, w);
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
}

TEST(GatherRows, BadIdThrows) {
  Tape tape;
  const std::vector<std::size_t> ids = {0, 5};
  EXPECT_THROW(gather_rows(tape, Tensor::zeros({5, 2}), ids), IndexError);
}

TEST(GatherRows, RepeatedIdsAccumulate) {
  Tensor table = Tensor::zeros({3, 2}, true);
  const std::vector<std::size_t> ids = {2, 2, 0};
  Tape tape;
  tape.backward(sum(tape, gather_rows(tape, table, ids)));
  EXPECT_EQ(values(Tensor::from_data({6}, {table.grad().begin(), table.grad().end()})),
            (std::vector<double>{1, 1, 0, 0, 2, 2}));
}

TEST(TensorFactory, RejectsBadData) {
  EXPECT_THROW(Tensor::from_data({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor::zeros({0, 2}), DimensionError);
}

TEST(GradientCheck, SquareAtThree) {
  std::vector<Tensor> x = {Tensor::from_data({1}, {3.0}, true)};
  const auto r = gradient_check([&](Tape& t) { return sum(t, hadamard(t, x[0], x[0])); }, x);
  EXPECT_LT(r.max_relative_error, 1e-9);
  EXPECT_EQ(x[0].data()[0], 3.0);
  EXPECT_FALSE(x[0].has_grad());
}

TEST(GradientCheck, ConstantFunctionHasZeroError) {
  std::vector<Tensor> x = {Tensor::from_data({2}, {1.0, 2.0}, true)};
  const auto r = gradient_check([](Tape&) { return Tensor::scalar(5.0); }, x);
  EXPECT_EQ(r.max_relative_error, 0.0);
}

TEST(GradientCheck, NonScalarFunctionThrows) {
  std::vector<Tensor> x = {Tensor::from_data({2}, {1.0, 2.0}, true)};
  EXPECT_THROW(gradient_check([&](Tape& t) { return scale(t, x[0], 1.0); }, x), ContractError);
}

TEST(GradientCheck, DetectsWrongGradient) {
  std::vector<Tensor> x = {Tensor::from_data({1}, {0.3}, true)};
  // A deliberately broken op: forward x^2, backward claims 3x.
  const auto broken = [&](Tape& t) {
    const double v = x[0].data()[0];
    const Tensor& in = x[0];
    return t.emit({}, {v * v}, {in}, [in, v](std::span<const double> g) {
      in.mutable_grad()[0] += 3.0 * v * g[0];
    });
  };
  EXPECT_GT(gradient_check(broken, x).max_relative_error, 0.1);
}

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(1 + rng.uniform_index(20));
    for (double& x : logits) x = rng.uniform(-30.0, 30.0);
    const auto p = softmax(logits);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    const double shift = rng.uniform(-100.0, 100.0);
    auto shifted = logits;
    for (double& x : shifted) x += shift;
    const auto q = softmax(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(Determinism, RepeatedPassesAreBitIdentical) {
  auto run = [] {
    Rng rng(9);
    Tensor a = random_tensor(rng, {4, 3});
    Tensor b = random_tensor(rng, {3, 5});
    Tape tape;
    const Tensor loss = softmax_cross_entropy(
        tape, reshape(tape, slice_cols(tape, tanh(tape, matmul(tape, a, b)), 0, 5), {20}), 7);
    tape.backward(loss);
    std::vector<double> out = {loss.item()};
    out.insert(out.end(), a.grad().begin(), a.grad().end());
    out.insert(out.end(), b.grad().begin(), b.grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace mlcap::ad
