#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "mlcap/errors.hpp"
#include "mlcap/model.hpp"
#include "mlcap/random.hpp"

namespace mlcap {
namespace {

std::vector<double> values(const ad::Tensor& t) { return {t.data().begin(), t.data().end()}; }

ModelParams random_params(const ModelDims& dims, std::uint64_t seed) {
  ModelParams p = zero_params(dims);
  Rng rng(seed);
  for (ad::Tensor* t : p.tensors()) {
    for (double& x : t->data()) x = rng.uniform(-1.0, 1.0);
  }
  return p;
}

TEST(InitParams, DeterministicAndSeedSensitive) {
  const ModelDims dims{7, 4, 3, 5};
  const ModelParams a = init_params(dims, 11);
  const ModelParams b = init_params(dims, 11);
  const ModelParams c = init_params(dims, 12);
  for (std::size_t i = 0; i < ModelParams::kCount; ++i) {
    EXPECT_EQ(values(*a.tensors()[i]), values(*b.tensors()[i]));
  }
  EXPECT_NE(values(a.embed), values(c.embed));
}

TEST(InitParams, RangeAndBiases) {
  const ModelDims dims{7, 4, 3, 5};
  const ModelParams p = init_params(dims, 1);
  for (double x : p.lstm_wx.data()) EXPECT_LE(std::abs(x), 0.08);
  const auto bias = values(p.lstm_bias);
  for (std::size_t j = 0; j < 4 * dims.hidden; ++j) {
    const bool forget = j / dims.hidden == static_cast<std::size_t>(Gate::kForget);
    EXPECT_EQ(bias[j], forget ? 1.0 : 0.0) << j;
  }
  EXPECT_EQ(values(p.out_bias), std::vector<double>(7, 0.0));
  EXPECT_EQ(values(p.image_bias), std::vector<double>(4, 0.0));
}

TEST(InitParams, ZeroDimThrows) {
  EXPECT_THROW(init_params({0, 4, 3, 5}, 1), ContractError);
  EXPECT_THROW(init_params({7, 4, 0, 5}, 1), ContractError);
}

TEST(LstmStep, ZeroParamsGiveZeroOutputs) {
  const ModelParams p = zero_params({4, 3, 2, 2});
  ad::Tape tape(ad::Tape::Mode::kNoGrad);
  const auto x = ad::Tensor::from_data({1, 3}, {0.3, -2.0, 5.0});
  const auto out = lstm_step(tape, x, LstmState::zeros(1, 2), p);
  EXPECT_EQ(values(out.state.c), std::vector<double>(2, 0.0));
  EXPECT_EQ(values(out.state.h), std::vector<double>(2, 0.0));
  EXPECT_EQ(values(out.logits), std::vector<double>(4, 0.0));
}

TEST(LstmStep, OutputBiasAloneSetsLogits) {
  ModelParams p = zero_params({4, 3, 2, 2});
  const std::vector<double> v = {0.5, -1.0, 2.0, 3.5};
  std::copy(v.begin(), v.end(), p.out_bias.data().begin());
  ad::Tape tape(ad::Tape::Mode::kNoGrad);
  for (double s : {0.0, 1.0, -7.0}) {
    const auto x = ad::Tensor::filled({1, 3}, s);
    EXPECT_EQ(values(lstm_step(tape, x, LstmState::zeros(1, 2), p).logits), v);
  }
}

TEST(LstmStep, MatchesHandComputedCell) {
  const ModelDims dims{3, 2, 2, 1};
  const ModelParams p = random_params(dims, 4);
  const std::vector<double> x = {0.4, -0.3};
  const std::vector<double> h = {0.1, 0.2};
  const std::vector<double> c = {-0.5, 0.7};
  ad::Tape tape(ad::Tape::Mode::kNoGrad);
  const auto out = lstm_step(tape, ad::Tensor::from_data({1, 2}, x),
                             {ad::Tensor::from_data({1, 2}, h), ad::Tensor::from_data({1, 2}, c)},
                             p);
  const auto wx = values(p.lstm_wx);
  const auto wh = values(p.lstm_wh);
  const auto b = values(p.lstm_bias);
  auto pre = [&](std::size_t j) {
    double s = b[j];
    for (std::size_t k = 0; k < 2; ++k) s += x[k] * wx[k * 8 + j] + h[k] * wh[k * 8 + j];
    return s;
  };
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  for (std::size_t u = 0; u < 2; ++u) {
    const double i = sig(pre(u));
    const double f = sig(pre(2 + u));
    const double o = sig(pre(4 + u));
    const double g = std::tanh(pre(6 + u));
    const double c2 = f * c[u] + i * g;
    EXPECT_NEAR(out.state.c.data()[u], c2, 1e-14);
    EXPECT_NEAR(out.state.h.data()[u], o * std::tanh(c2), 1e-14);
  }
}

TEST(LstmStep, ShapeMismatchThrows) {
  const ModelParams p = zero_params({4, 3, 2, 2});
  ad::Tape tape;
  EXPECT_THROW(lstm_step(tape, ad::Tensor::zeros({1, 4}), LstmState::zeros(1, 2), p),
               DimensionError);
}

TEST(ForwardSequence, EosOnlyHasOneScoredDistribution) {
  const ModelParams p = random_params({6, 3, 4, 2}, 1);
  const std::vector<double> feature = {0.1, 0.2};
  const auto trace = forward_sequence(feature, {{Vocabulary::kEos}, "en"}, 3, p);
  EXPECT_EQ(trace.distributions.size(), 1u);
  EXPECT_EQ(trace.inputs, (std::vector<TokenId>{3}));
}

TEST(ForwardSequence, DistributionsNormalized) {
  const ModelParams p = random_params({6, 3, 4, 2}, 2);
  const std::vector<double> feature = {0.1, 0.2};
  const auto trace = forward_sequence(feature, {{4, 5, 4, Vocabulary::kEos}, "en"}, 3, p);
  ASSERT_EQ(trace.distributions.size(), 4u);
  for (const auto& d : trace.distributions) {
    EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-9);
  }
  EXPECT_EQ(trace.inputs, (std::vector<TokenId>{3, 4, 5, 4}));
}

TEST(ForwardSequence, Errors) {
  const ModelParams p = random_params({6, 3, 4, 2}, 2);
  const std::vector<double> feature = {0.1, 0.2};
  EXPECT_THROW(forward_sequence(feature, {{}, "en"}, 3, p), ContractError);
  const std::vector<double> wrong = {0.1, 0.2, 0.3};
  EXPECT_THROW(forward_sequence(wrong, {{Vocabulary::kEos}, "en"}, 3, p), DimensionError);
}

TEST(ForwardSequence, StartTokenChangesOnlyStepZeroInput) {
  const ModelParams p = random_params({7, 3, 4, 2}, 3);
  const std::vector<double> feature = {0.5, -0.5};
  const TokenSequence seq{{5, 6, Vocabulary::kEos}, "en"};
  const auto en = forward_sequence(feature, seq, 3, p);
  const auto jp = forward_sequence(feature, seq, 4, p);
  EXPECT_EQ(en.image_distribution, jp.image_distribution);
  EXPECT_NE(en.inputs[0], jp.inputs[0]);
  EXPECT_EQ(std::vector<TokenId>(en.inputs.begin() + 1, en.inputs.end()),
            std::vector<TokenId>(jp.inputs.begin() + 1, jp.inputs.end()));
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NE(en.distributions[t], jp.distributions[t]);
}

TEST(StepDistribution, PureAndNormalized) {
  const ModelParams p = random_params({6, 3, 4, 2}, 5);
  const LstmState s = initial_state(p);
  const auto a = step_distribution(s, TokenId{4}, p);
  const auto b = step_distribution(s, TokenId{4}, p);
  EXPECT_EQ(a.log_probs, b.log_probs);
  EXPECT_EQ(values(a.state.h), values(b.state.h));
  double total = 0.0;
  for (double lp : a.log_probs) total += std::exp(lp);
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(StepDistribution, ReplayMatchesForwardSequence) {
  const ModelParams p = random_params({8, 4, 5, 3}, 6);
  const std::vector<double> feature = {0.3, -0.1, 0.9};
  const TokenSequence seq{{5, 7, 6, 5, Vocabulary::kEos}, "en"};
  const auto trace = forward_sequence(feature, seq, 3, p);

  auto step = step_distribution(initial_state(p), std::span<const double>(feature), p);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(std::exp(step.log_probs[i]), trace.image_distribution[i], 1e-12);
  }
  TokenId input = 3;
  for (std::size_t t = 0; t < seq.ids.size(); ++t) {
    step = step_distribution(step.state, input, p);
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_NEAR(std::exp(step.log_probs[i]), trace.distributions[t][i], 1e-12);
    }
    input = seq.ids[t];
  }
}

TEST(ModelParams, ValidateAndClone) {
  ModelParams p = init_params({5, 2, 3, 4}, 1);
  EXPECT_NO_THROW(p.validate());
  ModelParams q = p.clone();
  q.embed.data()[0] += 1.0;
  EXPECT_NE(p.embed.data()[0], q.embed.data()[0]);
  p.out_w.data()[0] = std::nan("");
  EXPECT_THROW(p.validate(), ContractError);
}

}  // namespace
}  // namespace mlcap
