#include <gtest/gtest.h>

#include "probetraj/errors.hpp"
#include "probetraj/numkit.hpp"
#include "probetraj/oracles.hpp"
#include "probetraj/probe.hpp"
#include "probetraj/synth.hpp"
#include "test_util.hpp"

using namespace probetraj;

namespace {

BottleneckProbe hand_probe() {
  auto p = BottleneckProbe::zeros(1, 2);
  p.w1(0, 0) = 1.0;
  p.w2[0] = 1.0;
  return p;
}

ActivationDataset clean_split(std::uint32_t per_class = 200) {
  SynthConfig c;
  c.counts = {per_class, per_class, 0, 0};
  c.split = SplitTag::kTrain;
  return generate(c);
}

BottleneckProbe random_probe(Rng& rng, Eigen::Index w, Eigen::Index d, Activation act) {
  auto p = BottleneckProbe::zeros(w, d, act);
  p.w1 = oracle::random_matrix(rng, w, d, 0.5);
  p.b1 = oracle::random_vector(rng, w, 0.3);
  p.w2 = oracle::random_vector(rng, w, 0.5);
  p.b2 = 0.2;
  return p;
}

}  // namespace

TEST(ProbeScore, ZeroProbeIsOneHalf) {
  const auto p = BottleneckProbe::zeros(4, 3);
  Rng rng(1);
  EXPECT_EQ(probe_score(p, oracle::random_vector(rng, 3)), 0.5);
}

TEST(ProbeScore, HandSetProbe) {
  const auto p = hand_probe();
  Vector s(2);
  s << 2, 5;
  EXPECT_NEAR(probe_score(p, s), 0.8807970779778823, 1e-15);
  double prev = 0.0;
  for (double x = -3; x <= 3; x += 0.5) {
    s << x, 5;
    const double v = probe_score(p, s);
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(ProbeScore, DimensionMismatch) {
  try {
    probe_score(hand_probe(), Vector::Zero(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
}

TEST(ProbeScore, PositionsEndWithFinalScore) {
  Rng rng(2);
  const auto p = random_probe(rng, 3, 4, Activation::kRectifier);
  SequenceRecord r;
  r.states = oracle::random_matrix(rng, 7, 4);
  const auto s = score_positions(p, r);
  ASSERT_EQ(s.size(), 7u);
  EXPECT_EQ(s.back(), probe_score(p, r.final_token()));
  r.states = r.states.topRows(1);
  EXPECT_EQ(score_positions(p, r), std::vector<double>{probe_score(p, r.final_token())});
  r.states = Matrix::Ones(5, 4);
  const auto flat = score_positions(p, r);
  for (double v : flat) EXPECT_EQ(v, flat[0]);
}

TEST(ProbeScore, DecisionEqualsLogitSign) {
  Rng rng(3);
  const auto p = random_probe(rng, 5, 6, Activation::kIdentity);
  for (int i = 0; i < 200; ++i) {
    const Vector x = oracle::random_vector(rng, 6, 3.0);
    EXPECT_EQ(probe_score(p, x) > 0.5, probe_logit(p, x) > 0.0);
  }
}

TEST(ProbeScore, IdentityBottleneckIsLinearInState) {
  Rng rng(4);
  const auto p = random_probe(rng, 4, 5, Activation::kIdentity);
  const Vector x = oracle::random_vector(rng, 5);
  const Vector lhs = p.w1 * (2.5 * x);
  const Vector rhs = 2.5 * (p.w1 * x);
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gradient, MatchesFiniteDifferencesForBothActivations) {
  Rng rng(5);
  for (auto act : {Activation::kIdentity, Activation::kRectifier}) {
    for (int c = 0; c < 10; ++c) {
      const auto p = random_probe(rng, 6, 8, act);
      const Vector x = oracle::random_vector(rng, 8);
      EXPECT_LE(gradient_check(p, x, c % 2, 1e-5), 1e-4) << to_string(act) << " case " << c;
    }
  }
}

TEST(Gradient, HandChainRuleWithZeroReadout) {
  Rng rng(6);
  auto p = random_probe(rng, 3, 4, Activation::kRectifier);
  p.w2.setZero();
  p.b2 = 0.0;
  const Vector x = oracle::random_vector(rng, 4);
  const double label = 1.0;
  const auto g = loss_gradient(p, x, label);
  const Vector hidden = (p.w1 * x + p.b1).cwiseMax(0.0);
  const double score = 0.5;
  for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(g.w2[k], hidden[k] * (score - label), 1e-15);
  EXPECT_LE(g.w1.cwiseAbs().maxCoeff(), 0.0);  // readout is zero, so nothing flows back
}

TEST(Training, SeparableCleanSplit) {
  const auto train = clean_split();
  const auto p = train_probe(train, TrainConfig{});
  EXPECT_GE(p.info.final_accuracy, 0.99);
  EXPECT_EQ(p.width(), 64);
  EXPECT_EQ(p.info.n_train, 400u);
}

TEST(Training, SameSeedSameWeights) {
  const auto train = clean_split(50);
  TrainConfig c;
  c.epochs = 20;
  EXPECT_EQ(encode_probe(train_probe(train, c)), encode_probe(train_probe(train, c)));
  auto other = c;
  other.seed = 7;
  EXPECT_NE(encode_probe(train_probe(train, c)), encode_probe(train_probe(train, other)));
}

TEST(Training, LossNonIncreasingAtDefaultRate) {
  const auto p = train_probe(clean_split(), TrainConfig{});
  ASSERT_EQ(p.info.epoch_losses.size(), 200u);
  for (std::size_t i = 1; i < p.info.epoch_losses.size(); ++i) {
    EXPECT_LE(p.info.epoch_losses[i], p.info.epoch_losses[i - 1] + 1e-6) << "epoch " << i;
  }
}

TEST(Training, FlippedLabelsAntiCorrelate) {
  auto train = clean_split(100);
  TrainConfig c;
  c.learning_rate = 0.01;
  const auto p = train_probe(train, c);
  auto flipped = train;
  for (auto& r : flipped.records) r.label = r.label == Label::kHarmful ? Label::kBenign : Label::kHarmful;
  const auto q = train_probe(flipped, c);
  std::vector<double> a, b;
  for (const auto& r : train.records) {
    a.push_back(probe_score(p, r.final_token()));
    b.push_back(probe_score(q, r.final_token()));
  }
  EXPECT_LE(numkit::spearman(a, b), -0.9);
}

TEST(Training, SingleClassIsDegenerateSplit) {
  SynthConfig s;
  s.counts = {10, 0, 0, 0};
  try {
    train_probe(generate(s), TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateSplit);
  }
}

TEST(Serialization, RoundTripIsExact) {
  const auto p = train_probe(clean_split(30), TrainConfig{8, 1e-2, 5, 16, 1e-4, 3});
  const auto bytes = encode_probe(p);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PRB1");
  const auto q = decode_probe(bytes);
  EXPECT_EQ(q.w1, p.w1);
  EXPECT_EQ(q.b1, p.b1);
  EXPECT_EQ(q.w2, p.w2);
  EXPECT_EQ(q.b2, p.b2);
  EXPECT_EQ(q.activation, p.activation);
  EXPECT_EQ(q.info.seed, 3u);
  EXPECT_EQ(encode_probe(q), bytes);
}

TEST(Serialization, RejectsDamage) {
  auto bytes = encode_probe(hand_probe());
  auto bad = bytes;
  bad[1] = 'Z';
  EXPECT_THROW(decode_probe(bad), Error);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() - 1}) {
    EXPECT_THROW(decode_probe(std::span(bytes.data(), cut)), Error) << cut;
  }
}
