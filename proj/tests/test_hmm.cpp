#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "probetraj/errors.hpp"
#include "probetraj/hmm.hpp"
#include "probetraj/kernels.hpp"
#include "probetraj/oracles.hpp"
#include "probetraj/selftest.hpp"

using namespace probetraj;

namespace {

GaussianHmm two_state_example() {
  GaussianHmm h;
  h.initial = Vector::Constant(2, 0.5);
  h.transitions = Matrix::Constant(2, 2, 0.5);
  h.means.resize(2, 1);
  h.means << 0, 1;
  h.variances = Matrix::Ones(2, 1);
  return h;
}

double log_normal(double x, double mu, double var) {
  return -0.5 * (std::log(2 * std::numbers::pi * var) + (x - mu) * (x - mu) / var);
}

}  // namespace

TEST(Forward, ClosedFormMixture) {
  Matrix seq(1, 1);
  seq << 0.0;
  // log(0.5 N(0;0,1) + 0.5 N(0;1,1)); the mixture density is 0.3204565...
  EXPECT_NEAR(hmm_loglik(two_state_example(), seq), -1.1380087295845114, 1e-12);
  EXPECT_NEAR(std::exp(hmm_loglik(two_state_example(), seq)), 0.3204565, 1e-7);
}

TEST(Forward, SingleStateIsSumOfFrameDensities) {
  GaussianHmm h;
  h.initial = Vector::Ones(1);
  h.transitions = Matrix::Ones(1, 1);
  h.means.resize(1, 2);
  h.means << 0.5, -1.0;
  h.variances.resize(1, 2);
  h.variances << 2.0, 0.5;
  Rng rng(1);
  const Matrix seq = oracle::random_matrix(rng, 9, 2);
  double want = 0.0;
  for (Eigen::Index t = 0; t < 9; ++t) want += log_normal(seq(t, 0), 0.5, 2.0) + log_normal(seq(t, 1), -1.0, 0.5);
  EXPECT_NEAR(hmm_loglik(h, seq), want, 1e-10);
}

TEST(Forward, MatchesPathEnumeration) {
  const auto r = selftest::hmm_enumeration(99, 100);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Forward, LongSequencesDoNotUnderflow) {
  Rng rng(2);
  const auto h = oracle::random_hmm(rng, 2, 2);
  const Matrix seq = oracle::random_matrix(rng, 100000, 2, 3.0);
  const double ll = hmm_loglik(h, seq);
  EXPECT_TRUE(std::isfinite(ll));
  EXPECT_LT(ll, 0.0);
}

TEST(Forward, WidthMismatchIsDimensionError) {
  try {
    hmm_loglik(two_state_example(), Matrix::Zero(3, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
}

TEST(ForwardBackward, StatsAreConsistent) {
  Rng rng(3);
  const auto h = oracle::random_hmm(rng, 3, 2);
  const Matrix seq = oracle::random_matrix(rng, 12, 2);
  const auto s = sequence_stats(h, seq);
  EXPECT_NEAR(s.loglik, hmm_loglik(h, seq), 1e-10);
  EXPECT_NEAR(s.initial.sum(), 1.0, 1e-12);
  EXPECT_NEAR(s.occupancy.sum(), 12.0, 1e-10);
  EXPECT_NEAR(s.transitions.sum(), 11.0, 1e-10);
}

TEST(FlooredDistribution, IsFeasibleAndOptimal) {
  Rng rng(4);
  for (int c = 0; c < 50; ++c) {
    const auto n = static_cast<Eigen::Index>(uniform_int(rng, 2, 6));
    Vector counts(n);
    for (Eigen::Index i = 0; i < n; ++i) counts[i] = uniform01(rng) < 0.3 ? 0.0 : 10 * uniform01(rng);
    const double floor = 0.05;
    const Vector a = floored_distribution(counts, floor);
    EXPECT_NEAR(a.sum(), 1.0, 1e-12);
    EXPECT_GE(a.minCoeff(), floor - 1e-15);
    auto objective = [&](const Vector& p) {
      double s = 0;
      for (Eigen::Index i = 0; i < n; ++i) s += counts[i] > 0 ? counts[i] * std::log(p[i]) : 0.0;
      return s;
    };
    for (int trial = 0; trial < 20; ++trial) {
      Vector p(n);
      for (Eigen::Index i = 0; i < n; ++i) p[i] = uniform01(rng) + 1e-3;
      p = p / p.sum() * (1 - floor * static_cast<double>(n)) + Vector::Constant(n, floor);
      EXPECT_LE(objective(p), objective(a) + 1e-9);
    }
  }
  EXPECT_LE((floored_distribution(Vector::Zero(4), 1e-6) - Vector::Constant(4, 0.25)).norm(), 1e-15);
}

TEST(Em, MonotoneWithFloorsOnRandomDatasets) {
  const auto r = selftest::em_monotone(17, 20);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Em, RestartsAreDeterministic) {
  Rng rng(5);
  const auto truth = oracle::random_hmm(rng, 2, 2);
  std::vector<Matrix> seqs;
  for (int i = 0; i < 6; ++i) seqs.push_back(oracle::random_matrix(rng, 15, 2) + Matrix::Constant(15, 2, i % 2 ? 3.0 : -3.0));
  EmOptions o;
  const auto a = fit_hmm(seqs, 2, 42, o, kernels::serial::estep);
  const auto b = fit_hmm(seqs, 2, 42, o, kernels::omp::estep);
  EXPECT_EQ(a.best.hmm.means, b.best.hmm.means);
  EXPECT_EQ(a.best.hmm.transitions, b.best.hmm.transitions);
  EXPECT_EQ(a.restart_logliks, b.restart_logliks);
  EXPECT_EQ(a.restart_logliks.size(), 5u);
  for (double ll : a.restart_logliks) EXPECT_LE(ll, a.best.final_loglik);
  a.best.hmm.validate(o.variance_floor);
}

TEST(Em, KmeansInitSeparatesClusters) {
  std::vector<Matrix> seqs = {Matrix::Constant(5, 1, -4.0), Matrix::Constant(5, 1, 4.0)};
  seqs[0](0, 0) = -4.5;
  seqs[1](0, 0) = 4.5;
  EmOptions o;
  const auto h = kmeans_init(seqs, 2, 1, o);
  EXPECT_NEAR(std::abs(h.means(0, 0) - h.means(1, 0)), 8.0, 0.2);
  EXPECT_NEAR(h.transitions(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(h.initial[1], 0.5, 1e-15);
  EXPECT_GE(h.variances.minCoeff(), o.variance_floor);
}

TEST(Em, ConstantSequencesHitTheFloor) {
  std::vector<Matrix> seqs(4, Matrix::Constant(6, 2, 1.5));
  EmOptions o;
  const auto fit = fit_hmm(seqs, 2, 3, o, kernels::serial::estep);
  fit.best.hmm.validate(o.variance_floor);
  for (Eigen::Index k = 0; k < 2; ++k) {
    EXPECT_NEAR(fit.best.hmm.means(k, 0), 1.5, 1e-3);
    EXPECT_GE(fit.best.hmm.variances(k, 0), o.variance_floor);
  }
  // i.i.d. Gaussian value at the floored variance
  const double per_frame = 2 * log_normal(1.5, 1.5, o.variance_floor);
  EXPECT_NEAR(fit.best.final_loglik, 24 * per_frame, 1e-6 * std::abs(24 * per_frame));
}
