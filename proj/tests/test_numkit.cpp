#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "probetraj/errors.hpp"
#include "probetraj/numkit.hpp"
#include "probetraj/oracles.hpp"

using namespace probetraj;
using namespace probetraj::numkit;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

OrthonormalBasis e12(Eigen::Index dim) {
  Matrix w = Matrix::Zero(2, dim);
  w(0, 0) = 1;
  w(1, 1) = 1;
  return thin_svd_rowspace(w);
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error";
  return ErrorKind::kArgument;
}

}  // namespace

TEST(Mean, Examples) {
  Matrix a(1, 2);
  a << 1, 3;
  EXPECT_EQ(mean_vector(a), vec({1, 3}));
  Matrix b(2, 2);
  b << 0, 0, 2, 4;
  EXPECT_EQ(mean_vector(b), vec({1, 2}));
  EXPECT_EQ(kind_of([] { mean_vector(Matrix(0, 3)); }), ErrorKind::kEmptySet);
}

TEST(Mean, MatchesReversedSummation) {
  Rng rng(1);
  const Matrix m = oracle::random_matrix(rng, 1000, 7, 5.0);
  EXPECT_LE((mean_vector(m) - oracle::mean_reversed(m)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Unit, Examples) {
  EXPECT_LE((unit(vec({3, 4})) - vec({0.6, 0.8})).norm(), 1e-15);
  EXPECT_EQ(kind_of([] { unit(vec({0, 0})); }), ErrorKind::kDegenerateDirection);
  Rng rng(2);
  const Vector v = oracle::random_vector(rng, 9);
  EXPECT_NEAR(unit(v).norm(), 1.0, 1e-12);
  EXPECT_LE((unit(unit(v)) - unit(v)).norm(), 1e-12);
}

TEST(RowSpace, Examples) {
  Matrix w(2, 3);
  w << 2, 0, 0, 0, 0, 0;
  const auto b = thin_svd_rowspace(w);
  ASSERT_EQ(b.rank(), 1);
  EXPECT_NEAR(b.singular_values[0], 2.0, 1e-14);
  EXPECT_LE((b.vectors.row(0).transpose() - vec({1, 0, 0})).norm(), 1e-14);

  Matrix w2 = Matrix::Zero(2, 4);
  w2(0, 0) = 1;
  w2(1, 1) = 3;
  const auto b2 = thin_svd_rowspace(w2);
  EXPECT_EQ(b2.rank(), 2);
  EXPECT_NEAR(subspace_energy(b2, vec({1, 1, 0, 0})), 1.0, 1e-14);
  EXPECT_NEAR(subspace_energy(b2, vec({0, 0, 1, 1})), 0.0, 1e-14);

  EXPECT_EQ(kind_of([] { thin_svd_rowspace(Matrix::Zero(3, 3)); }), ErrorKind::kRankZero);
}

TEST(RowSpace, ProjectorReconstructsW) {
  Rng rng(3);
  const Matrix w = oracle::random_matrix(rng, 8, 32);
  const auto b = thin_svd_rowspace(w);
  const Matrix pi = b.vectors.transpose() * b.vectors;
  EXPECT_LE((w * pi - w).norm() / w.norm(), 1e-10);
  EXPECT_LE((b.vectors * b.vectors.transpose() - Matrix::Identity(b.rank(), b.rank())).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((pi * pi - pi).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(RowSpace, SingularValuesMatchGramEigenvalues) {
  Rng rng(4);
  for (int c = 0; c < 20; ++c) {
    const auto w = oracle::random_matrix(rng, static_cast<Eigen::Index>(uniform_int(rng, 1, 16)),
                                         static_cast<Eigen::Index>(uniform_int(rng, 16, 64)));
    const auto b = thin_svd_rowspace(w);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w * w.transpose());
    const Vector ev = es.eigenvalues().reverse();
    for (Eigen::Index i = 0; i < b.rank(); ++i) EXPECT_NEAR(b.singular_values[static_cast<std::size_t>(i)], std::sqrt(ev[i]), 1e-8);
    for (std::size_t i = 1; i < b.singular_values.size(); ++i) EXPECT_GE(b.singular_values[i - 1], b.singular_values[i]);
  }
}

TEST(Energy, Examples) {
  EXPECT_NEAR(subspace_energy(e12(4), vec({1, 1, 1, 1})), 0.5, 1e-15);
  EXPECT_EQ(kind_of([] { subspace_energy(e12(4), vec({0, 0, 0, 0})); }), ErrorKind::kDegenerateDirection);
}

TEST(Energy, MatchesExplicitProjector) {
  Rng rng(5);
  for (int c = 0; c < 20; ++c) {
    const Matrix w = oracle::random_matrix(rng, 5, 64);
    const auto b = thin_svd_rowspace(w);
    const auto pr = oracle::explicit_projector(w);
    const Vector d = oracle::random_vector(rng, 64);
    EXPECT_NEAR(subspace_energy(b, d), oracle::energy(pr, d), 1e-10);
  }
}

TEST(Energy, MonotoneAsRowsAreAppended) {
  Rng rng(6);
  const Matrix w = oracle::random_matrix(rng, 6, 10);
  const Vector d = oracle::random_vector(rng, 10);
  double prev = 0.0;
  for (Eigen::Index r = 1; r <= 6; ++r) {
    const double e = subspace_energy(thin_svd_rowspace(w.topRows(r)), d);
    EXPECT_GE(e, prev - 1e-12);
    EXPECT_LE(e, 1.0);
    prev = e;
  }
}

TEST(Cosine, Examples) {
  EXPECT_NEAR(cosine(vec({1, 0}), vec({0, 1})), 0.0, 1e-15);
  EXPECT_NEAR(cosine(vec({1, 2}), vec({2, 4})), 1.0, 1e-15);
  EXPECT_NEAR(cosine(vec({1, 1}), vec({1, -1})), 0.0, 1e-15);
  EXPECT_EQ(kind_of([] { cosine(vec({0, 0}), vec({1, 1})); }), ErrorKind::kDegenerateDirection);
}

TEST(ProjectedCosine, SignFlipExample) {
  const auto b = e12(3);
  const Vector a = vec({1, 0, 1}), c = vec({1, 0, -1});
  EXPECT_NEAR(projected_cosine(b, a, c), 1.0, 1e-15);
  EXPECT_NEAR(cosine(a, c), 0.0, 1e-15);
  Rng rng(7);
  const Vector r = oracle::random_vector(rng, 3);
  EXPECT_NEAR(projected_cosine(b, r, r), 1.0, 1e-14);
  EXPECT_EQ(kind_of([&] { projected_cosine(b, vec({0, 0, 1}), a); }), ErrorKind::kProjectedDegenerate);
}

TEST(MaxBasisAlignment, Examples) {
  EXPECT_NEAR(max_basis_alignment(e12(3), vec({0.6, 0.8, 0})), 0.8, 1e-15);
  EXPECT_NEAR(max_basis_alignment(e12(3), vec({0, 0, 2})), 0.0, 1e-15);
  Rng rng(8);
  const Matrix w = oracle::random_matrix(rng, 4, 9);
  const auto b = thin_svd_rowspace(w);
  const Vector d = oracle::random_vector(rng, 9);
  double scan = 0.0;
  for (Eigen::Index i = 0; i < b.rank(); ++i) scan = std::max(scan, std::abs(cosine(b.vectors.row(i).transpose(), d)));
  EXPECT_EQ(max_basis_alignment(b, d), scan);
}

TEST(Pca, LineThroughOrigin) {
  Matrix rows(5, 3);
  for (int i = 0; i < 5; ++i) rows.row(i) = (i - 2.0) * vec({1, 2, 2}).transpose();
  const auto m = fit_pca(rows, 1);
  ASSERT_EQ(m.n_components(), 1);
  EXPECT_LE((m.components.row(0).transpose() - vec({1, 2, 2}) / 3.0).norm(), 1e-12);
  const auto all = fit_pca(rows, 3);
  EXPECT_EQ(all.n_components(), 1);  // reduced to the effective rank
  EXPECT_FALSE(all.warnings.empty());
  double total = 0;
  for (double v : all.explained_variance) total += v;
  EXPECT_NEAR(all.explained_variance[0] / total, 1.0, 1e-10);
}

TEST(Pca, TracePreservedWithFullRank) {
  Rng rng(9);
  const Matrix rows = oracle::random_matrix(rng, 300, 6);
  const auto m = fit_pca(rows, 6);
  const Vector mu = mean_vector(rows);
  double coord_var = 0;
  for (Eigen::Index j = 0; j < 6; ++j) coord_var += (rows.col(j).array() - mu[j]).square().sum() / 299.0;
  double ev = 0;
  for (double v : m.explained_variance) ev += v;
  EXPECT_NEAR(ev, coord_var, 1e-8);
  for (std::size_t i = 1; i < m.explained_variance.size(); ++i) EXPECT_GE(m.explained_variance[i - 1], m.explained_variance[i]);
  EXPECT_LE((m.components * m.components.transpose() - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pca, MatchesCovarianceEigenvectors) {
  Rng rng(10);
  Matrix rows = oracle::random_matrix(rng, 200, 16);
  for (Eigen::Index j = 0; j < 16; ++j) rows.col(j) *= 1.0 + 0.5 * static_cast<double>(j);  // distinct spectrum
  const auto m = fit_pca(rows, 4);
  const Matrix ref = oracle::covariance_components(rows, 4);
  EXPECT_LE((m.components - ref).cwiseAbs().maxCoeff(), 1e-8);
  // projection residuals agree
  const Matrix z = pca_project(m, rows);
  const Matrix centered = rows.rowwise() - m.mean.transpose();
  const Matrix resid = centered - z * m.components;
  const Matrix resid_ref = centered - centered * ref.transpose() * ref;
  EXPECT_NEAR(resid.norm(), resid_ref.norm(), 1e-8);
}

TEST(Pca, ProjectionExamples) {
  Rng rng(11);
  const Matrix rows = oracle::random_matrix(rng, 50, 5);
  const auto m = fit_pca(rows, 3);
  EXPECT_LE(pca_project(m, m.mean.transpose()).norm(), 1e-12);
  const Matrix one = (m.mean + m.components.row(0).transpose()).transpose();
  EXPECT_LE((pca_project(m, one).transpose() - vec({1, 0, 0})).norm(), 1e-12);
  EXPECT_EQ(kind_of([&] { pca_project(m, Matrix::Zero(1, 4)); }), ErrorKind::kDimension);
  EXPECT_EQ(kind_of([] { fit_pca(Matrix::Zero(1, 3), 1); }), ErrorKind::kInsufficientData);
}

TEST(Pca, DiscardedVarianceAccountsForResidual) {
  Rng rng(12);
  const Matrix rows = oracle::random_matrix(rng, 80, 6);
  const auto m = fit_pca(rows, 6);
  const auto keep = fit_pca(rows, 2);
  const Matrix centered = rows.rowwise() - keep.mean.transpose();
  const Matrix resid = centered - pca_project(keep, rows) * keep.components;
  double discarded = 0;
  for (std::size_t i = 2; i < m.explained_variance.size(); ++i) discarded += m.explained_variance[i];
  EXPECT_NEAR(resid.squaredNorm() / 79.0, discarded, 1e-6);
}

TEST(Spearman, Examples) {
  const std::vector<double> x = {1, 2, 3}, y = {10, 20, 30}, z = {3, 2, 1};
  EXPECT_NEAR(spearman(x, y), 1.0, 1e-15);
  EXPECT_NEAR(spearman(x, z), -1.0, 1e-15);
  const std::vector<double> flat = {2, 2, 2};
  EXPECT_EQ(kind_of([&] { spearman(x, flat); }), ErrorKind::kUndefinedCorrelation);
  const std::vector<double> one = {1};
  EXPECT_EQ(kind_of([&] { spearman(one, one); }), ErrorKind::kUndefinedCorrelation);
}

TEST(Spearman, AverageRanksForTies) {
  const std::vector<double> x = {10, 20, 20, 5};
  EXPECT_EQ(average_ranks(x), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Spearman, MatchesRankThenPearsonOracle) {
  Rng rng(13);
  for (int c = 0; c < 50; ++c) {
    const auto n = uniform_int(rng, 3, 40);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(uniform_int(rng, 0, 5));
      y[i] = static_cast<double>(uniform_int(rng, 0, 5));
    }
    const auto want = oracle::spearman(x, y);
    if (!want) continue;
    EXPECT_NEAR(spearman(x, y), *want, 1e-10);
    std::vector<double> cubed(n);
    for (std::size_t i = 0; i < n; ++i) cubed[i] = y[i] * y[i] * y[i];
    EXPECT_NEAR(spearman(x, cubed), *want, 1e-12);
  }
}
