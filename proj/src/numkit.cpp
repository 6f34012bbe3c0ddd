#include "probetraj/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "probetraj/errors.hpp"

namespace probetraj::numkit {
namespace {

constexpr double kRankTolFactor = 1e-12;
constexpr double kProjectedNormFloor = 1e-12;

double squared_norm(const Vector& v) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += v[i] * v[i];
  return s;
}

double dot(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Vector& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < b.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_dim(Eigen::Index expected, Eigen::Index got, const char* what) {
  if (expected != got) {
    throw Error(ErrorKind::kDimension, std::string(what) + ": expected length " + std::to_string(expected) +
                                           ", got " + std::to_string(got));
  }
}

void require_nonzero(const Vector& v, const char* what) {
  if (!(squared_norm(v) > 0.0)) throw Error(ErrorKind::kDegenerateDirection, std::string(what) + " is zero");
}

}  // namespace

Vector mean_vector(const Matrix& rows) {
  if (rows.rows() == 0) throw Error(ErrorKind::kEmptySet, "mean of an empty set is undefined");
  Vector acc = Vector::Zero(rows.cols());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) acc += rows.row(r).transpose();
  return acc / static_cast<double>(rows.rows());
}

Vector unit(const Vector& v) {
  require_nonzero(v, "vector");
  return v / std::sqrt(squared_norm(v));
}

void canonicalize_signs(Matrix& rows) {
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    Eigen::Index arg = 0;
    for (Eigen::Index c = 1; c < rows.cols(); ++c) {
      if (std::abs(rows(r, c)) > std::abs(rows(r, arg))) arg = c;
    }
    if (rows(r, arg) < 0.0) rows.row(r) *= -1.0;
  }
}

OrthonormalBasis thin_svd_rowspace(const Matrix& w) {
  if (w.rows() < 1 || w.cols() < 1) throw Error(ErrorKind::kDimension, "empty weight matrix");
  if (!w.allFinite()) throw Error(ErrorKind::kValidation, "weight matrix has non-finite entries");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(w), Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double sigma_max = sv.size() > 0 ? sv[0] : 0.0;
  if (!(sigma_max > 0.0)) throw Error(ErrorKind::kRankZero, "weight matrix is all zero");
  const double tol = sigma_max * static_cast<double>(std::max(w.rows(), w.cols())) * kRankTolFactor;
  Eigen::Index r = 0;
  while (r < sv.size() && sv[r] > tol) ++r;

  OrthonormalBasis basis;
  basis.vectors = svd.matrixV().leftCols(r).transpose();
  canonicalize_signs(basis.vectors);
  basis.singular_values.assign(sv.data(), sv.data() + r);
  return basis;
}

double subspace_energy(const Matrix& basis_rows, const Vector& d) {
  require_dim(basis_rows.cols(), d.size(), "direction");
  require_nonzero(d, "direction");
  double captured = 0.0;
  for (Eigen::Index i = 0; i < basis_rows.rows(); ++i) {
    const double c = dot(basis_rows.row(i), d);
    captured += c * c;
  }
  return std::clamp(captured / squared_norm(d), 0.0, 1.0);
}

double subspace_energy(const OrthonormalBasis& basis, const Vector& d) {
  return subspace_energy(basis.vectors, d);
}

double subspace_energy(const PcaModel& pca, const Vector& d) { return subspace_energy(pca.components, d); }

double cosine(const Vector& a, const Vector& b) {
  require_dim(a.size(), b.size(), "cosine operand");
  require_nonzero(a, "first cosine operand");
  require_nonzero(b, "second cosine operand");
  double ab = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) ab += a[i] * b[i];
  return std::clamp(ab / std::sqrt(squared_norm(a) * squared_norm(b)), -1.0, 1.0);
}

double projected_cosine(const OrthonormalBasis& basis, const Vector& a, const Vector& b) {
  require_dim(basis.dim(), a.size(), "first operand");
  require_dim(basis.dim(), b.size(), "second operand");
  // Coordinates in the orthonormal basis carry the same inner products as the
  // projections themselves.
  Vector ca(basis.rank()), cb(basis.rank());
  for (Eigen::Index i = 0; i < basis.rank(); ++i) {
    ca[i] = dot(basis.vectors.row(i), a);
    cb[i] = dot(basis.vectors.row(i), b);
  }
  const double na = std::sqrt(squared_norm(ca));
  const double nb = std::sqrt(squared_norm(cb));
  if (na < kProjectedNormFloor || nb < kProjectedNormFloor) {
    throw Error(ErrorKind::kProjectedDegenerate, "projection onto the subspace vanishes");
  }
  double ab = 0.0;
  for (Eigen::Index i = 0; i < ca.size(); ++i) ab += ca[i] * cb[i];
  return std::clamp(ab / (na * nb), -1.0, 1.0);
}

double max_basis_alignment(const OrthonormalBasis& basis, const Vector& d) {
  require_dim(basis.dim(), d.size(), "direction");
  require_nonzero(d, "direction");
  double best = 0.0;
  for (Eigen::Index i = 0; i < basis.rank(); ++i) {
    best = std::max(best, std::abs(cosine(basis.vectors.row(i).transpose(), d)));
  }
  return best;
}

PcaModel fit_pca(const Matrix& rows, int q) {
  const auto n = rows.rows();
  const auto dim = rows.cols();
  if (n < 2) throw Error(ErrorKind::kInsufficientData, "PCA needs at least two rows, got " + std::to_string(n));
  if (q < 1) throw Error(ErrorKind::kArgument, "PCA component count must be positive");

  PcaModel model;
  model.requested_components = q;
  model.mean = mean_vector(rows);
  Eigen::MatrixXd centered = rows;
  centered.rowwise() -= model.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double sigma_max = sv.size() > 0 ? sv[0] : 0.0;
  const double tol = sigma_max * static_cast<double>(std::max(n, dim)) * kRankTolFactor;
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv[rank] > tol) ++rank;
  if (rank == 0) throw Error(ErrorKind::kInsufficientData, "PCA input has zero variance");

  Eigen::Index keep = std::min<Eigen::Index>({static_cast<Eigen::Index>(q), rank, n - 1, dim});
  if (keep < q) {
    model.warnings.push_back("requested " + std::to_string(q) + " components, reduced to " +
                             std::to_string(keep) + " (effective rank " + std::to_string(rank) + ")");
  }
  model.components = svd.matrixV().leftCols(keep).transpose();
  canonicalize_signs(model.components);
  model.explained_variance.resize(static_cast<std::size_t>(keep));
  for (Eigen::Index i = 0; i < keep; ++i) {
    model.explained_variance[static_cast<std::size_t>(i)] = sv[i] * sv[i] / static_cast<double>(n - 1);
  }
  return model;
}

Matrix pca_project(const PcaModel& model, const Matrix& rows) {
  if (rows.cols() != model.dim()) {
    throw Error(ErrorKind::kDimension, "PCA expects width " + std::to_string(model.dim()) + ", got " +
                                           std::to_string(rows.cols()));
  }
  Matrix centered = rows;
  centered.rowwise() -= model.mean.transpose();
  return centered * model.components.transpose();
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error(ErrorKind::kDimension, "correlation inputs differ in length");
  if (xs.size() < 2) throw Error(ErrorKind::kUndefinedCorrelation, "need at least two pairs");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorKind::kUndefinedCorrelation, "constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error(ErrorKind::kDimension, "correlation inputs differ in length");
  if (xs.size() < 2) throw Error(ErrorKind::kUndefinedCorrelation, "need at least two pairs");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

}  // namespace probetraj::numkit
