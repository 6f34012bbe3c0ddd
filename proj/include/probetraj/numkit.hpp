#pragma once

#include <span>
#include <string>
#include <vector>

#include "probetraj/types.hpp"

namespace probetraj {

// Rows are an orthonormal basis of a subspace of R^D.
struct OrthonormalBasis {
  Matrix vectors;  // r x D
  std::vector<double> singular_values;

  Eigen::Index rank() const noexcept { return vectors.rows(); }
  Eigen::Index dim() const noexcept { return vectors.cols(); }
};

struct PcaModel {
  Vector mean;
  Matrix components;  // q x D, principal axes as rows
  std::vector<double> explained_variance;
  int requested_components = 0;
  std::vector<std::string> warnings;

  Eigen::Index n_components() const noexcept { return components.rows(); }
  Eigen::Index dim() const noexcept { return components.cols(); }
};

namespace numkit {

Vector mean_vector(const Matrix& rows);
Vector unit(const Vector& v);

// Right singular vectors of W with sigma_i > sigma_max * max(w, D) * 1e-12.
OrthonormalBasis thin_svd_rowspace(const Matrix& w);

// Sum_i <b_i, d>^2 / |d|^2 over the basis rows; the D x D projector is never formed.
double subspace_energy(const Matrix& basis_rows, const Vector& d);
double subspace_energy(const OrthonormalBasis& basis, const Vector& d);
double subspace_energy(const PcaModel& pca, const Vector& d);

double cosine(const Vector& a, const Vector& b);
double projected_cosine(const OrthonormalBasis& basis, const Vector& a, const Vector& b);
double max_basis_alignment(const OrthonormalBasis& basis, const Vector& d);

PcaModel fit_pca(const Matrix& rows, int q);
Matrix pca_project(const PcaModel& model, const Matrix& rows);

// Average ranks (1-based); ties share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> xs);
double pearson(std::span<const double> xs, std::span<const double> ys);
double spearman(std::span<const double> xs, std::span<const double> ys);

// Flips each row so that its largest-magnitude coordinate is positive.
void canonicalize_signs(Matrix& rows);

}  // namespace numkit
}  // namespace probetraj
