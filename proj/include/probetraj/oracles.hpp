#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "probetraj/dataset.hpp"
#include "probetraj/hmm.hpp"
#include "probetraj/numkit.hpp"
#include "probetraj/rng.hpp"
#include "probetraj/trajectory.hpp"

// Slow, independent reference computations. Each takes a different route
// from the production code so agreement means something.
namespace probetraj::oracle {

// log p(seq) summed over all K^T state paths.
double hmm_loglik_enumerate(const GaussianHmm& hmm, const Matrix& seq);

// Explicit D x D projector from the eigenvectors of W^T W.
struct Projector {
  Matrix p;        // D x D
  Matrix basis;    // r x D eigenvectors with non-negligible eigenvalue
};
Projector explicit_projector(const Matrix& w);
double energy(const Projector& pr, const Vector& d);
std::optional<double> projected_cosine(const Projector& pr, const Vector& a, const Vector& b);
double max_basis_alignment(const Projector& pr, const Vector& d);

// Every candidate threshold evaluated by direct counting.
ThresholdChoice threshold_scan(std::span<const double> harm, std::span<const double> benign);

// Quadratic substring search.
std::optional<TokenWindow> naive_span(std::span<const std::uint32_t> haystack, std::span<const std::uint32_t> needle);

// Ranks by counting smaller and equal values, then textbook Pearson.
std::vector<double> counting_ranks(std::span<const double> xs);
std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys);

// Leading eigenvectors of the sample covariance, signs canonicalized.
Matrix covariance_components(const Matrix& rows, int q);

// Mean summed in reverse order.
Vector mean_reversed(const Matrix& rows);

// Random instances shared by the selftest and the tests.
GaussianHmm random_hmm(Rng& rng, int k, int q);
Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0);
Vector random_vector(Rng& rng, Eigen::Index n, double scale = 1.0);

}  // namespace probetraj::oracle
