#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "probetraj/types.hpp"

namespace probetraj {

// K-state HMM with diagonal-covariance Gaussian emissions in q dimensions.
struct GaussianHmm {
  Vector initial;      // K
  Matrix transitions;  // K x K, row-stochastic
  Matrix means;        // K x q
  Matrix variances;    // K x q, each >= the variance floor

  Eigen::Index n_states() const noexcept { return initial.size(); }
  Eigen::Index dim() const noexcept { return means.cols(); }

  // Checks stochasticity (1e-10) and the variance floor.
  void validate(double variance_floor = 0.0) const;
};

// T x K table of log N(x_t; mean_k, diag(var_k)).
Matrix emission_log_densities(const GaussianHmm& hmm, const Matrix& seq);

// log p(seq) by the forward recursion in log space.
double hmm_loglik(const GaussianHmm& hmm, const Matrix& seq);

// Expected counts from one forward-backward pass; additive across sequences.
struct HmmStats {
  double loglik = 0.0;
  Vector initial;      // sum of gamma_0
  Matrix transitions;  // sum over t of xi_t
  Vector occupancy;    // sum over t of gamma_t
  Matrix sum_x;        // K x q
  Matrix sum_xx;       // K x q

  static HmmStats zeros(Eigen::Index k, Eigen::Index q);
  void add(const HmmStats& other);
};

HmmStats sequence_stats(const GaussianHmm& hmm, const Matrix& seq);

struct EmOptions {
  int max_iterations = 100;
  double tolerance = 1e-4;  // relative log-likelihood improvement
  int restarts = 5;
  double variance_floor = 1e-6;
  double probability_floor = 1e-6;
  int kmeans_iterations = 50;
};

// Sums sequence statistics; the E-step kernel is swappable so the serial
// reference and the OpenMP variant can both drive EM.
using EstepFn = std::function<HmmStats(const GaussianHmm&, std::span<const Matrix>)>;

// Exact constrained maximizer of sum_j c_j log a_j over the simplex with
// a_j >= floor (water-filling); uniform when all counts vanish.
Vector floored_distribution(const Vector& counts, double floor);

GaussianHmm m_step(const HmmStats& stats, const GaussianHmm& previous, const EmOptions& options);

// Seeded k-means++ split of the pooled frames: uniform initial and transition
// probabilities, cluster means, per-cluster variances.
GaussianHmm kmeans_init(std::span<const Matrix> seqs, int n_states, std::uint64_t seed, const EmOptions& options);

struct EmRun {
  GaussianHmm hmm;
  std::vector<double> loglik_history;  // log-likelihood of the parameters entering each E-step
  int iterations = 0;                  // M-steps taken
  bool converged = false;
  double final_loglik = 0.0;  // log-likelihood of `hmm`
};

// Observer called after every M-step with the new parameters.
using EmObserver = std::function<void(int iteration, const GaussianHmm&)>;

EmRun run_em(GaussianHmm init, std::span<const Matrix> seqs, const EmOptions& options, const EstepFn& estep,
             const EmObserver& observer = {});

struct HmmFit {
  EmRun best;
  int best_restart = 0;
  std::vector<double> restart_logliks;
  std::vector<int> restart_iterations;
};

HmmFit fit_hmm(std::span<const Matrix> seqs, int n_states, std::uint64_t seed, const EmOptions& options,
               const EstepFn& estep);

}  // namespace probetraj
