#include "probetraj/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "probetraj/errors.hpp"
#include "probetraj/rng.hpp"

namespace probetraj {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const double* v, Eigen::Index n) {
  double m = kNegInf;
  for (Eigen::Index i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

void require_width(const GaussianHmm& hmm, const Matrix& seq) {
  if (seq.cols() != hmm.dim()) {
    throw Error(ErrorKind::kDimension, "HMM expects observation width " + std::to_string(hmm.dim()) +
                                           ", got " + std::to_string(seq.cols()));
  }
  if (seq.rows() < 1) throw Error(ErrorKind::kArgument, "empty observation sequence");
}

Matrix log_transitions(const GaussianHmm& hmm) { return hmm.transitions.unaryExpr(&safe_log); }

}  // namespace

void GaussianHmm::validate(double variance_floor) const {
  const auto k = n_states();
  if (k < 1) throw Error(ErrorKind::kValidation, "HMM has no states");
  if (transitions.rows() != k || transitions.cols() != k || means.rows() != k || variances.rows() != k ||
      variances.cols() != means.cols()) {
    throw Error(ErrorKind::kValidation, "HMM parameter shapes disagree");
  }
  if (!initial.allFinite() || !transitions.allFinite() || !means.allFinite() || !variances.allFinite()) {
    throw Error(ErrorKind::kValidation, "HMM has non-finite parameters");
  }
  if ((initial.array() < 0.0).any() || std::abs(initial.sum() - 1.0) > 1e-10) {
    throw Error(ErrorKind::kValidation, "initial distribution is not a probability vector");
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    if ((transitions.row(i).array() < 0.0).any() || std::abs(transitions.row(i).sum() - 1.0) > 1e-10) {
      throw Error(ErrorKind::kValidation, "transition row " + std::to_string(i) + " is not stochastic");
    }
  }
  const double floor = std::max(variance_floor, 0.0);
  if ((variances.array() < floor).any() || (variances.array() <= 0.0).any()) {
    throw Error(ErrorKind::kValidation, "emission variance below floor");
  }
}

Matrix emission_log_densities(const GaussianHmm& hmm, const Matrix& seq) {
  require_width(hmm, seq);
  const auto k = hmm.n_states();
  const auto q = hmm.dim();
  Vector log_norm(k);
  Matrix inv_var = hmm.variances.cwiseInverse();
  for (Eigen::Index s = 0; s < k; ++s) {
    double acc = 0.0;
    for (Eigen::Index d = 0; d < q; ++d) acc += std::log(2.0 * std::numbers::pi * hmm.variances(s, d));
    log_norm[s] = -0.5 * acc;
  }
  Matrix out(seq.rows(), k);
  for (Eigen::Index t = 0; t < seq.rows(); ++t) {
    for (Eigen::Index s = 0; s < k; ++s) {
      double quad = 0.0;
      for (Eigen::Index d = 0; d < q; ++d) {
        const double diff = seq(t, d) - hmm.means(s, d);
        quad += diff * diff * inv_var(s, d);
      }
      out(t, s) = log_norm[s] - 0.5 * quad;
    }
  }
  return out;
}

double hmm_loglik(const GaussianHmm& hmm, const Matrix& seq) {
  const Matrix emit = emission_log_densities(hmm, seq);
  const Matrix log_a = log_transitions(hmm);
  const auto k = hmm.n_states();
  Vector alpha(k), next(k), scratch(k);
  for (Eigen::Index s = 0; s < k; ++s) alpha[s] = safe_log(hmm.initial[s]) + emit(0, s);
  for (Eigen::Index t = 1; t < seq.rows(); ++t) {
    for (Eigen::Index j = 0; j < k; ++j) {
      for (Eigen::Index i = 0; i < k; ++i) scratch[i] = alpha[i] + log_a(i, j);
      next[j] = log_sum_exp(scratch.data(), k) + emit(t, j);
    }
    alpha.swap(next);
  }
  return log_sum_exp(alpha.data(), k);
}

HmmStats HmmStats::zeros(Eigen::Index k, Eigen::Index q) {
  HmmStats s;
  s.initial = Vector::Zero(k);
  s.transitions = Matrix::Zero(k, k);
  s.occupancy = Vector::Zero(k);
  s.sum_x = Matrix::Zero(k, q);
  s.sum_xx = Matrix::Zero(k, q);
  return s;
}

void HmmStats::add(const HmmStats& other) {
  loglik += other.loglik;
  initial += other.initial;
  transitions += other.transitions;
  occupancy += other.occupancy;
  sum_x += other.sum_x;
  sum_xx += other.sum_xx;
}

HmmStats sequence_stats(const GaussianHmm& hmm, const Matrix& seq) {
  const Matrix emit = emission_log_densities(hmm, seq);
  const Matrix log_a = log_transitions(hmm);
  const auto k = hmm.n_states();
  const auto q = hmm.dim();
  const auto len = seq.rows();

  Matrix log_alpha(len, k), log_beta(len, k);
  Vector scratch(k);
  for (Eigen::Index s = 0; s < k; ++s) log_alpha(0, s) = safe_log(hmm.initial[s]) + emit(0, s);
  for (Eigen::Index t = 1; t < len; ++t) {
    for (Eigen::Index j = 0; j < k; ++j) {
      for (Eigen::Index i = 0; i < k; ++i) scratch[i] = log_alpha(t - 1, i) + log_a(i, j);
      log_alpha(t, j) = log_sum_exp(scratch.data(), k) + emit(t, j);
    }
  }
  log_beta.row(len - 1).setZero();
  for (Eigen::Index t = len - 2; t >= 0; --t) {
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) scratch[j] = log_a(i, j) + emit(t + 1, j) + log_beta(t + 1, j);
      log_beta(t, i) = log_sum_exp(scratch.data(), k);
    }
  }
  const double ll = log_sum_exp(&log_alpha(len - 1, 0), k);

  auto stats = HmmStats::zeros(k, q);
  stats.loglik = ll;
  if (!std::isfinite(ll)) return stats;
  for (Eigen::Index t = 0; t < len; ++t) {
    for (Eigen::Index s = 0; s < k; ++s) {
      const double gamma = std::exp(log_alpha(t, s) + log_beta(t, s) - ll);
      if (t == 0) stats.initial[s] += gamma;
      stats.occupancy[s] += gamma;
      for (Eigen::Index d = 0; d < q; ++d) {
        const double x = seq(t, d);
        stats.sum_x(s, d) += gamma * x;
        stats.sum_xx(s, d) += gamma * x * x;
      }
    }
    if (t + 1 < len) {
      for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
          stats.transitions(i, j) +=
              std::exp(log_alpha(t, i) + log_a(i, j) + emit(t + 1, j) + log_beta(t + 1, j) - ll);
        }
      }
    }
  }
  return stats;
}

Vector floored_distribution(const Vector& counts, double floor) {
  const auto k = counts.size();
  if (k == 0) return counts;
  const double total = counts.sum();
  if (!(total > 0.0)) return Vector::Constant(k, 1.0 / static_cast<double>(k));
  if (floor <= 0.0) return counts / total;
  if (floor * static_cast<double>(k) >= 1.0) return Vector::Constant(k, 1.0 / static_cast<double>(k));

  std::vector<bool> pinned(static_cast<std::size_t>(k), false);
  Vector out(k);
  for (;;) {
    double free_mass = 0.0;
    Eigen::Index n_pinned = 0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (pinned[static_cast<std::size_t>(j)]) {
        ++n_pinned;
      } else {
        free_mass += counts[j];
      }
    }
    const double budget = 1.0 - floor * static_cast<double>(n_pinned);
    bool changed = false;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (pinned[static_cast<std::size_t>(j)]) {
        out[j] = floor;
        continue;
      }
      out[j] = free_mass > 0.0 ? budget * counts[j] / free_mass : 0.0;
      if (out[j] < floor) {
        pinned[static_cast<std::size_t>(j)] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return out / out.sum();
}

GaussianHmm m_step(const HmmStats& stats, const GaussianHmm& previous, const EmOptions& options) {
  const auto k = previous.n_states();
  const auto q = previous.dim();
  GaussianHmm next = previous;
  next.initial = floored_distribution(stats.initial, options.probability_floor);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Vector row = stats.transitions.row(i).transpose();
    if (row.sum() > 0.0) next.transitions.row(i) = floored_distribution(row, options.probability_floor).transpose();
  }
  for (Eigen::Index s = 0; s < k; ++s) {
    const double occ = stats.occupancy[s];
    if (!(occ > 0.0)) continue;  // unvisited state keeps its emission parameters
    for (Eigen::Index d = 0; d < q; ++d) {
      const double mean = stats.sum_x(s, d) / occ;
      const double var = stats.sum_xx(s, d) / occ - mean * mean;
      next.means(s, d) = mean;
      next.variances(s, d) = std::max(var, options.variance_floor);
    }
  }
  return next;
}

GaussianHmm kmeans_init(std::span<const Matrix> seqs, int n_states, std::uint64_t seed, const EmOptions& options) {
  if (n_states < 1) throw Error(ErrorKind::kArgument, "HMM needs at least one state");
  if (seqs.empty()) throw Error(ErrorKind::kInsufficientData, "no sequences to fit");
  const auto q = seqs.front().cols();
  Eigen::Index total = 0;
  for (const auto& s : seqs) {
    if (s.cols() != q) throw Error(ErrorKind::kDimension, "sequences disagree in width");
    total += s.rows();
  }
  if (total < 1) throw Error(ErrorKind::kInsufficientData, "no frames to fit");
  Matrix frames(total, q);
  Eigen::Index at = 0;
  for (const auto& s : seqs) {
    frames.middleRows(at, s.rows()) = s;
    at += s.rows();
  }

  const auto k = static_cast<Eigen::Index>(n_states);
  Rng rng(seed);
  Matrix centers(k, q);
  Vector best_d2 = Vector::Constant(total, std::numeric_limits<double>::infinity());
  centers.row(0) = frames.row(static_cast<Eigen::Index>(uniform_int(rng, 0, static_cast<std::uint64_t>(total - 1))));
  for (Eigen::Index c = 1; c < k; ++c) {
    double mass = 0.0;
    for (Eigen::Index i = 0; i < total; ++i) {
      best_d2[i] = std::min(best_d2[i], (frames.row(i) - centers.row(c - 1)).squaredNorm());
      mass += best_d2[i];
    }
    Eigen::Index pick = 0;
    if (mass > 0.0) {
      double target = uniform01(rng) * mass;
      for (pick = 0; pick < total - 1; ++pick) {
        target -= best_d2[pick];
        if (target < 0.0) break;
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_int(rng, 0, static_cast<std::uint64_t>(total - 1)));
    }
    centers.row(c) = frames.row(pick);
  }

  std::vector<Eigen::Index> assign(static_cast<std::size_t>(total), 0);
  for (int iter = 0; iter < options.kmeans_iterations; ++iter) {
    bool moved = false;
    for (Eigen::Index i = 0; i < total; ++i) {
      Eigen::Index best = 0;
      double best_dist = (frames.row(i) - centers.row(0)).squaredNorm();
      for (Eigen::Index c = 1; c < k; ++c) {
        const double dist = (frames.row(i) - centers.row(c)).squaredNorm();
        if (dist < best_dist) {
          best_dist = dist;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best || iter == 0) {
        moved = moved || assign[static_cast<std::size_t>(i)] != best;
        assign[static_cast<std::size_t>(i)] = best;
      }
    }
    Matrix sums = Matrix::Zero(k, q);
    Vector counts = Vector::Zero(k);
    for (Eigen::Index i = 0; i < total; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += frames.row(i);
      counts[assign[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[c] > 0.0) centers.row(c) = sums.row(c) / counts[c];
    }
    if (!moved && iter > 0) break;
  }

  const Eigen::RowVectorXd global_mean = frames.colwise().mean();
  Eigen::RowVectorXd global_var = (frames.rowwise() - global_mean).array().square().colwise().mean();
  GaussianHmm hmm;
  hmm.initial = Vector::Constant(k, 1.0 / static_cast<double>(k));
  hmm.transitions = Matrix::Constant(k, k, 1.0 / static_cast<double>(k));
  hmm.means = centers;
  hmm.variances.resize(k, q);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(q);
    double n = 0.0;
    for (Eigen::Index i = 0; i < total; ++i) {
      if (assign[static_cast<std::size_t>(i)] != c) continue;
      acc += (frames.row(i) - centers.row(c)).array().square().matrix();
      n += 1.0;
    }
    const Eigen::RowVectorXd var = n >= 2.0 ? Eigen::RowVectorXd(acc / n) : global_var;
    hmm.variances.row(c) = var.cwiseMax(options.variance_floor);
  }
  return hmm;
}

EmRun run_em(GaussianHmm init, std::span<const Matrix> seqs, const EmOptions& options, const EstepFn& estep,
             const EmObserver& observer) {
  EmRun run;
  run.hmm = std::move(init);
  for (int iter = 0;; ++iter) {
    const HmmStats stats = estep(run.hmm, seqs);
    run.loglik_history.push_back(stats.loglik);
    run.final_loglik = stats.loglik;
    if (iter > 0) {
      const double prev = run.loglik_history[run.loglik_history.size() - 2];
      const double gain = stats.loglik - prev;
      if (gain < options.tolerance * std::max(std::abs(prev), 1e-300)) {
        run.converged = true;
        break;
      }
    }
    if (iter >= options.max_iterations) break;
    if (!std::isfinite(stats.loglik)) break;
    run.hmm = m_step(stats, run.hmm, options);
    run.iterations = iter + 1;
    if (observer) observer(run.iterations, run.hmm);
  }
  return run;
}

HmmFit fit_hmm(std::span<const Matrix> seqs, int n_states, std::uint64_t seed, const EmOptions& options,
               const EstepFn& estep) {
  HmmFit fit;
  const int restarts = std::max(options.restarts, 1);
  for (int r = 0; r < restarts; ++r) {
    auto init = kmeans_init(seqs, n_states, derive_seed(seed, {0x4B4D45414E53ULL, static_cast<std::uint64_t>(r)}),
                            options);
    auto run = run_em(std::move(init), seqs, options, estep);
    fit.restart_logliks.push_back(run.final_loglik);
    fit.restart_iterations.push_back(run.iterations);
    if (r == 0 || run.final_loglik > fit.best.final_loglik) {
      fit.best = std::move(run);
      fit.best_restart = r;
    }
  }
  return fit;
}

}  // namespace probetraj
