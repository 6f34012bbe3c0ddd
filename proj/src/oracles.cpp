#include "probetraj/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <Eigen/Eigenvalues>

namespace probetraj::oracle {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double log_normal_diag(const GaussianHmm& h, Eigen::Index k, const Eigen::Ref<const Vector>& x) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double v = h.variances(k, j);
    const double z = x[j] - h.means(k, j);
    s += -0.5 * (kLog2Pi + std::log(v) + z * z / v);
  }
  return s;
}

}  // namespace

double hmm_loglik_enumerate(const GaussianHmm& hmm, const Matrix& seq) {
  const auto k = hmm.n_states();
  const auto t_len = seq.rows();
  std::vector<Eigen::Index> path(static_cast<std::size_t>(t_len), 0);
  std::vector<double> terms;
  while (true) {
    double lp = std::log(hmm.initial[path[0]]) + log_normal_diag(hmm, path[0], seq.row(0).transpose());
    for (Eigen::Index t = 1; t < t_len; ++t) {
      const auto a = path[static_cast<std::size_t>(t - 1)], b = path[static_cast<std::size_t>(t)];
      lp += std::log(hmm.transitions(a, b)) + log_normal_diag(hmm, b, seq.row(t).transpose());
    }
    terms.push_back(lp);
    // odometer increment
    std::size_t pos = 0;
    while (pos < path.size() && ++path[pos] == k) path[pos++] = 0;
    if (pos == path.size()) break;
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double x : terms) s += std::exp(x - m);
  return m + std::log(s);
}

Projector explicit_projector(const Matrix& w) {
  const Matrix gram = w.transpose() * w;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const Vector ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  const double tol = std::max<double>(top, std::numeric_limits<double>::min()) * 1e-12 *
                     static_cast<double>(std::max(w.rows(), w.cols()));
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = ev.size() - 1; i >= 0; --i) {
    if (ev[i] > tol) keep.push_back(i);
  }
  Projector pr;
  pr.basis.resize(static_cast<Eigen::Index>(keep.size()), w.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) pr.basis.row(static_cast<Eigen::Index>(r)) = es.eigenvectors().col(keep[r]).transpose();
  pr.p = pr.basis.transpose() * pr.basis;
  return pr;
}

double energy(const Projector& pr, const Vector& d) {
  const Vector pd = pr.p * d;
  return d.dot(pd) / d.squaredNorm();
}

std::optional<double> projected_cosine(const Projector& pr, const Vector& a, const Vector& b) {
  const Vector pa = pr.p * a;
  const Vector pb = pr.p * b;
  if (pa.norm() < 1e-12 || pb.norm() < 1e-12) return std::nullopt;
  return std::clamp(pa.dot(pb) / (pa.norm() * pb.norm()), -1.0, 1.0);
}

double max_basis_alignment(const Projector& pr, const Vector& d) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < pr.basis.rows(); ++i) {
    const Vector v = pr.basis.row(i).transpose();
    best = std::max(best, std::abs(v.dot(d)) / (v.norm() * d.norm()));
  }
  return best;
}

ThresholdChoice threshold_scan(std::span<const double> harm, std::span<const double> benign) {
  std::set<double> uniq(harm.begin(), harm.end());
  uniq.insert(benign.begin(), benign.end());
  const std::vector<double> v(uniq.begin(), uniq.end());
  std::vector<double> cands;
  cands.push_back(v.front() - std::max(1.0, std::abs(v.front())));
  for (std::size_t i = 0; i + 1 < v.size(); ++i) cands.push_back(0.5 * (v[i] + v[i + 1]));
  cands.push_back(v.back() + std::max(1.0, std::abs(v.back())));
  ThresholdChoice best{0.0, -1.0};
  for (double tau : cands) {
    std::size_t tp = 0, tn = 0;
    for (double s : harm) tp += s > tau;
    for (double s : benign) tn += !(s > tau);
    const double acc = 0.5 * (static_cast<double>(tp) / static_cast<double>(harm.size()) +
                              static_cast<double>(tn) / static_cast<double>(benign.size()));
    if (acc > best.accuracy) best = ThresholdChoice{tau, acc};
  }
  return best;
}

std::optional<TokenWindow> naive_span(std::span<const std::uint32_t> h, std::span<const std::uint32_t> n) {
  if (n.size() > h.size()) return std::nullopt;
  for (std::size_t s = 0; s + n.size() <= h.size(); ++s) {
    bool ok = true;
    for (std::size_t j = 0; j < n.size() && ok; ++j) ok = h[s + j] == n[j];
    if (ok) return TokenWindow{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s + n.size())};
  }
  return std::nullopt;
}

std::vector<double> counting_ranks(std::span<const double> xs) {
  std::vector<double> r(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (double y : xs) {
      less += y < xs[i];
      equal += y == xs[i];
    }
    r[i] = static_cast<double>(less) + 0.5 * static_cast<double>(equal + 1);
  }
  return r;
}

std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys) {
  const auto rx = counting_ranks(xs), ry = counting_ranks(ys);
  const auto n = static_cast<double>(rx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

Matrix covariance_components(const Matrix& rows, int q) {
  const Vector mu = mean_reversed(rows);
  const Matrix c = rows.rowwise() - mu.transpose();
  const Matrix cov = c.transpose() * c / static_cast<double>(rows.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Matrix out(q, rows.cols());
  for (int i = 0; i < q; ++i) out.row(i) = es.eigenvectors().col(rows.cols() - 1 - i).transpose();
  numkit::canonicalize_signs(out);
  return out;
}

Vector mean_reversed(const Matrix& rows) {
  Vector acc = Vector::Zero(rows.cols());
  for (Eigen::Index i = rows.rows() - 1; i >= 0; --i) acc += rows.row(i).transpose();
  return acc / static_cast<double>(rows.rows());
}

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * normal01(rng);
  }
  return m;
}

Vector random_vector(Rng& rng, Eigen::Index n, double scale) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * normal01(rng);
  return v;
}

GaussianHmm random_hmm(Rng& rng, int k, int q) {
  GaussianHmm h;
  auto simplex = [&](Eigen::Index n) {
    Vector p(n);
    for (Eigen::Index i = 0; i < n; ++i) p[i] = 0.05 + uniform01(rng);
    return Vector(p / p.sum());
  };
  h.initial = simplex(k);
  h.transitions.resize(k, k);
  for (int i = 0; i < k; ++i) h.transitions.row(i) = simplex(k).transpose();
  h.means = random_matrix(rng, k, q, 2.0);
  h.variances.resize(k, q);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < q; ++j) h.variances(i, j) = uniform(rng, 0.2, 3.0);
  }
  return h;
}

}  // namespace probetraj::oracle
