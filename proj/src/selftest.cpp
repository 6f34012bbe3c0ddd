#include "probetraj/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "probetraj/analysis.hpp"
#include "probetraj/errors.hpp"
#include "probetraj/kernels.hpp"
#include "probetraj/oracles.hpp"
#include "probetraj/probe.hpp"

namespace probetraj::selftest {
namespace {

// Tracks the worst deviation and the first failing case.
class Tally {
 public:
  explicit Tally(std::string name) { r_.name = std::move(name); }

  void error(double e, double tol, int c, const std::string& what) {
    worst_ = std::max(worst_, e);
    if (!(e <= tol)) fail(c, what + " off by " + fmt(e));
  }
  void check(bool ok, int c, const std::string& what) {
    if (!ok) fail(c, what);
  }
  SuiteResult done(std::size_t cases) {
    r_.cases = cases;
    r_.passed = first_.empty();
    r_.detail = first_.empty() ? "worst error " + fmt(worst_) : first_;
    return r_;
  }

 private:
  static std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
  }
  void fail(int c, const std::string& what) {
    if (first_.empty()) first_ = "case " + std::to_string(c) + ": " + what;
  }
  SuiteResult r_;
  double worst_ = 0.0;
  std::string first_;
};

Matrix sample_sequence(Rng& rng, const GaussianHmm& h, Eigen::Index len) {
  Matrix seq(len, h.dim());
  auto draw = [&](const Vector& p) {
    double u = uniform01(rng), acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return i;
    }
    return p.size() - 1;
  };
  Eigen::Index s = draw(h.initial);
  for (Eigen::Index t = 0; t < len; ++t) {
    if (t > 0) s = draw(h.transitions.row(s).transpose());
    for (Eigen::Index j = 0; j < h.dim(); ++j) seq(t, j) = h.means(s, j) + std::sqrt(h.variances(s, j)) * normal01(rng);
  }
  return seq;
}

}  // namespace

SuiteResult hmm_enumeration(std::uint64_t seed, int cases) {
  Tally t("hmm_enumeration");
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const int k = static_cast<int>(uniform_int(rng, 2, 3));
    const int q = static_cast<int>(uniform_int(rng, 1, 3));
    const auto len = static_cast<Eigen::Index>(uniform_int(rng, 1, 6));
    const auto h = oracle::random_hmm(rng, k, q);
    const Matrix seq = oracle::random_matrix(rng, len, q, 2.0);
    const double fast = hmm_loglik(h, seq);
    const double slow = oracle::hmm_loglik_enumerate(h, seq);
    t.error(std::abs(fast - slow) / std::max(1.0, std::abs(slow)), 1e-8, c, "forward log-likelihood");
  }
  return t.done(static_cast<std::size_t>(cases));
}

SuiteResult em_monotone(std::uint64_t seed, int datasets) {
  Tally t("em_monotone");
  Rng rng(seed);
  for (int c = 0; c < datasets; ++c) {
    const int k = static_cast<int>(uniform_int(rng, 2, 3));
    const int q = static_cast<int>(uniform_int(rng, 1, 3));
    const auto truth = oracle::random_hmm(rng, k, q);
    std::vector<Matrix> seqs;
    const auto n = uniform_int(rng, 4, 10);
    for (std::uint64_t i = 0; i < n; ++i) seqs.push_back(sample_sequence(rng, truth, static_cast<Eigen::Index>(uniform_int(rng, 3, 25))));
    EmOptions opts;
    opts.max_iterations = 60;
    opts.tolerance = 0.0;
    auto init = kmeans_init(seqs, k, rng(), opts);
    const auto run = run_em(init, seqs, opts, kernels::serial::estep, [&](int it, const GaussianHmm& h) {
      try {
        h.validate(opts.variance_floor);
      } catch (const Error& e) {
        t.check(false, c, "iteration " + std::to_string(it) + ": " + e.what());
      }
      for (Eigen::Index s = 0; s < h.n_states(); ++s) {
        t.check(h.transitions.row(s).minCoeff() >= opts.probability_floor * (1 - 1e-12), c, "transition below floor");
      }
    });
    for (std::size_t i = 1; i < run.loglik_history.size(); ++i) {
      const double drop = run.loglik_history[i - 1] - run.loglik_history[i];
      t.error(std::max(0.0, drop), 1e-9, c, "log-likelihood decrease at iteration " + std::to_string(i));
    }
    if (!run.loglik_history.empty()) {
      t.error(std::max(0.0, run.loglik_history.back() - run.final_loglik), 1e-9, c, "final log-likelihood decrease");
    }
  }
  return t.done(static_cast<std::size_t>(datasets));
}

SuiteResult projector(std::uint64_t seed, int cases) {
  Tally t("projector");
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const auto dim = static_cast<Eigen::Index>(uniform_int(rng, 2, 12));
    const auto width = static_cast<Eigen::Index>(uniform_int(rng, 1, 8));
    Matrix w = oracle::random_matrix(rng, width, dim);
    if (width > 2 && uniform01(rng) < 0.3) w.row(width - 1) = 0.5 * w.row(0) - 2.0 * w.row(1);  // rank-deficient
    const auto basis = numkit::thin_svd_rowspace(w);
    const auto pr = oracle::explicit_projector(w);
    t.check(basis.rank() == pr.basis.rows(), c, "rank mismatch");
    if (basis.rank() != pr.basis.rows()) continue;

    const Vector d = oracle::random_vector(rng, dim), a = oracle::random_vector(rng, dim), b = oracle::random_vector(rng, dim);
    t.error(std::abs(numkit::subspace_energy(basis, d) - oracle::energy(pr, d)), 1e-10, c, "energy");
    t.error(std::abs(numkit::max_basis_alignment(basis, d) - oracle::max_basis_alignment(pr, d)), 1e-10, c, "max basis alignment");
    std::optional<double> pc;
    try {
      pc = numkit::projected_cosine(basis, a, b);
    } catch (const Error&) {
    }
    const auto po = oracle::projected_cosine(pr, a, b);
    t.check(pc.has_value() == po.has_value(), c, "projected cosine definedness");
    if (pc && po) t.error(std::abs(*pc - *po), 1e-10, c, "projected cosine");

    // re-mixing rows by a well-conditioned matrix keeps the row space
    Matrix mix = Matrix::Identity(width, width) + 0.3 * oracle::random_matrix(rng, width, width) / std::sqrt(static_cast<double>(width));
    const auto mixed = numkit::thin_svd_rowspace(mix * w);
    t.error(std::abs(numkit::subspace_energy(mixed, d) - numkit::subspace_energy(basis, d)), 1e-8, c, "row-mixing invariance");
  }
  return t.done(static_cast<std::size_t>(cases));
}

SuiteResult threshold_scan(std::uint64_t seed, int cases) {
  Tally t("threshold_scan");
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    auto draw = [&](std::size_t n, bool coarse, bool tied, double shift) {
      std::vector<double> v(n);
      for (auto& x : v) x = tied ? 0.25 : coarse ? static_cast<double>(uniform_int(rng, 0, 4)) : shift + normal01(rng);
      return v;
    };
    const bool tied = c % 10 == 0;
    const bool coarse = c % 3 == 1;
    const auto h = draw(uniform_int(rng, 1, 20), coarse, tied, 0.7);
    const auto b = draw(uniform_int(rng, 1, 20), coarse, tied, -0.7);
    const auto got = select_threshold(h, b);
    const auto want = oracle::threshold_scan(h, b);
    t.check(got.threshold == want.threshold, c, "threshold differs");
    t.check(got.accuracy == want.accuracy, c, "accuracy differs");
  }
  return t.done(static_cast<std::size_t>(cases));
}

SuiteResult span_search(std::uint64_t seed, int cases) {
  Tally t("span_search");
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    std::vector<std::uint32_t> hay(uniform_int(rng, 0, 40));
    const auto alphabet = uniform_int(rng, 2, 6);
    for (auto& x : hay) x = static_cast<std::uint32_t>(uniform_int(rng, 0, alphabet - 1));
    std::vector<std::uint32_t> needle;
    const int mode = c % 4;
    if (mode == 0 && !hay.empty()) {
      needle = hay;  // whole haystack
    } else if (mode == 1 && !hay.empty()) {
      const auto s = uniform_int(rng, 0, hay.size() - 1);
      const auto e = uniform_int(rng, s + 1, std::min<std::uint64_t>(hay.size(), s + 6));
      needle.assign(hay.begin() + static_cast<long>(s), hay.begin() + static_cast<long>(e));
    } else if (mode == 2) {
      needle.assign(uniform_int(rng, 1, 4), static_cast<std::uint32_t>(alphabet + 1));  // absent by construction
    } else {
      needle.resize(uniform_int(rng, 1, 5));
      for (auto& x : needle) x = static_cast<std::uint32_t>(uniform_int(rng, 0, alphabet - 1));
    }
    const auto got = locate_span(hay, needle);
    const auto want = oracle::naive_span(hay, needle);
    t.check(got == want, c, "span differs from naive search");
  }
  return t.done(static_cast<std::size_t>(cases));
}

SuiteResult spearman(std::uint64_t seed, int cases) {
  Tally t("spearman");
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const auto n = uniform_int(rng, 2, 30);
    std::vector<double> xs(n), ys(n);
    const auto levels = uniform_int(rng, 2, 8);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = static_cast<double>(uniform_int(rng, 0, levels));
      ys[i] = c % 2 ? static_cast<double>(uniform_int(rng, 0, levels)) : normal01(rng);
    }
    std::optional<double> got;
    try {
      got = numkit::spearman(xs, ys);
    } catch (const Error& e) {
      t.check(e.kind() == ErrorKind::kUndefinedCorrelation, c, "unexpected error kind");
    }
    const auto want = oracle::spearman(xs, ys);
    t.check(got.has_value() == want.has_value(), c, "definedness differs");
    if (!got || !want) continue;
    t.error(std::abs(*got - *want), 1e-10, c, "correlation");
    std::vector<double> tx(n);
    for (std::size_t i = 0; i < n; ++i) tx[i] = std::exp(0.5 * xs[i]) + xs[i] * xs[i] * xs[i];
    t.error(std::abs(numkit::spearman(tx, ys) - *got), 1e-12, c, "monotone-transform invariance");
  }
  return t.done(static_cast<std::size_t>(cases));
}

SuiteResult gradient_check(std::uint64_t seed, int cases) {
  Tally t("gradient_check");
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const auto act = c % 2 ? Activation::kRectifier : Activation::kIdentity;
    const auto dim = static_cast<Eigen::Index>(uniform_int(rng, 2, 8));
    const auto width = static_cast<Eigen::Index>(uniform_int(rng, 1, 6));
    auto p = BottleneckProbe::zeros(width, dim, act);
    p.w1 = oracle::random_matrix(rng, width, dim, 0.5);
    p.b1 = oracle::random_vector(rng, width, 0.3);
    p.w2 = oracle::random_vector(rng, width, 0.5);
    p.b2 = 0.1 * normal01(rng);
    const Vector x = oracle::random_vector(rng, dim);
    const double label = static_cast<double>(c % 3 == 0);
    t.error(probetraj::gradient_check(p, x, label, 1e-5), 1e-4, c, std::string("gradient (") + std::string(to_string(act)) + ")");
  }
  return t.done(static_cast<std::size_t>(cases));
}

std::vector<SuiteResult> run_all(std::uint64_t seed) {
  return {hmm_enumeration(seed),    em_monotone(seed + 1), projector(seed + 2),     threshold_scan(seed + 3),
          span_search(seed + 4),    spearman(seed + 5),    gradient_check(seed + 6)};
}

bool report(const std::vector<SuiteResult>& results, std::ostream& out) {
  bool all = true;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.cases << " cases): " << r.detail << '\n';
    all = all && r.passed;
  }
  return all;
}

}  // namespace probetraj::selftest
