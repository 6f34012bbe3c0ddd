#include <omp.h>

#include <exception>

#include "probetraj/kernels.hpp"

namespace probetraj::kernels {
namespace {

// Runs fn(i) for i in [0, n) across threads. The exception from the lowest
// failing index is rethrown, matching what the serial loop would raise.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void set_thread_count(int n) {
  if (n > 0) {
    omp_set_num_threads(n);
  } else {
    omp_set_num_threads(omp_get_num_procs());
  }
}

int max_threads() { return omp_get_max_threads(); }

namespace omp {

PositionScores score_positions(const BottleneckProbe& probe, const ActivationDataset& data) {
  PositionScores out(data.records.size());
  parallel_for(data.records.size(), [&](std::size_t i) { out[i] = probetraj::score_positions(probe, data.records[i]); });
  return out;
}

std::vector<double> final_scores(const BottleneckProbe& probe, const ActivationDataset& data) {
  std::vector<double> out(data.records.size());
  parallel_for(data.records.size(), [&](std::size_t i) {
    const auto& r = data.records[i];
    out[i] = probe_score(probe, r.states.row(r.states.rows() - 1).transpose());
  });
  return out;
}

std::vector<double> llr_scores(const TrajectoryModel& model, const ActivationDataset& data) {
  std::vector<double> out(data.records.size());
  parallel_for(data.records.size(), [&](std::size_t i) { out[i] = llr_score(model, data.records[i]); });
  return out;
}

HmmStats estep(const GaussianHmm& hmm, std::span<const Matrix> seqs) {
  std::vector<HmmStats> per_seq(seqs.size());
  parallel_for(seqs.size(), [&](std::size_t i) { per_seq[i] = sequence_stats(hmm, seqs[i]); });
  auto total = HmmStats::zeros(hmm.n_states(), hmm.dim());
  for (const auto& s : per_seq) total.add(s);
  return total;
}

}  // namespace omp
}  // namespace probetraj::kernels
