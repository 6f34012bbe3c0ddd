#include "probetraj/kernels.hpp"

namespace probetraj::kernels::serial {

PositionScores score_positions(const BottleneckProbe& probe, const ActivationDataset& data) {
  PositionScores out(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i) out[i] = probetraj::score_positions(probe, data.records[i]);
  return out;
}

std::vector<double> final_scores(const BottleneckProbe& probe, const ActivationDataset& data) {
  std::vector<double> out(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    out[i] = probe_score(probe, r.states.row(r.states.rows() - 1).transpose());
  }
  return out;
}

std::vector<double> llr_scores(const TrajectoryModel& model, const ActivationDataset& data) {
  std::vector<double> out(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i) out[i] = llr_score(model, data.records[i]);
  return out;
}

HmmStats estep(const GaussianHmm& hmm, std::span<const Matrix> seqs) {
  auto total = HmmStats::zeros(hmm.n_states(), hmm.dim());
  for (const auto& seq : seqs) total.add(sequence_stats(hmm, seq));
  return total;
}

}  // namespace probetraj::kernels::serial
