#pragma once

#include <span>
#include <vector>

#include "probetraj/dataset.hpp"
#include "probetraj/hmm.hpp"
#include "probetraj/probe.hpp"
#include "probetraj/trajectory.hpp"

// Record-parallel kernels. Each has a serial reference and an OpenMP variant
// built from the same per-item function; results are written to per-item
// slots and reduced in index order, so both agree bit for bit at any thread
// count.
namespace probetraj::kernels {

using PositionScores = std::vector<std::vector<double>>;

namespace serial {
PositionScores score_positions(const BottleneckProbe& probe, const ActivationDataset& data);
std::vector<double> final_scores(const BottleneckProbe& probe, const ActivationDataset& data);
std::vector<double> llr_scores(const TrajectoryModel& model, const ActivationDataset& data);
HmmStats estep(const GaussianHmm& hmm, std::span<const Matrix> seqs);
}  // namespace serial

namespace omp {
PositionScores score_positions(const BottleneckProbe& probe, const ActivationDataset& data);
std::vector<double> final_scores(const BottleneckProbe& probe, const ActivationDataset& data);
std::vector<double> llr_scores(const TrajectoryModel& model, const ActivationDataset& data);
HmmStats estep(const GaussianHmm& hmm, std::span<const Matrix> seqs);
}  // namespace omp

// Caps OpenMP worker threads; n <= 0 restores the runtime default.
void set_thread_count(int n);
int max_threads();

}  // namespace probetraj::kernels
