#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "probetraj/dataset.hpp"
#include "probetraj/hmm.hpp"
#include "probetraj/numkit.hpp"

namespace probetraj {

struct TrajectoryConfig {
  int pca_dim = 64;
  int n_states = 2;
  std::uint64_t seed = 42;
  EmOptions em;
};

struct ClassFitInfo {
  std::size_t n_sequences = 0;
  std::size_t n_frames = 0;
  int best_restart = 0;
  int iterations = 0;
  bool converged = false;
  double final_loglik = 0.0;
  std::vector<double> restart_logliks;
};

struct TrajectoryFitMetadata {
  std::uint64_t seed = 0;
  int restarts = 0;
  int max_iterations = 0;
  double tolerance = 0.0;
  double variance_floor = 0.0;
  double probability_floor = 0.0;
  int requested_pca_dim = 0;
  std::size_t n_harm_records = 0;    // after balancing
  std::size_t n_benign_records = 0;  // after balancing
  std::size_t n_dropped = 0;         // majority-class records removed by balancing
  ClassFitInfo harm;
  ClassFitInfo benign;
  double train_accuracy = 0.0;  // balanced accuracy at the selected threshold
  std::vector<std::string> warnings;
};

struct TrajectoryModel {
  PcaModel pca;
  GaussianHmm hmm_harm;
  GaussianHmm hmm_benign;
  double threshold = 0.0;
  TrajectoryFitMetadata meta;
};

// States inside the record's user window (whole sequence when absent).
Matrix windowed_states(const SequenceRecord& record);

TrajectoryModel fit_trajectory_model(const ActivationDataset& train, const TrajectoryConfig& config);

// (1/T) [log p_harm(z) - log p_benign(z)] over the PCA-projected window.
double llr_score(const TrajectoryModel& model, const SequenceRecord& record);
double llr_from_logliks(double loglik_harm, double loglik_benign, std::size_t length);

struct ThresholdChoice {
  double threshold = 0.0;
  double accuracy = 0.0;  // balanced accuracy, decision score > threshold => harmful
};

ThresholdChoice select_threshold(std::span<const double> harm_scores, std::span<const double> benign_scores);

std::vector<std::uint8_t> encode_trajectory_model(const TrajectoryModel& model);
TrajectoryModel decode_trajectory_model(std::span<const std::uint8_t> bytes);
void save_trajectory_model(const TrajectoryModel& model, const std::filesystem::path& destination);
TrajectoryModel load_trajectory_model(const std::filesystem::path& source);

}  // namespace probetraj
