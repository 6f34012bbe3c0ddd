#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "probetraj/dataset.hpp"
#include "probetraj/geometry.hpp"
#include "probetraj/probe.hpp"
#include "probetraj/trajectory.hpp"

namespace probetraj {

// Which source tags play which part in the evaluation.
struct SourceRoles {
  std::vector<std::string> jailbreak = {"jailbreak", "synth_wrapped_harm"};
  std::vector<std::string> sorry = {"sorry", "synth_clean_harm"};  // direct harmful requests
  std::vector<std::string> xstest = {"xstest", "synth_spiky_benign"};

  bool is_jailbreak(std::string_view source) const;
  bool is_sorry(std::string_view source) const;
  bool is_xstest(std::string_view source) const;
};

// One (source, label) group. For harmful groups `rate` is detection, for
// benign groups it is the false-positive rate.
struct SourceRate {
  std::string source;
  Label label = Label::kBenign;
  std::size_t n = 0;
  std::size_t flagged = 0;
  double rate = 0.0;
  double mean_score = 0.0;
};

// Groups in first-appearance order of the records.
std::vector<SourceRate> source_rates(const ActivationDataset& data, std::span<const double> scores, double threshold);
const SourceRate* find_rate(const std::vector<SourceRate>& rates, std::string_view source);

struct FinalTokenEval {
  double threshold = 0.5;
  std::vector<double> scores;  // per record
  std::vector<SourceRate> per_source;
  std::vector<std::size_t> caught;  // jailbreak record indices with score > threshold
  std::vector<std::size_t> missed;
  std::vector<std::string> notes;
};

// Flags when score > threshold, strictly.
FinalTokenEval evaluate_final_token(const BottleneckProbe& probe, const ActivationDataset& eval,
                                    const SourceRoles& roles = {}, double threshold = 0.5);

struct WidthRow {
  int width = 0;
  std::uint64_t seed = 0;
  std::optional<double> jailbreak_detection;  // nullopt without jailbreak records
  std::vector<SourceRate> per_source;
  std::optional<std::string> error;  // training or scoring failure for this width
};

std::uint64_t width_seed(std::uint64_t base_seed, int width);

std::vector<WidthRow> width_sweep(const ActivationDataset& train, const ActivationDataset& eval,
                                  std::span<const int> widths, const TrainConfig& base,
                                  const SourceRoles& roles = {}, double threshold = 0.5);

// First exact contiguous occurrence, as a half-open span.
std::optional<TokenWindow> locate_span(std::span<const std::uint32_t> haystack, std::span<const std::uint32_t> needle);

using RequestMap = std::map<std::size_t, std::vector<std::uint32_t>>;

struct TokenSweepEntry {
  std::size_t index = 0;
  std::string source;
  Label label = Label::kBenign;
  double final_score = 0.0;
  double max_score = 0.0;
  std::size_t max_position = 0;
  bool has_request = false;
  std::optional<TokenWindow> span;
  std::optional<double> goal_score;
};

// Aggregate over a population: located fraction and means over located records.
struct SweepAggregate {
  std::string population;
  std::size_t n = 0;
  std::size_t located = 0;
  double located_fraction = 0.0;
  std::optional<double> mean_final;
  std::optional<double> mean_goal;
  std::optional<double> mean_max;
};

struct TokenSweepReport {
  std::vector<TokenSweepEntry> entries;
  SweepAggregate missed_jailbreaks;  // jailbreaks missed at the final token
  SweepAggregate direct_harmful;     // harmful records from the direct-request sources
  std::vector<std::string> notes;
};

TokenSweepReport token_sweep_report(const BottleneckProbe& probe, const ActivationDataset& eval,
                                    const RequestMap& requests, std::span<const std::size_t> missed,
                                    const SourceRoles& roles = {});

std::vector<SourceRate> max_pool_eval(const BottleneckProbe& probe, const ActivationDataset& eval,
                                      double threshold = 0.5);

struct Complementarity {
  std::size_t both = 0;
  std::size_t probe_only = 0;
  std::size_t traj_only = 0;
  std::size_t neither = 0;

  std::size_t total() const noexcept { return both + probe_only + traj_only + neither; }
};

struct TrajectoryEval {
  double threshold = 0.0;
  std::vector<double> scores;  // LLR per record
  std::size_t n_jailbreak = 0;
  std::size_t jailbreak_flagged = 0;
  std::optional<double> jailbreak_detection;
  std::size_t n_missed = 0;
  std::size_t recovered = 0;
  std::optional<double> recovery;  // undefined without final-token misses
  std::size_t n_benign = 0;
  std::size_t benign_flagged = 0;
  std::optional<double> benign_fpr;
  std::vector<SourceRate> per_source;
  Complementarity complementarity;
};

TrajectoryEval trajectory_eval(const TrajectoryModel& model, const ActivationDataset& eval,
                               const FinalTokenEval& partition, const SourceRoles& roles = {});

struct EnergyPair {
  std::string direction;
  double probe_energy = 0.0;
  double pca_energy = 0.0;
};

std::vector<EnergyPair> energy_comparison(const BottleneckProbe& probe, const TrajectoryModel& model,
                                          const DirectionSet& dirs);

struct LengthCorrelation {
  std::string source;
  std::size_t n = 0;
  std::optional<double> spearman;  // nullopt when fewer than two records or a constant side
};

std::vector<LengthCorrelation> length_correlation(const TrajectoryModel& model, const ActivationDataset& eval);
std::vector<LengthCorrelation> length_correlation(const ActivationDataset& eval, std::span<const double> llr);

// Geometry populations: H/B from the train split, S/X from the eval set by
// role, caught/missed from a final-token partition of the eval set.
DirectionInputs direction_inputs(const ActivationDataset& train, const ActivationDataset& eval,
                                 const std::vector<std::size_t>& caught, const std::vector<std::size_t>& missed,
                                 const SourceRoles& roles = {});

// Everything `evaluate` computes; sections absent when their inputs were not given.
struct EvalReport {
  std::uint32_t dim = 0;
  std::size_t n_records = 0;
  FinalTokenEval final_token;
  std::vector<SourceRate> max_pool;
  std::optional<std::vector<WidthRow>> width_sweep;
  std::optional<TokenSweepReport> token_sweep;
  std::optional<TrajectoryEval> trajectory;
  std::optional<std::vector<EnergyPair>> energy_comparison;
  std::optional<std::vector<LengthCorrelation>> spearman;
  std::optional<GeometryReport> geometry;
  std::vector<std::string> notes;
};

}  // namespace probetraj
