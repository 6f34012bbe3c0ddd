#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "probetraj/dataset.hpp"
#include "probetraj/numkit.hpp"
#include "probetraj/probe.hpp"

namespace probetraj {

// Populations feeding the contrast directions. Each is a set of records whose
// final-token states are averaged.
struct DirectionInputs {
  ActivationDataset harm_train;    // H_train
  ActivationDataset benign_train;  // B_train
  ActivationDataset sorry;         // S, direct harmful requests
  ActivationDataset xstest;        // X, benign look-alikes
  ActivationDataset caught;        // jailbreaks flagged by the final-token probe
  ActivationDataset missed;        // jailbreaks it let through
};

struct DirectionProvenance {
  std::string name;
  std::string plus_set;
  std::string minus_set;
  std::size_t plus_count = 0;
  std::size_t minus_count = 0;
  std::string plus_filter;
  std::string minus_filter;
};

// d_harm = u(mu(H) - mu(B))       d_safe = u(mu(S) - mu(X))
// d_miss = u(mu(J_miss) - mu(B))  delta_cm = u(mu(J_caught) - mu(J_miss))
struct DirectionSet {
  Vector d_harm;
  Vector d_safe;
  Vector d_miss;
  Vector delta_cm;
  std::vector<DirectionProvenance> provenance;

  static constexpr std::array<std::string_view, 4> kNames = {"d_harm", "d_safe", "d_miss", "delta_cm"};
  const Vector& get(std::string_view name) const;
};

DirectionSet build_directions(const DirectionInputs& inputs);

struct CosinePair {
  double full = 0.0;
  std::optional<double> projected;  // nullopt when both projections vanish
};

struct GeometryReport {
  Eigen::Index rank = 0;
  std::vector<double> singular_values;
  std::map<std::string, double> energies;
  std::map<std::string, CosinePair> alignments;  // of delta_cm against each of d_harm, d_safe, d_miss
  std::map<std::string, double> max_basis_alignments;
};

GeometryReport geometry_report(const BottleneckProbe& probe, const DirectionSet& dirs);

}  // namespace probetraj
