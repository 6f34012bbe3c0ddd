#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "probetraj/analysis.hpp"
#include "probetraj/geometry.hpp"
#include "probetraj/probe.hpp"
#include "probetraj/trajectory.hpp"

namespace probetraj {

using Json = nlohmann::ordered_json;

Json to_json(const SourceRate& r);
Json to_json(const FinalTokenEval& e);
Json to_json(const WidthRow& r);
Json to_json(const TokenSweepReport& t);
Json to_json(const TrajectoryEval& t);
Json to_json(const EnergyPair& e);
Json to_json(const LengthCorrelation& c);
Json to_json(const GeometryReport& g);
Json to_json(const DirectionSet& d);
Json to_json(const EvalReport& r);
Json to_json(const ProbeTrainingInfo& info);
Json to_json(const TrajectoryFitMetadata& meta);

// Aligned-column tables for people; CSV tables (file stem -> content) for plots.
std::string render_text(const EvalReport& r);
std::string render_text(const GeometryReport& g);
std::map<std::string, std::string> render_csv(const EvalReport& r);
std::string render_text(const std::vector<WidthRow>& rows);
std::string render_csv(const std::vector<WidthRow>& rows);

// requests.json: {"<record index>": [token ids], ...}
Json requests_to_json(const RequestMap& requests);
RequestMap requests_from_json(const Json& j);

// Caught/missed partition as written by the final-token section of a report
// (either a full report or the bare section).
struct Partition {
  std::vector<std::size_t> caught;
  std::vector<std::size_t> missed;
};
Partition partition_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
std::string dump_json(const Json& j);  // two-space indent, trailing newline

}  // namespace probetraj
