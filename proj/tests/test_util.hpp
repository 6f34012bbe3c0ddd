#pragma once

#include <filesystem>
#include <string>

#include "probetraj/dataset.hpp"
#include "probetraj/oracles.hpp"
#include "probetraj/rng.hpp"

namespace probetraj::testing {

// Fresh per-test scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::path(PROBETRAJ_SCRATCH) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Random valid dataset; states are f32-representable so round trips are exact.
inline ActivationDataset random_dataset(Rng& rng, std::size_t n_records, std::uint32_t dim) {
  ActivationDataset ds;
  ds.dim = dim;
  ds.split = uniform01(rng) < 0.5 ? SplitTag::kTrain : SplitTag::kEval;
  ds.layer_tag = "layer" + std::to_string(uniform_int(rng, 0, 40));
  for (std::size_t i = 0; i < n_records; ++i) {
    SequenceRecord r;
    const auto t = static_cast<Eigen::Index>(uniform_int(rng, 1, 12));
    r.states = oracle::random_matrix(rng, t, dim, 3.0).cast<float>().cast<double>();
    r.label = uniform01(rng) < 0.5 ? Label::kHarmful : Label::kBenign;
    r.source = std::string("src") + std::to_string(uniform_int(rng, 0, 3));
    if (uniform01(rng) < 0.6) {
      std::vector<std::uint32_t> ids(static_cast<std::size_t>(t));
      for (auto& id : ids) id = static_cast<std::uint32_t>(uniform_int(rng, 0, 100000));
      r.token_ids = ids;
    }
    if (uniform01(rng) < 0.5) {
      const auto s = static_cast<std::uint32_t>(uniform_int(rng, 0, static_cast<std::uint64_t>(t - 1)));
      const auto e = static_cast<std::uint32_t>(uniform_int(rng, s + 1, static_cast<std::uint64_t>(t)));
      r.user_window = TokenWindow{s, e};
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

inline SequenceRecord make_record(const Matrix& states, Label label, std::string source) {
  SequenceRecord r;
  r.states = states;
  r.label = label;
  r.source = std::move(source);
  return r;
}

}  // namespace probetraj::testing
