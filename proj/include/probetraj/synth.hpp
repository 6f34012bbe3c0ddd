#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "probetraj/dataset.hpp"

namespace probetraj {

enum class SynthClass : std::uint8_t { kCleanHarm = 0, kCleanBenign = 1, kWrappedHarm = 2, kSpikyBenign = 3 };

inline constexpr std::array<SynthClass, 4> kSynthClasses = {SynthClass::kCleanHarm, SynthClass::kCleanBenign,
                                                            SynthClass::kWrappedHarm, SynthClass::kSpikyBenign};

std::string_view source_tag(SynthClass c);  // e.g. "synth_clean_harm"
Label class_label(SynthClass c);

// Layout of every generated record, with k = final_tokens:
//   clean:   [framing 1..3][content][final k]      window = all but the final k
//   wrapped: [wrapper 2..6][request][wrapper 1..4][final k]
//   spiky:   clean benign with isolated harm-like content frames
// Framing/wrapper frames sit near wrapper_mean, so the trajectory PCA sees
// that direction in clean prompts while the final-token probe does not.
struct SynthConfig {
  std::uint32_t dim = 32;
  std::uint32_t seq_len_min = 8;
  std::uint32_t seq_len_max = 40;
  std::array<std::uint32_t, 4> counts = {100, 100, 100, 100};  // indexed by SynthClass
  std::vector<double> harm_mean;     // empty: 5 * e0
  std::vector<double> benign_mean;   // empty: -5 * e0
  std::vector<double> wrapper_mean;  // empty: 6 * e1
  double noise_sigma = 1.0;
  double suppression = 0.9;
  double spike_prob = 0.15;
  // Probability that a wrapper suppresses the final tokens at all; the rest
  // keep harm-like finals and are caught by the final-token probe.
  double wrap_success = 0.7;
  // Fraction of wrapper_mean carried into wrapped finals.
  double wrapper_bleed = 0.5;
  std::uint32_t final_tokens = 3;
  std::uint64_t seed = 42;
  SplitTag split = SplitTag::kEval;
  std::string layer_tag = "synthetic";

  std::uint32_t count(SynthClass c) const { return counts[static_cast<std::size_t>(c)]; }
  // Fills empty mean vectors with the defaults above.
  SynthConfig resolved() const;
  void validate() const;
};

// record index -> request token ids (wrapped records: the embedded request;
// clean harmful records: their own content span).
using RequestMap = std::map<std::size_t, std::vector<std::uint32_t>>;

struct SynthOutput {
  ActivationDataset dataset;
  RequestMap requests;
  std::vector<SynthClass> classes;  // per record
  std::map<std::size_t, TokenWindow> planted_spans;  // wrapped records only
  std::vector<bool> suppressed;  // per record; true where a wrapper pulled the finals toward benign
};

SynthOutput generate_synthetic(const SynthConfig& config);
ActivationDataset generate(const SynthConfig& config);

// Flat "key = value" text, '#' comments. Vector keys take comma-separated
// reals; counts takes four comma-separated integers.
SynthConfig synth_config_from_text(std::string_view text);

}  // namespace probetraj
