#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "probetraj/types.hpp"

namespace probetraj {

enum class Label : std::uint8_t { kBenign = 0, kHarmful = 1 };
enum class SplitTag : std::uint8_t { kTrain = 0, kEval = 1 };

std::string_view to_string(Label label);
std::string_view to_string(SplitTag split);
std::optional<Label> parse_label(std::string_view text);
std::optional<SplitTag> parse_split(std::string_view text);

// Half-open token range [start, end).
struct TokenWindow {
  std::uint32_t start = 0;
  std::uint32_t end = 0;

  std::uint32_t size() const noexcept { return end - start; }
  bool operator==(const TokenWindow&) const = default;
};

struct SequenceRecord {
  Matrix states;  // T x D, one row per token
  std::optional<std::vector<std::uint32_t>> token_ids;
  Label label = Label::kBenign;
  std::string source;
  std::optional<TokenWindow> user_window;

  std::size_t length() const noexcept { return static_cast<std::size_t>(states.rows()); }
  // user_window when present, otherwise the whole sequence.
  TokenWindow effective_window() const;
  Vector final_token() const { return states.row(states.rows() - 1).transpose(); }
};

bool operator==(const SequenceRecord& a, const SequenceRecord& b);

struct ActivationDataset {
  std::uint32_t dim = 0;
  std::vector<SequenceRecord> records;
  SplitTag split = SplitTag::kEval;
  std::string layer_tag;  // opaque to the toolkit

  std::size_t size() const noexcept { return records.size(); }
  bool operator==(const ActivationDataset& other) const = default;
};

// Throws RecordError naming the first offending record.
void validate_dataset(const ActivationDataset& dataset);

std::vector<std::uint8_t> encode_dataset(const ActivationDataset& dataset);
ActivationDataset decode_dataset(std::span<const std::uint8_t> bytes);

void save_dataset(const ActivationDataset& dataset, const std::filesystem::path& destination);
ActivationDataset load_dataset(const std::filesystem::path& source);

// Order-preserving subset; both filters apply when given.
ActivationDataset filter_records(const ActivationDataset& dataset, std::optional<Label> label,
                                 std::optional<std::string_view> source = std::nullopt);

// Final-token states stacked as rows, in record order.
Matrix final_token_matrix(const ActivationDataset& dataset, std::span<const std::size_t> indices);

}  // namespace probetraj
