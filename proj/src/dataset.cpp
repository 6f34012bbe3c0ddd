#include "probetraj/dataset.hpp"

#include <cmath>
#include <limits>

#include "probetraj/binary_io.hpp"
#include "probetraj/errors.hpp"

namespace probetraj {
namespace {

constexpr std::string_view kMagic = "HSTJ";
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::string_view to_string(Label label) { return label == Label::kHarmful ? "harmful" : "benign"; }

std::string_view to_string(SplitTag split) { return split == SplitTag::kTrain ? "train" : "eval"; }

std::optional<Label> parse_label(std::string_view text) {
  if (text == "harmful") return Label::kHarmful;
  if (text == "benign") return Label::kBenign;
  return std::nullopt;
}

std::optional<SplitTag> parse_split(std::string_view text) {
  if (text == "train") return SplitTag::kTrain;
  if (text == "eval") return SplitTag::kEval;
  return std::nullopt;
}

TokenWindow SequenceRecord::effective_window() const {
  if (user_window) return *user_window;
  return TokenWindow{0, static_cast<std::uint32_t>(length())};
}

bool operator==(const SequenceRecord& a, const SequenceRecord& b) {
  return a.label == b.label && a.source == b.source && a.token_ids == b.token_ids &&
         a.user_window == b.user_window && a.states.rows() == b.states.rows() &&
         a.states.cols() == b.states.cols() && a.states == b.states;
}

void validate_dataset(const ActivationDataset& dataset) {
  if (dataset.dim == 0) throw Error(ErrorKind::kValidation, "dataset dimension must be positive");
  if (dataset.layer_tag.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(ErrorKind::kValidation, "layer tag longer than 65535 bytes");
  }
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    if (r.states.rows() < 1) throw RecordError(ErrorKind::kValidation, i, "sequence has no tokens");
    if (r.states.cols() != static_cast<Eigen::Index>(dataset.dim)) {
      throw RecordError(ErrorKind::kValidation, i,
                        "state width " + std::to_string(r.states.cols()) + " != dataset dim " +
                            std::to_string(dataset.dim));
    }
    if (!r.states.allFinite()) throw RecordError(ErrorKind::kValidation, i, "non-finite state value");
    if (r.source.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw RecordError(ErrorKind::kValidation, i, "source tag longer than 65535 bytes");
    }
    const auto t = static_cast<std::uint32_t>(r.states.rows());
    if (r.token_ids && r.token_ids->size() != t) {
      throw RecordError(ErrorKind::kValidation, i, "token_ids length differs from sequence length");
    }
    if (r.user_window) {
      const auto& w = *r.user_window;
      if (!(w.start < w.end && w.end <= t)) {
        throw RecordError(ErrorKind::kValidation, i,
                          "user window [" + std::to_string(w.start) + ", " + std::to_string(w.end) +
                              ") not inside [0, " + std::to_string(t) + ")");
      }
    }
  }
}

std::vector<std::uint8_t> encode_dataset(const ActivationDataset& dataset) {
  validate_dataset(dataset);
  ByteWriter out;
  out.bytes(kMagic);
  out.u32(kVersion);
  out.u32(dataset.dim);
  out.u32(static_cast<std::uint32_t>(dataset.records.size()));
  out.u8(static_cast<std::uint8_t>(dataset.split));
  out.u8(0);  // reserved
  out.u16(static_cast<std::uint16_t>(dataset.layer_tag.size()));
  out.bytes(dataset.layer_tag);
  for (const auto& r : dataset.records) {
    out.u8(static_cast<std::uint8_t>(r.label));
    out.u16(static_cast<std::uint16_t>(r.source.size()));
    out.bytes(r.source);
    const auto t = static_cast<std::uint32_t>(r.states.rows());
    out.u32(t);
    out.u8(r.token_ids ? 1 : 0);
    out.u8(r.user_window ? 1 : 0);
    if (r.user_window) {
      out.u32(r.user_window->start);
      out.u32(r.user_window->end);
    }
    if (r.token_ids) {
      for (auto id : *r.token_ids) out.u32(id);
    }
    for (Eigen::Index row = 0; row < r.states.rows(); ++row) {
      for (Eigen::Index col = 0; col < r.states.cols(); ++col) {
        out.f32(static_cast<float>(r.states(row, col)));
      }
    }
  }
  return std::move(out).take();
}

ActivationDataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  if (bytes.size() < kMagic.size() || in.bytes(kMagic.size(), "magic") != kMagic) {
    throw Error(ErrorKind::kFormat, "bad magic, not an HSTJ dataset");
  }
  const auto version = in.u32("version");
  if (version != kVersion) {
    throw Error(ErrorKind::kFormat, "unsupported dataset version " + std::to_string(version));
  }
  ActivationDataset ds;
  ds.dim = in.u32("dim");
  if (ds.dim == 0) throw Error(ErrorKind::kFormat, "dataset dimension is zero");
  const auto count = in.u32("record count");
  const auto split = in.u8("split tag");
  if (split > 1) throw Error(ErrorKind::kFormat, "unknown split tag " + std::to_string(split));
  ds.split = static_cast<SplitTag>(split);
  in.u8("reserved");
  ds.layer_tag = in.bytes(in.u16("layer tag length"), "layer tag");

  // A declared count cannot exceed what the payload could possibly hold; guard
  // the reservation against absurd headers.
  ds.records.reserve(std::min<std::size_t>(count, in.remaining() / 9 + 1));
  for (std::uint32_t i = 0; i < count; ++i) {
    SequenceRecord r;
    const auto label_offset = in.offset();
    const auto label = in.u8("label");
    if (label > 1) {
      throw Error(ErrorKind::kFormat, "record " + std::to_string(i) + ": bad label byte at offset " +
                                          std::to_string(label_offset));
    }
    r.label = static_cast<Label>(label);
    r.source = in.bytes(in.u16("source length"), "source");
    const auto t = in.u32("sequence length");
    if (t == 0) throw RecordError(ErrorKind::kValidation, i, "sequence has no tokens");
    const auto has_tokens = in.u8("has_tokens flag");
    const auto has_window = in.u8("has_window flag");
    if (has_tokens > 1 || has_window > 1) {
      throw Error(ErrorKind::kFormat, "record " + std::to_string(i) + ": bad presence flag");
    }
    if (has_window) {
      TokenWindow w;
      w.start = in.u32("window start");
      w.end = in.u32("window end");
      r.user_window = w;
    }
    if (has_tokens) {
      const std::size_t need = static_cast<std::size_t>(t) * 4;
      if (in.remaining() < need) throw CorruptionError(in.offset(), "truncated token ids");
      std::vector<std::uint32_t> ids(t);
      for (auto& id : ids) id = in.u32("token id");
      r.token_ids = std::move(ids);
    }
    const std::size_t need = static_cast<std::size_t>(t) * ds.dim * 4;
    if (in.remaining() < need) throw CorruptionError(in.offset(), "truncated state block");
    r.states.resize(t, ds.dim);
    for (std::uint32_t row = 0; row < t; ++row) {
      for (std::uint32_t col = 0; col < ds.dim; ++col) {
        r.states(row, col) = static_cast<double>(in.f32("state"));
      }
    }
    ds.records.push_back(std::move(r));
  }
  if (in.remaining() != 0) {
    throw CorruptionError(in.offset(), "payload longer than the declared " + std::to_string(count) +
                                           " records");
  }
  validate_dataset(ds);
  return ds;
}

void save_dataset(const ActivationDataset& dataset, const std::filesystem::path& destination) {
  const auto bytes = encode_dataset(dataset);
  write_file_bytes(destination, bytes);
}

ActivationDataset load_dataset(const std::filesystem::path& source) {
  const auto bytes = read_file_bytes(source);
  return decode_dataset(bytes);
}

ActivationDataset filter_records(const ActivationDataset& dataset, std::optional<Label> label,
                                 std::optional<std::string_view> source) {
  ActivationDataset out;
  out.dim = dataset.dim;
  out.split = dataset.split;
  out.layer_tag = dataset.layer_tag;
  for (const auto& r : dataset.records) {
    if (label && r.label != *label) continue;
    if (source && r.source != *source) continue;
    out.records.push_back(r);
  }
  return out;
}

Matrix final_token_matrix(const ActivationDataset& dataset, std::span<const std::size_t> indices) {
  Matrix out(static_cast<Eigen::Index>(indices.size()), dataset.dim);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& r = dataset.records.at(indices[i]);
    out.row(static_cast<Eigen::Index>(i)) = r.states.row(r.states.rows() - 1);
  }
  return out;
}

}  // namespace probetraj
