#include "probetraj/synth.hpp"

#include <algorithm>
#include <cmath>

#include "probetraj/errors.hpp"
#include "probetraj/kv_config.hpp"
#include "probetraj/rng.hpp"

namespace probetraj {
namespace {

constexpr std::uint32_t kFramingVocabLo = 100;
constexpr std::uint32_t kFramingVocabHi = 999;
constexpr std::uint32_t kContentVocabLo = 1000;
constexpr std::uint32_t kContentVocabHi = 49999;
constexpr std::uint32_t kMaxFraming = 3;

enum StreamTag : std::uint64_t { kRequestStream = 0x5245510AULL, kRecordStream = 0x5245430AULL };

struct Request {
  std::uint32_t length = 0;   // total length of the clean record built around it
  std::uint32_t framing = 0;  // framing frames preceding it
  std::vector<std::uint32_t> tokens;
};

// The request behind clean-harm record j; wrapped records regenerate it from
// the same stream, which is how they share token ids without coordination.
Request make_request(const SynthConfig& c, std::uint64_t j) {
  Rng rng(derive_seed(c.seed, {kRequestStream, j}));
  Request r;
  r.length = static_cast<std::uint32_t>(uniform_int(rng, c.seq_len_min, c.seq_len_max));
  const std::uint32_t room = r.length - c.final_tokens - 1;
  r.framing = static_cast<std::uint32_t>(uniform_int(rng, 1, std::min(kMaxFraming, room)));
  r.tokens.resize(r.length - c.final_tokens - r.framing);
  for (auto& t : r.tokens) t = static_cast<std::uint32_t>(uniform_int(rng, kContentVocabLo, kContentVocabHi));
  return r;
}

class FrameWriter {
 public:
  FrameWriter(const SynthConfig& c, Rng& rng, std::uint32_t length)
      : c_(c), rng_(rng), states_(length, c.dim), ids_(length) {}

  void frame(const Vector& center, std::uint32_t id) {
    for (Eigen::Index d = 0; d < states_.cols(); ++d) {
      const double v = center[d] + c_.noise_sigma * normal01(rng_);
      states_(at_, d) = static_cast<double>(static_cast<float>(v));
    }
    ids_[static_cast<std::size_t>(at_)] = id;
    ++at_;
  }

  std::uint32_t framing_id() { return static_cast<std::uint32_t>(uniform_int(rng_, kFramingVocabLo, kFramingVocabHi)); }
  std::uint32_t content_id() { return static_cast<std::uint32_t>(uniform_int(rng_, kContentVocabLo, kContentVocabHi)); }

  Eigen::Index position() const { return at_; }

  SequenceRecord finish(Label label, SynthClass cls, std::uint32_t window_end) {
    SequenceRecord r;
    r.states = std::move(states_);
    r.token_ids = std::move(ids_);
    r.label = label;
    r.source = std::string(source_tag(cls));
    r.user_window = TokenWindow{0, window_end};
    return r;
  }

 private:
  const SynthConfig& c_;
  Rng& rng_;
  Matrix states_;
  std::vector<std::uint32_t> ids_;
  Eigen::Index at_ = 0;
};

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

std::vector<double> parse_reals(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& piece : split_list(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(piece, &used));
      if (used != piece.size()) throw std::invalid_argument(piece);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kValidation, "config key '" + key + "': not a number: " + piece);
    }
  }
  return out;
}

}  // namespace

std::string_view source_tag(SynthClass c) {
  switch (c) {
    case SynthClass::kCleanHarm: return "synth_clean_harm";
    case SynthClass::kCleanBenign: return "synth_benign";
    case SynthClass::kWrappedHarm: return "synth_wrapped_harm";
    case SynthClass::kSpikyBenign: return "synth_spiky_benign";
  }
  return "synth";
}

Label class_label(SynthClass c) {
  return c == SynthClass::kCleanHarm || c == SynthClass::kWrappedHarm ? Label::kHarmful : Label::kBenign;
}

SynthConfig SynthConfig::resolved() const {
  SynthConfig out = *this;
  auto axis = [&](std::size_t i, double scale) {
    std::vector<double> v(dim, 0.0);
    if (i < dim) v[i] = scale;
    return v;
  };
  if (out.harm_mean.empty()) out.harm_mean = axis(0, 5.0);
  if (out.benign_mean.empty()) out.benign_mean = axis(0, -5.0);
  if (out.wrapper_mean.empty()) out.wrapper_mean = axis(1, 6.0);
  return out;
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::kValidation, "synth config: " + m); };
  if (dim == 0) fail("dim must be positive");
  if (final_tokens == 0) fail("final_tokens must be positive");
  if (seq_len_min > seq_len_max) fail("seq_len_min exceeds seq_len_max");
  if (seq_len_min < final_tokens + 2) fail("seq_len_min must leave room for a framing and a content token");
  for (const auto* v : {&harm_mean, &benign_mean, &wrapper_mean}) {
    if (!v->empty() && v->size() != dim) fail("mean vectors must have length dim");
    for (double x : *v) {
      if (!std::isfinite(x)) fail("mean vectors must be finite");
    }
  }
  if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be positive");
  for (double p : {suppression, spike_prob, wrap_success}) {
    if (!(p >= 0.0 && p <= 1.0)) fail("suppression, spike_prob and wrap_success must lie in [0, 1]");
  }
  if (!std::isfinite(wrapper_bleed)) fail("wrapper_bleed must be finite");
}

SynthOutput generate_synthetic(const SynthConfig& config) {
  config.validate();
  const SynthConfig c = config.resolved();
  const Vector harm = to_vector(c.harm_mean);
  const Vector benign = to_vector(c.benign_mean);
  const Vector wrapper = to_vector(c.wrapper_mean);
  const std::uint32_t k = c.final_tokens;

  SynthOutput out;
  out.dataset.dim = c.dim;
  out.dataset.split = c.split;
  out.dataset.layer_tag = c.layer_tag;

  std::size_t total = 0;
  for (auto n : c.counts) total += n;
  out.dataset.records.reserve(total);
  out.classes.reserve(total);
  out.suppressed.reserve(total);

  auto template_id = [](std::uint32_t i) { return i + 1; };

  const std::uint32_t n_clean_harm = c.count(SynthClass::kCleanHarm);
  for (SynthClass cls : kSynthClasses) {
    const auto cls_tag = static_cast<std::uint64_t>(cls);
    for (std::uint32_t i = 0; i < c.count(cls); ++i) {
      Rng rng(derive_seed(c.seed, {kRecordStream, cls_tag, i}));
      const std::size_t index = out.dataset.records.size();
      SequenceRecord rec;
      bool was_suppressed = false;
      switch (cls) {
        case SynthClass::kCleanHarm:
        case SynthClass::kCleanBenign:
        case SynthClass::kSpikyBenign: {
          // Clean-harm content comes from the shared request stream; benign
          // classes draw their own layout from the record stream.
          Request req = cls == SynthClass::kCleanHarm ? make_request(c, i) : Request{};
          if (cls != SynthClass::kCleanHarm) {
            req.length = static_cast<std::uint32_t>(uniform_int(rng, c.seq_len_min, c.seq_len_max));
            req.framing = static_cast<std::uint32_t>(uniform_int(rng, 1, std::min(kMaxFraming, req.length - k - 1)));
            req.tokens.resize(req.length - k - req.framing);
            for (auto& t : req.tokens) t = static_cast<std::uint32_t>(uniform_int(rng, kContentVocabLo, kContentVocabHi));
          }
          const Vector& center = cls == SynthClass::kCleanHarm ? harm : benign;
          std::vector<bool> spikes(req.tokens.size(), false);
          if (cls == SynthClass::kSpikyBenign) {
            bool any = false;
            for (std::size_t t = 0; t < spikes.size(); ++t) {
              spikes[t] = uniform01(rng) < c.spike_prob;
              any = any || spikes[t];
            }
            if (!any && c.spike_prob > 0.0) spikes[uniform_int(rng, 0, spikes.size() - 1)] = true;
          }
          FrameWriter w(c, rng, req.length);
          for (std::uint32_t f = 0; f < req.framing; ++f) w.frame(wrapper, w.framing_id());
          for (std::size_t t = 0; t < req.tokens.size(); ++t) w.frame(spikes[t] ? harm : center, req.tokens[t]);
          for (std::uint32_t f = 0; f < k; ++f) w.frame(center, template_id(f));
          rec = w.finish(class_label(cls), cls, req.length - k);
          if (cls == SynthClass::kCleanHarm) out.requests[index] = req.tokens;
          break;
        }
        case SynthClass::kWrappedHarm: {
          const std::uint64_t pair = n_clean_harm > 0 ? i % n_clean_harm : static_cast<std::uint64_t>(i) + (1ULL << 32);
          const Request req = make_request(c, pair);
          const auto prefix = static_cast<std::uint32_t>(uniform_int(rng, 2, 6));
          const auto suffix = static_cast<std::uint32_t>(uniform_int(rng, 1, 4));
          const bool suppressed = uniform01(rng) < c.wrap_success;
          const double s = suppressed ? c.suppression : 0.0;
          was_suppressed = suppressed && c.suppression > 0.0;
          const auto len = static_cast<std::uint32_t>(prefix + req.tokens.size() + suffix + k);
          const Vector final_center = (1.0 - s) * harm + s * benign + c.wrapper_bleed * wrapper;

          FrameWriter w(c, rng, len);
          for (std::uint32_t f = 0; f < prefix; ++f) w.frame(wrapper, w.framing_id());
          for (auto tok : req.tokens) w.frame(harm, tok);
          for (std::uint32_t f = 0; f < suffix; ++f) w.frame(wrapper, w.framing_id());
          for (std::uint32_t f = 0; f < k; ++f) w.frame(final_center, template_id(f));
          rec = w.finish(Label::kHarmful, cls, len - k);
          out.requests[index] = req.tokens;
          out.planted_spans[index] = TokenWindow{prefix, static_cast<std::uint32_t>(prefix + req.tokens.size())};
          break;
        }
      }
      out.dataset.records.push_back(std::move(rec));
      out.classes.push_back(cls);
      out.suppressed.push_back(was_suppressed);
    }
  }
  return out;
}

ActivationDataset generate(const SynthConfig& config) { return generate_synthetic(config).dataset; }

SynthConfig synth_config_from_text(std::string_view text) {
  const auto kv = parse_kv_config(text);
  SynthConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "dim") {
      c.dim = parse_u32(key, value);
    } else if (key == "seq_len_min") {
      c.seq_len_min = parse_u32(key, value);
    } else if (key == "seq_len_max") {
      c.seq_len_max = parse_u32(key, value);
    } else if (key == "seq_len_range") {
      const auto parts = split_list(value);
      if (parts.size() != 2) throw Error(ErrorKind::kValidation, "seq_len_range takes two integers");
      c.seq_len_min = parse_u32(key, parts[0]);
      c.seq_len_max = parse_u32(key, parts[1]);
    } else if (key == "counts") {
      const auto parts = split_list(value);
      if (parts.size() != 4) throw Error(ErrorKind::kValidation, "counts takes four integers");
      for (std::size_t i = 0; i < 4; ++i) c.counts[i] = parse_u32(key, parts[i]);
    } else if (key == "count_clean_harm") {
      c.counts[0] = parse_u32(key, value);
    } else if (key == "count_clean_benign") {
      c.counts[1] = parse_u32(key, value);
    } else if (key == "count_wrapped_harm") {
      c.counts[2] = parse_u32(key, value);
    } else if (key == "count_spiky_benign") {
      c.counts[3] = parse_u32(key, value);
    } else if (key == "harm_mean") {
      c.harm_mean = parse_reals(key, value);
    } else if (key == "benign_mean") {
      c.benign_mean = parse_reals(key, value);
    } else if (key == "wrapper_mean") {
      c.wrapper_mean = parse_reals(key, value);
    } else if (key == "noise_sigma") {
      c.noise_sigma = parse_real(key, value);
    } else if (key == "suppression") {
      c.suppression = parse_real(key, value);
    } else if (key == "spike_prob") {
      c.spike_prob = parse_real(key, value);
    } else if (key == "wrap_success") {
      c.wrap_success = parse_real(key, value);
    } else if (key == "wrapper_bleed") {
      c.wrapper_bleed = parse_real(key, value);
    } else if (key == "final_tokens") {
      c.final_tokens = parse_u32(key, value);
    } else if (key == "seed") {
      c.seed = parse_u64(key, value);
    } else if (key == "split") {
      const auto s = parse_split(value);
      if (!s) throw Error(ErrorKind::kValidation, "split must be train or eval");
      c.split = *s;
    } else if (key == "layer_tag") {
      c.layer_tag = value;
    } else {
      throw Error(ErrorKind::kValidation, "unknown synth config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

}  // namespace probetraj
