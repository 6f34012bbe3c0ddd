#include "probetraj/report.hpp"

#include <cstdio>
#include <sstream>

#include "probetraj/binary_io.hpp"
#include "probetraj/errors.hpp"

namespace probetraj {
namespace {

template <typename T>
Json opt(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

template <typename T>
Json array_of(const std::vector<T>& xs) {
  Json a = Json::array();
  for (const auto& x : xs) a.push_back(to_json(x));
  return a;
}

Json window_json(const std::optional<TokenWindow>& w) {
  if (!w) return nullptr;
  return Json::array({w->start, w->end});
}

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string num(const std::optional<double>& v, int prec = 4) { return v ? num(*v, prec) : "undef"; }

// Simple aligned table: first column left-aligned, the rest right-aligned.
class Table {
 public:
  explicit Table(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  std::string str() const {
    std::vector<std::size_t> w(rows_.front().size(), 0);
    for (const auto& r : rows_) {
      for (std::size_t c = 0; c < r.size(); ++c) w[c] = std::max(w[c], r[c].size());
    }
    std::ostringstream os;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const auto& r = rows_[i];
      for (std::size_t c = 0; c < r.size(); ++c) {
        const auto pad = std::string(w[c] - r[c].size(), ' ');
        os << (c ? "  " : "") << (c ? pad + r[c] : r[c] + pad);
      }
      os << '\n';
      if (i == 0) {
        for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "  " : "") << std::string(w[c], '-');
        os << '\n';
      }
    }
    return os.str();
  }

  std::string csv() const {
    std::ostringstream os;
    for (const auto& r : rows_) {
      for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << r[c];
      os << '\n';
    }
    return os.str();
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

Table rate_table(const std::vector<SourceRate>& rates, const std::string& rate_name) {
  Table t({"source", "label", "n", "flagged", rate_name, "mean_score"});
  for (const auto& r : rates) {
    t.add({r.source, std::string(to_string(r.label)), std::to_string(r.n), std::to_string(r.flagged), num(r.rate),
           num(r.mean_score)});
  }
  return t;
}

std::vector<std::size_t> index_list(const Json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw Error(ErrorKind::kFormat, std::string("partition lacks an array field '") + key + "'");
  }
  std::vector<std::size_t> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_number_unsigned()) throw Error(ErrorKind::kFormat, std::string("partition '") + key + "' holds a non-index");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

}  // namespace

Json to_json(const SourceRate& r) {
  return {{"source", r.source}, {"label", to_string(r.label)}, {"n", r.n},
          {"flagged", r.flagged}, {"rate", r.rate},            {"mean_score", r.mean_score}};
}

Json to_json(const FinalTokenEval& e) {
  return {{"threshold", e.threshold}, {"per_source", array_of(e.per_source)}, {"caught", e.caught},
          {"missed", e.missed},       {"notes", e.notes}};
}

Json to_json(const WidthRow& r) {
  return {{"width", r.width},       {"seed", r.seed},  {"jailbreak_detection", opt(r.jailbreak_detection)},
          {"per_source", array_of(r.per_source)}, {"error", opt(r.error)}};
}

static Json to_json(const SweepAggregate& a) {
  return {{"population", a.population}, {"n", a.n}, {"located", a.located}, {"located_fraction", a.located_fraction},
          {"mean_final", opt(a.mean_final)}, {"mean_goal", opt(a.mean_goal)}, {"mean_max", opt(a.mean_max)}};
}

Json to_json(const TokenSweepReport& t) {
  Json entries = Json::array();
  for (const auto& e : t.entries) {
    entries.push_back({{"index", e.index},
                       {"source", e.source},
                       {"label", to_string(e.label)},
                       {"final_score", e.final_score},
                       {"max_score", e.max_score},
                       {"max_position", e.max_position},
                       {"has_request", e.has_request},
                       {"span", window_json(e.span)},
                       {"goal_score", opt(e.goal_score)}});
  }
  return {{"missed_jailbreaks", to_json(t.missed_jailbreaks)},
          {"direct_harmful", to_json(t.direct_harmful)},
          {"entries", entries},
          {"notes", t.notes}};
}

Json to_json(const TrajectoryEval& t) {
  const auto& c = t.complementarity;
  return {{"threshold", t.threshold},
          {"n_jailbreak", t.n_jailbreak},
          {"jailbreak_flagged", t.jailbreak_flagged},
          {"jailbreak_detection", opt(t.jailbreak_detection)},
          {"n_missed", t.n_missed},
          {"recovered", t.recovered},
          {"recovery", opt(t.recovery)},
          {"n_benign", t.n_benign},
          {"benign_flagged", t.benign_flagged},
          {"benign_fpr", opt(t.benign_fpr)},
          {"per_source", array_of(t.per_source)},
          {"complementarity",
           {{"both", c.both}, {"probe_only", c.probe_only}, {"traj_only", c.traj_only}, {"neither", c.neither}}},
          {"scores", t.scores}};
}

Json to_json(const EnergyPair& e) {
  return {{"direction", e.direction}, {"probe_energy", e.probe_energy}, {"pca_energy", e.pca_energy}};
}

Json to_json(const LengthCorrelation& c) {
  return {{"source", c.source}, {"n", c.n}, {"spearman", opt(c.spearman)}};
}

Json to_json(const GeometryReport& g) {
  Json energies = Json::object(), basis = Json::object(), align = Json::object();
  for (auto name : DirectionSet::kNames) {
    energies[std::string(name)] = g.energies.at(std::string(name));
    basis[std::string(name)] = g.max_basis_alignments.at(std::string(name));
  }
  for (auto name : {"d_harm", "d_safe", "d_miss"}) {
    const auto& p = g.alignments.at(name);
    align[name] = {{"cosine", p.full}, {"projected_cosine", opt(p.projected)}};
  }
  return {{"rank", g.rank},
          {"singular_values", g.singular_values},
          {"energies", energies},
          {"delta_cm_alignment", align},
          {"max_basis_alignment", basis}};
}

Json to_json(const DirectionSet& d) {
  Json prov = Json::array();
  for (const auto& p : d.provenance) {
    prov.push_back({{"direction", p.name},
                    {"plus", p.plus_set},
                    {"minus", p.minus_set},
                    {"plus_count", p.plus_count},
                    {"minus_count", p.minus_count},
                    {"plus_groups", p.plus_filter},
                    {"minus_groups", p.minus_filter}});
  }
  Json vecs = Json::object();
  for (auto name : DirectionSet::kNames) {
    const Vector& v = d.get(name);
    vecs[std::string(name)] = std::vector<double>(v.data(), v.data() + v.size());
  }
  return {{"vectors", vecs}, {"provenance", prov}};
}

Json to_json(const ProbeTrainingInfo& i) {
  return {{"seed", i.seed},
          {"learning_rate", i.learning_rate},
          {"epochs", i.epochs},
          {"batch_size", i.batch_size},
          {"weight_decay", i.weight_decay},
          {"balancing", to_string(i.balancing)},
          {"init", i.init},
          {"n_train", i.n_train},
          {"final_loss", i.final_loss},
          {"final_accuracy", i.final_accuracy}};
}

Json to_json(const TrajectoryFitMetadata& m) {
  auto cls = [](const ClassFitInfo& c) {
    return Json{{"n_sequences", c.n_sequences}, {"n_frames", c.n_frames},   {"best_restart", c.best_restart},
                {"iterations", c.iterations},   {"converged", c.converged}, {"final_loglik", c.final_loglik},
                {"restart_logliks", c.restart_logliks}};
  };
  return {{"seed", m.seed},
          {"restarts", m.restarts},
          {"requested_pca_dim", m.requested_pca_dim},
          {"n_harm_records", m.n_harm_records},
          {"n_benign_records", m.n_benign_records},
          {"n_dropped", m.n_dropped},
          {"harm", cls(m.harm)},
          {"benign", cls(m.benign)},
          {"train_accuracy", m.train_accuracy},
          {"warnings", m.warnings}};
}

Json to_json(const EvalReport& r) {
  Json j = {{"dim", r.dim}, {"n_records", r.n_records}, {"final_token", to_json(r.final_token)},
            {"max_pool", array_of(r.max_pool)}};
  if (r.width_sweep) j["width_sweep"] = array_of(*r.width_sweep);
  if (r.token_sweep) j["token_sweep"] = to_json(*r.token_sweep);
  if (r.trajectory) j["trajectory"] = to_json(*r.trajectory);
  if (r.energy_comparison) j["energy_comparison"] = array_of(*r.energy_comparison);
  if (r.spearman) j["spearman"] = array_of(*r.spearman);
  if (r.geometry) j["geometry"] = to_json(*r.geometry);
  j["notes"] = r.notes;
  return j;
}

std::string render_text(const std::vector<WidthRow>& rows) {
  Table t({"width", "jailbreak_detection", "error"});
  for (const auto& w : rows) t.add({std::to_string(w.width), num(w.jailbreak_detection), w.error.value_or("")});
  return t.str();
}

std::string render_csv(const std::vector<WidthRow>& rows) {
  Table t({"width", "seed", "jailbreak_detection"});
  for (const auto& w : rows) {
    t.add({std::to_string(w.width), std::to_string(w.seed), w.jailbreak_detection ? num(*w.jailbreak_detection, 6) : ""});
  }
  return t.csv();
}

std::string render_text(const GeometryReport& g) {
  std::ostringstream os;
  os << "probe row-space rank " << g.rank << "\n\n";
  Table e({"direction", "energy", "max_basis_alignment"});
  for (auto name : DirectionSet::kNames) {
    const std::string k(name);
    e.add({k, num(g.energies.at(k)), num(g.max_basis_alignments.at(k))});
  }
  os << e.str() << '\n';
  Table a({"delta_cm vs", "cosine", "projected_cosine"});
  for (auto name : {"d_harm", "d_safe", "d_miss"}) {
    const auto& p = g.alignments.at(name);
    a.add({name, num(p.full), num(p.projected)});
  }
  os << a.str();
  return os.str();
}

std::string render_text(const EvalReport& r) {
  std::ostringstream os;
  os << "final-token probe at threshold " << num(r.final_token.threshold, 2) << "\n";
  os << rate_table(r.final_token.per_source, "rate").str();
  os << "jailbreaks caught " << r.final_token.caught.size() << ", missed " << r.final_token.missed.size() << "\n\n";
  os << "max-pooled probe\n" << rate_table(r.max_pool, "rate").str() << '\n';
  if (r.width_sweep) os << "width sweep\n" << render_text(*r.width_sweep) << '\n';
  if (r.token_sweep) {
    Table t({"population", "n", "located", "located_frac", "mean_final", "mean_goal", "mean_max"});
    for (const auto* a : {&r.token_sweep->missed_jailbreaks, &r.token_sweep->direct_harmful}) {
      t.add({a->population, std::to_string(a->n), std::to_string(a->located), num(a->located_fraction),
             num(a->mean_final), num(a->mean_goal), num(a->mean_max)});
    }
    os << "token-position sweep\n" << t.str() << '\n';
  }
  if (r.trajectory) {
    const auto& t = *r.trajectory;
    os << "trajectory diagnostic, LLR threshold " << num(t.threshold) << "\n";
    Table s({"metric", "value"});
    s.add({"jailbreak_detection", num(t.jailbreak_detection)});
    s.add({"recovery_among_misses", num(t.recovery)});
    s.add({"benign_fpr", num(t.benign_fpr)});
    s.add({"both", std::to_string(t.complementarity.both)});
    s.add({"probe_only", std::to_string(t.complementarity.probe_only)});
    s.add({"traj_only", std::to_string(t.complementarity.traj_only)});
    s.add({"neither", std::to_string(t.complementarity.neither)});
    os << s.str() << rate_table(t.per_source, "rate").str() << '\n';
  }
  if (r.energy_comparison) {
    Table t({"direction", "probe_energy", "pca_energy"});
    for (const auto& e : *r.energy_comparison) t.add({e.direction, num(e.probe_energy), num(e.pca_energy)});
    os << "subspace energy\n" << t.str() << '\n';
  }
  if (r.spearman) {
    Table t({"source", "n", "spearman"});
    for (const auto& c : *r.spearman) t.add({c.source, std::to_string(c.n), num(c.spearman)});
    os << "window length vs LLR\n" << t.str() << '\n';
  }
  if (r.geometry) os << "geometry\n" << render_text(*r.geometry) << '\n';
  for (const auto& n : r.notes) os << "note: " << n << '\n';
  return os.str();
}

std::map<std::string, std::string> render_csv(const EvalReport& r) {
  std::map<std::string, std::string> out;
  out["final_token"] = rate_table(r.final_token.per_source, "rate").csv();
  out["max_pool"] = rate_table(r.max_pool, "rate").csv();
  if (r.width_sweep) out["width_sweep"] = render_csv(*r.width_sweep);
  if (r.token_sweep) {
    Table t({"index", "source", "label", "final_score", "max_score", "max_position", "span_start", "span_end", "goal_score"});
    for (const auto& e : r.token_sweep->entries) {
      t.add({std::to_string(e.index), e.source, std::string(to_string(e.label)), num(e.final_score, 6),
             num(e.max_score, 6), std::to_string(e.max_position), e.span ? std::to_string(e.span->start) : "",
             e.span ? std::to_string(e.span->end) : "", e.goal_score ? num(*e.goal_score, 6) : ""});
    }
    out["token_sweep"] = t.csv();
  }
  if (r.trajectory) {
    const auto& c = r.trajectory->complementarity;
    Table t({"partition", "count"});
    t.add({"both", std::to_string(c.both)});
    t.add({"probe_only", std::to_string(c.probe_only)});
    t.add({"traj_only", std::to_string(c.traj_only)});
    t.add({"neither", std::to_string(c.neither)});
    out["complementarity"] = t.csv();
    out["trajectory_per_source"] = rate_table(r.trajectory->per_source, "rate").csv();
  }
  if (r.energy_comparison) {
    Table t({"direction", "probe_energy", "pca_energy"});
    for (const auto& e : *r.energy_comparison) t.add({e.direction, num(e.probe_energy, 6), num(e.pca_energy, 6)});
    out["energy_comparison"] = t.csv();
  }
  if (r.spearman) {
    Table t({"source", "n", "spearman"});
    for (const auto& c : *r.spearman) t.add({c.source, std::to_string(c.n), c.spearman ? num(*c.spearman, 6) : ""});
    out["spearman"] = t.csv();
  }
  return out;
}

Json requests_to_json(const RequestMap& requests) {
  Json j = Json::object();
  for (const auto& [idx, ids] : requests) j[std::to_string(idx)] = ids;
  return j;
}

RequestMap requests_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kFormat, "requests must be an object of index -> token ids");
  RequestMap out;
  for (const auto& [key, value] : j.items()) {
    std::size_t idx = 0, used = 0;
    try {
      idx = std::stoull(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != key.size()) throw Error(ErrorKind::kFormat, "request key '" + key + "' is not a record index");
    if (!value.is_array()) throw Error(ErrorKind::kFormat, "request " + key + " is not an array");
    std::vector<std::uint32_t> ids;
    for (const auto& v : value) {
      if (!v.is_number_unsigned() || v.get<std::uint64_t>() > UINT32_MAX) {
        throw Error(ErrorKind::kFormat, "request " + key + " holds an invalid token id");
      }
      ids.push_back(v.get<std::uint32_t>());
    }
    out[idx] = std::move(ids);
  }
  return out;
}

Partition partition_from_json(const Json& j) {
  const Json& section = j.contains("final_token") ? j.at("final_token") : j;
  return Partition{index_list(section, "caught"), index_list(section, "missed")};
}

Json read_json_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": invalid JSON: " + e.what());
  }
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace probetraj
