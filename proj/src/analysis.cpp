#include "probetraj/analysis.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include "probetraj/errors.hpp"
#include "probetraj/kernels.hpp"
#include "probetraj/numkit.hpp"
#include "probetraj/rng.hpp"

namespace probetraj {
namespace {

constexpr std::uint64_t kWidthStream = 0x5749445448ULL;

bool contains(const std::vector<std::string>& v, std::string_view s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::optional<double> fraction(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

void check_dim(const ActivationDataset& data, Eigen::Index dim, std::string_view what) {
  if (data.dim != dim) {
    throw Error(ErrorKind::kDimension, std::string(what) + " expects state width " + std::to_string(dim) +
                                           ", dataset has " + std::to_string(data.dim));
  }
}

SweepAggregate aggregate(std::string name, const std::vector<const TokenSweepEntry*>& pop) {
  SweepAggregate a;
  a.population = std::move(name);
  a.n = pop.size();
  std::vector<double> finals, goals, maxes;
  for (const auto* e : pop) {
    if (!e->goal_score) continue;
    ++a.located;
    finals.push_back(e->final_score);
    goals.push_back(*e->goal_score);
    maxes.push_back(e->max_score);
  }
  a.located_fraction = a.n ? static_cast<double>(a.located) / static_cast<double>(a.n) : 0.0;
  a.mean_final = mean_of(finals);
  a.mean_goal = mean_of(goals);
  a.mean_max = mean_of(maxes);
  return a;
}

}  // namespace

bool SourceRoles::is_jailbreak(std::string_view s) const { return contains(jailbreak, s); }
bool SourceRoles::is_sorry(std::string_view s) const { return contains(sorry, s); }
bool SourceRoles::is_xstest(std::string_view s) const { return contains(xstest, s); }

std::vector<SourceRate> source_rates(const ActivationDataset& data, std::span<const double> scores, double threshold) {
  if (scores.size() != data.records.size()) throw Error(ErrorKind::kArgument, "one score per record expected");
  std::vector<SourceRate> out;
  std::vector<double> sums;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    auto it = std::find_if(out.begin(), out.end(), [&](const SourceRate& g) { return g.source == r.source && g.label == r.label; });
    if (it == out.end()) {
      out.push_back(SourceRate{r.source, r.label, 0, 0, 0.0, 0.0});
      sums.push_back(0.0);
      it = out.end() - 1;
    }
    const auto g = static_cast<std::size_t>(it - out.begin());
    ++it->n;
    if (scores[i] > threshold) ++it->flagged;
    sums[g] += scores[i];
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    out[g].rate = static_cast<double>(out[g].flagged) / static_cast<double>(out[g].n);
    out[g].mean_score = sums[g] / static_cast<double>(out[g].n);
  }
  return out;
}

const SourceRate* find_rate(const std::vector<SourceRate>& rates, std::string_view source) {
  for (const auto& r : rates) {
    if (r.source == source) return &r;
  }
  return nullptr;
}

FinalTokenEval evaluate_final_token(const BottleneckProbe& probe, const ActivationDataset& eval,
                                    const SourceRoles& roles, double threshold) {
  probe.validate();
  check_dim(eval, probe.dim(), "probe");
  FinalTokenEval out;
  out.threshold = threshold;
  out.scores = kernels::omp::final_scores(probe, eval);
  out.per_source = source_rates(eval, out.scores, threshold);
  for (std::size_t i = 0; i < eval.records.size(); ++i) {
    if (!roles.is_jailbreak(eval.records[i].source)) continue;
    (out.scores[i] > threshold ? out.caught : out.missed).push_back(i);
  }
  std::set<std::string> present;
  for (const auto& r : eval.records) present.insert(r.source);
  for (const auto* group : {&roles.jailbreak, &roles.sorry, &roles.xstest}) {
    bool any = false;
    for (const auto& s : *group) any = any || present.count(s);
    if (!any && !group->empty()) {
      out.notes.push_back("no records for role sources {" + group->front() + (group->size() > 1 ? ",..." : "") +
                          "}; omitted");
    }
  }
  return out;
}

std::uint64_t width_seed(std::uint64_t base_seed, int width) {
  return derive_seed(base_seed, {kWidthStream, static_cast<std::uint64_t>(width)});
}

std::vector<WidthRow> width_sweep(const ActivationDataset& train, const ActivationDataset& eval,
                                  std::span<const int> widths, const TrainConfig& base, const SourceRoles& roles,
                                  double threshold) {
  if (widths.empty()) throw Error(ErrorKind::kArgument, "width sweep needs at least one width");
  std::vector<WidthRow> rows;
  for (int w : widths) {
    WidthRow row;
    row.width = w;
    row.seed = width_seed(base.seed, w);
    try {
      TrainConfig cfg = base;
      cfg.width = w;
      cfg.seed = row.seed;
      const auto probe = train_probe(train, cfg);
      const auto ev = evaluate_final_token(probe, eval, roles, threshold);
      row.per_source = ev.per_source;
      row.jailbreak_detection = fraction(ev.caught.size(), ev.caught.size() + ev.missed.size());
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::optional<TokenWindow> locate_span(std::span<const std::uint32_t> haystack, std::span<const std::uint32_t> needle) {
  if (needle.empty()) throw Error(ErrorKind::kArgument, "span search needs a non-empty needle");
  if (needle.size() > haystack.size()) return std::nullopt;
  const auto it = std::search(haystack.begin(), haystack.end(),
                              std::boyer_moore_horspool_searcher(needle.begin(), needle.end()));
  if (it == haystack.end()) return std::nullopt;
  const auto start = static_cast<std::uint32_t>(it - haystack.begin());
  return TokenWindow{start, static_cast<std::uint32_t>(start + needle.size())};
}

TokenSweepReport token_sweep_report(const BottleneckProbe& probe, const ActivationDataset& eval,
                                    const RequestMap& requests, std::span<const std::size_t> missed,
                                    const SourceRoles& roles) {
  probe.validate();
  check_dim(eval, probe.dim(), "probe");
  for (const auto& [idx, req] : requests) {
    if (idx >= eval.records.size()) {
      throw Error(ErrorKind::kValidation, "request mapping names record " + std::to_string(idx) + " but the dataset has " +
                                              std::to_string(eval.records.size()));
    }
    if (req.empty()) throw Error(ErrorKind::kValidation, "request for record " + std::to_string(idx) + " is empty");
  }
  const auto positions = kernels::omp::score_positions(probe, eval);
  TokenSweepReport rep;
  rep.entries.resize(eval.records.size());
  for (std::size_t i = 0; i < eval.records.size(); ++i) {
    const auto& r = eval.records[i];
    const auto& s = positions[i];
    auto& e = rep.entries[i];
    e.index = i;
    e.source = r.source;
    e.label = r.label;
    e.final_score = s.back();
    const auto best = std::max_element(s.begin(), s.end());  // first maximum
    e.max_score = *best;
    e.max_position = static_cast<std::size_t>(best - s.begin());
    const auto req = requests.find(i);
    if (req == requests.end()) continue;
    e.has_request = true;
    if (!r.token_ids) {
      rep.notes.push_back("record " + std::to_string(i) + ": request given but no token ids; skipped");
      continue;
    }
    e.span = locate_span(*r.token_ids, req->second);
    if (e.span) e.goal_score = *std::max_element(s.begin() + e.span->start, s.begin() + e.span->end);
  }
  std::vector<const TokenSweepEntry*> miss_pop, direct_pop;
  for (auto i : missed) {
    if (i < rep.entries.size() && rep.entries[i].has_request) miss_pop.push_back(&rep.entries[i]);
  }
  for (const auto& e : rep.entries) {
    if (e.has_request && e.label == Label::kHarmful && roles.is_sorry(e.source)) direct_pop.push_back(&e);
  }
  rep.missed_jailbreaks = aggregate("missed_jailbreaks", miss_pop);
  rep.direct_harmful = aggregate("direct_harmful", direct_pop);
  return rep;
}

std::vector<SourceRate> max_pool_eval(const BottleneckProbe& probe, const ActivationDataset& eval, double threshold) {
  probe.validate();
  check_dim(eval, probe.dim(), "probe");
  const auto positions = kernels::omp::score_positions(probe, eval);
  std::vector<double> pooled(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) pooled[i] = *std::max_element(positions[i].begin(), positions[i].end());
  return source_rates(eval, pooled, threshold);
}

TrajectoryEval trajectory_eval(const TrajectoryModel& model, const ActivationDataset& eval,
                               const FinalTokenEval& partition, const SourceRoles& roles) {
  check_dim(eval, model.pca.dim(), "trajectory model");
  if (partition.scores.size() != eval.records.size()) {
    throw Error(ErrorKind::kArgument, "final-token partition was produced on a different dataset");
  }
  TrajectoryEval out;
  out.threshold = model.threshold;
  out.scores = kernels::omp::llr_scores(model, eval);
  out.per_source = source_rates(eval, out.scores, model.threshold);
  auto flagged = [&](std::size_t i) { return out.scores[i] > model.threshold; };

  std::vector<bool> caught(eval.records.size(), false);
  for (auto i : partition.caught) caught.at(i) = true;
  for (auto i : partition.missed) {
    ++out.n_missed;
    if (flagged(i)) ++out.recovered;
  }
  for (std::size_t i = 0; i < eval.records.size(); ++i) {
    const auto& r = eval.records[i];
    if (r.label == Label::kBenign) {
      ++out.n_benign;
      if (flagged(i)) ++out.benign_flagged;
    }
    if (!roles.is_jailbreak(r.source)) continue;
    ++out.n_jailbreak;
    const bool t = flagged(i);
    if (t) ++out.jailbreak_flagged;
    auto& c = out.complementarity;
    if (caught[i]) {
      ++(t ? c.both : c.probe_only);
    } else {
      ++(t ? c.traj_only : c.neither);
    }
  }
  if (out.complementarity.total() != out.n_jailbreak || partition.caught.size() + partition.missed.size() != out.n_jailbreak) {
    throw std::logic_error("complementarity counts do not partition the jailbreak records");
  }
  out.jailbreak_detection = fraction(out.jailbreak_flagged, out.n_jailbreak);
  out.recovery = fraction(out.recovered, out.n_missed);
  out.benign_fpr = fraction(out.benign_flagged, out.n_benign);
  return out;
}

std::vector<EnergyPair> energy_comparison(const BottleneckProbe& probe, const TrajectoryModel& model,
                                          const DirectionSet& dirs) {
  probe.validate();
  if (model.pca.dim() != probe.dim()) {
    throw Error(ErrorKind::kDimension, "probe and trajectory model disagree on state width");
  }
  const auto basis = numkit::thin_svd_rowspace(probe.w1);
  std::vector<EnergyPair> out;
  for (auto name : DirectionSet::kNames) {
    const Vector& d = dirs.get(name);
    out.push_back(EnergyPair{std::string(name), numkit::subspace_energy(basis, d), numkit::subspace_energy(model.pca, d)});
  }
  return out;
}

std::vector<LengthCorrelation> length_correlation(const ActivationDataset& eval, std::span<const double> llr) {
  if (llr.size() != eval.records.size()) throw Error(ErrorKind::kArgument, "one score per record expected");
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by;
  for (std::size_t i = 0; i < eval.records.size(); ++i) {
    const auto& r = eval.records[i];
    if (!by.count(r.source)) order.push_back(r.source);
    auto& [len, sc] = by[r.source];
    len.push_back(static_cast<double>(r.effective_window().size()));
    sc.push_back(llr[i]);
  }
  std::vector<LengthCorrelation> out;
  for (const auto& s : order) {
    const auto& [len, sc] = by[s];
    LengthCorrelation c{s, len.size(), std::nullopt};
    if (len.size() >= 2) {
      try {
        c.spearman = numkit::spearman(len, sc);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kUndefinedCorrelation) throw;
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<LengthCorrelation> length_correlation(const TrajectoryModel& model, const ActivationDataset& eval) {
  check_dim(eval, model.pca.dim(), "trajectory model");
  const auto llr = kernels::omp::llr_scores(model, eval);
  return length_correlation(eval, llr);
}

DirectionInputs direction_inputs(const ActivationDataset& train, const ActivationDataset& eval,
                                 const std::vector<std::size_t>& caught, const std::vector<std::size_t>& missed,
                                 const SourceRoles& roles) {
  DirectionInputs in;
  in.harm_train = filter_records(train, Label::kHarmful);
  in.benign_train = filter_records(train, Label::kBenign);
  for (auto* set : {&in.sorry, &in.xstest, &in.caught, &in.missed}) set->dim = eval.dim;
  for (const auto& r : eval.records) {
    if (r.label == Label::kHarmful && roles.is_sorry(r.source)) in.sorry.records.push_back(r);
    if (r.label == Label::kBenign && roles.is_xstest(r.source)) in.xstest.records.push_back(r);
  }
  for (auto i : caught) in.caught.records.push_back(eval.records.at(i));
  for (auto i : missed) in.missed.records.push_back(eval.records.at(i));
  return in;
}

}  // namespace probetraj
