#include "probetraj/geometry.hpp"

#include "probetraj/errors.hpp"

namespace probetraj {
namespace {

Vector final_token_mean(const ActivationDataset& set, const std::string& name) {
  if (set.records.empty()) {
    throw Error(ErrorKind::kMissingPopulation, "population '" + name + "' is empty");
  }
  Vector acc = Vector::Zero(set.records.front().states.cols());
  for (const auto& r : set.records) {
    if (r.states.cols() != acc.size()) {
      throw Error(ErrorKind::kDimension, "population '" + name + "' mixes state dimensions");
    }
    acc += r.final_token();
  }
  return acc / static_cast<double>(set.records.size());
}

std::string describe_filter(const ActivationDataset& set) {
  std::map<std::string, std::size_t> by;
  for (const auto& r : set.records) ++by[std::string(to_string(r.label)) + "/" + r.source];
  std::string out;
  for (const auto& [k, n] : by) {
    if (!out.empty()) out += ",";
    out += k + ":" + std::to_string(n);
  }
  return out;
}

Vector contrast(const ActivationDataset& plus, const std::string& plus_name, const ActivationDataset& minus,
                const std::string& minus_name, const std::string& name, DirectionSet& dirs) {
  const Vector a = final_token_mean(plus, plus_name);
  const Vector b = final_token_mean(minus, minus_name);
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kDimension, name + ": populations disagree on dimension");
  }
  Vector d;
  try {
    d = numkit::unit(a - b);
  } catch (const Error&) {
    throw Error(ErrorKind::kDegenerateDirection, name + ": means of " + plus_name + " and " + minus_name + " coincide");
  }
  dirs.provenance.push_back(DirectionProvenance{name, plus_name, minus_name, plus.records.size(), minus.records.size(),
                                                describe_filter(plus), describe_filter(minus)});
  return d;
}

}  // namespace

const Vector& DirectionSet::get(std::string_view name) const {
  if (name == "d_harm") return d_harm;
  if (name == "d_safe") return d_safe;
  if (name == "d_miss") return d_miss;
  if (name == "delta_cm") return delta_cm;
  throw Error(ErrorKind::kArgument, "unknown direction '" + std::string(name) + "'");
}

DirectionSet build_directions(const DirectionInputs& in) {
  DirectionSet dirs;
  dirs.d_harm = contrast(in.harm_train, "H_train", in.benign_train, "B_train", "d_harm", dirs);
  dirs.d_safe = contrast(in.sorry, "S_sorry", in.xstest, "X_xstest", "d_safe", dirs);
  dirs.d_miss = contrast(in.missed, "J_miss", in.benign_train, "B_train", "d_miss", dirs);
  dirs.delta_cm = contrast(in.caught, "J_caught", in.missed, "J_miss", "delta_cm", dirs);
  return dirs;
}

GeometryReport geometry_report(const BottleneckProbe& probe, const DirectionSet& dirs) {
  probe.validate();
  for (auto name : DirectionSet::kNames) {
    if (dirs.get(name).size() != probe.dim()) {
      throw Error(ErrorKind::kDimension, "direction " + std::string(name) + " has length " +
                                             std::to_string(dirs.get(name).size()) + ", probe expects " +
                                             std::to_string(probe.dim()));
    }
  }
  const OrthonormalBasis basis = numkit::thin_svd_rowspace(probe.w1);
  GeometryReport rep;
  rep.rank = basis.rank();
  rep.singular_values = basis.singular_values;
  for (auto name : DirectionSet::kNames) {
    const std::string key(name);
    rep.energies[key] = numkit::subspace_energy(basis, dirs.get(name));
    rep.max_basis_alignments[key] = numkit::max_basis_alignment(basis, dirs.get(name));
  }
  for (auto name : {"d_harm", "d_safe", "d_miss"}) {
    CosinePair pair;
    pair.full = numkit::cosine(dirs.delta_cm, dirs.get(name));
    try {
      pair.projected = numkit::projected_cosine(basis, dirs.delta_cm, dirs.get(name));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kProjectedDegenerate) throw;
    }
    rep.alignments[name] = pair;
  }
  return rep;
}

}  // namespace probetraj
