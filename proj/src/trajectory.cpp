#include "probetraj/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "probetraj/binary_io.hpp"
#include "probetraj/errors.hpp"
#include "probetraj/kernels.hpp"
#include "probetraj/rng.hpp"

namespace probetraj {
namespace {

constexpr std::string_view kTrajectoryMagic = "THM1";

// Seeded subset of `pool` of size `keep`, returned in original order.
std::vector<std::size_t> downsample(std::vector<std::size_t> pool, std::size_t keep, std::uint64_t seed) {
  if (pool.size() <= keep) return pool;
  Rng rng(seed);
  shuffle(pool.begin(), pool.end(), rng);
  pool.resize(keep);
  std::sort(pool.begin(), pool.end());
  return pool;
}

nlohmann::json class_info_json(const ClassFitInfo& c) {
  return {{"n_sequences", c.n_sequences}, {"n_frames", c.n_frames},       {"best_restart", c.best_restart},
          {"iterations", c.iterations},   {"converged", c.converged},     {"final_loglik", c.final_loglik},
          {"restart_logliks", c.restart_logliks}};
}

ClassFitInfo class_info_from_json(const nlohmann::json& j) {
  ClassFitInfo c;
  c.n_sequences = j.value("n_sequences", std::size_t{0});
  c.n_frames = j.value("n_frames", std::size_t{0});
  c.best_restart = j.value("best_restart", 0);
  c.iterations = j.value("iterations", 0);
  c.converged = j.value("converged", false);
  c.final_loglik = j.value("final_loglik", 0.0);
  c.restart_logliks = j.value("restart_logliks", std::vector<double>{});
  return c;
}

void write_matrix(ByteWriter& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.f64(m(r, c));
  }
}

void read_matrix(ByteReader& in, Matrix& m, std::string_view what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = in.f64(what);
  }
}

void write_hmm(ByteWriter& out, const GaussianHmm& h) {
  for (Eigen::Index s = 0; s < h.initial.size(); ++s) out.f64(h.initial[s]);
  write_matrix(out, h.transitions);
  write_matrix(out, h.means);
  write_matrix(out, h.variances);
}

GaussianHmm read_hmm(ByteReader& in, Eigen::Index k, Eigen::Index q) {
  GaussianHmm h;
  h.initial.resize(k);
  for (Eigen::Index s = 0; s < k; ++s) h.initial[s] = in.f64("initial");
  h.transitions.resize(k, k);
  read_matrix(in, h.transitions, "transitions");
  h.means.resize(k, q);
  read_matrix(in, h.means, "means");
  h.variances.resize(k, q);
  read_matrix(in, h.variances, "variances");
  h.validate();
  return h;
}

}  // namespace

Matrix windowed_states(const SequenceRecord& record) {
  const auto w = record.effective_window();
  if (w.end <= w.start) throw Error(ErrorKind::kWindow, "empty user window");
  if (w.end > record.length()) throw Error(ErrorKind::kWindow, "user window extends past the sequence");
  return record.states.middleRows(w.start, w.size());
}

double llr_from_logliks(double loglik_harm, double loglik_benign, std::size_t length) {
  if (length == 0) throw Error(ErrorKind::kWindow, "empty window");
  return (loglik_harm - loglik_benign) / static_cast<double>(length);
}

double llr_score(const TrajectoryModel& model, const SequenceRecord& record) {
  if (record.states.cols() != model.pca.dim()) {
    throw Error(ErrorKind::kDimension, "trajectory model expects state width " + std::to_string(model.pca.dim()) +
                                           ", got " + std::to_string(record.states.cols()));
  }
  const Matrix z = numkit::pca_project(model.pca, windowed_states(record));
  return llr_from_logliks(hmm_loglik(model.hmm_harm, z), hmm_loglik(model.hmm_benign, z),
                          static_cast<std::size_t>(z.rows()));
}

ThresholdChoice select_threshold(std::span<const double> harm_scores, std::span<const double> benign_scores) {
  if (harm_scores.empty() || benign_scores.empty()) {
    throw Error(ErrorKind::kArgument, "threshold selection needs scores from both classes");
  }
  std::vector<double> harm(harm_scores.begin(), harm_scores.end());
  std::vector<double> benign(benign_scores.begin(), benign_scores.end());
  std::sort(harm.begin(), harm.end());
  std::sort(benign.begin(), benign.end());
  std::vector<double> values;
  values.reserve(harm.size() + benign.size());
  std::merge(harm.begin(), harm.end(), benign.begin(), benign.end(), std::back_inserter(values));
  values.erase(std::unique(values.begin(), values.end()), values.end());

  std::vector<double> candidates;
  candidates.reserve(values.size() + 1);
  candidates.push_back(values.front() - std::max(1.0, std::abs(values.front())));
  for (std::size_t i = 0; i + 1 < values.size(); ++i) candidates.push_back(0.5 * (values[i] + values[i + 1]));
  candidates.push_back(values.back() + std::max(1.0, std::abs(values.back())));

  const double nh = static_cast<double>(harm.size());
  const double nb = static_cast<double>(benign.size());
  ThresholdChoice best{candidates.front(), -1.0};
  for (const double tau : candidates) {
    const auto tp = static_cast<double>(harm.end() - std::upper_bound(harm.begin(), harm.end(), tau));
    const auto tn = static_cast<double>(std::upper_bound(benign.begin(), benign.end(), tau) - benign.begin());
    const double acc = 0.5 * (tp / nh + tn / nb);
    if (acc > best.accuracy) best = {tau, acc};
  }
  return best;
}

TrajectoryModel fit_trajectory_model(const ActivationDataset& train, const TrajectoryConfig& config) {
  if (config.pca_dim < 1 || config.n_states < 1) throw Error(ErrorKind::kArgument, "invalid trajectory config");
  std::vector<std::size_t> harm_idx, benign_idx;
  for (std::size_t i = 0; i < train.records.size(); ++i) {
    (train.records[i].label == Label::kHarmful ? harm_idx : benign_idx).push_back(i);
  }
  if (harm_idx.empty() || benign_idx.empty()) {
    throw Error(ErrorKind::kDegenerateSplit, "trajectory fit needs both harmful and benign records");
  }

  TrajectoryModel model;
  auto& meta = model.meta;
  meta.seed = config.seed;
  meta.restarts = config.em.restarts;
  meta.max_iterations = config.em.max_iterations;
  meta.tolerance = config.em.tolerance;
  meta.variance_floor = config.em.variance_floor;
  meta.probability_floor = config.em.probability_floor;
  meta.requested_pca_dim = config.pca_dim;

  const std::size_t keep = std::min(harm_idx.size(), benign_idx.size());
  meta.n_dropped = harm_idx.size() + benign_idx.size() - 2 * keep;
  const auto balance_seed = derive_seed(config.seed, {0x42414C414E4345ULL});
  harm_idx = downsample(std::move(harm_idx), keep, balance_seed);
  benign_idx = downsample(std::move(benign_idx), keep, balance_seed);
  meta.n_harm_records = harm_idx.size();
  meta.n_benign_records = benign_idx.size();

  std::vector<std::size_t> pooled_idx;
  std::merge(harm_idx.begin(), harm_idx.end(), benign_idx.begin(), benign_idx.end(), std::back_inserter(pooled_idx));
  std::vector<Matrix> windows(train.records.size());
  Eigen::Index pooled_frames = 0;
  for (auto i : pooled_idx) {
    try {
      windows[i] = windowed_states(train.records[i]);
    } catch (const Error& e) {
      throw RecordError(ErrorKind::kWindow, i, e.what());
    }
    pooled_frames += windows[i].rows();
  }
  Matrix pooled(pooled_frames, train.dim);
  Eigen::Index at = 0;
  for (auto i : pooled_idx) {
    pooled.middleRows(at, windows[i].rows()) = windows[i];
    at += windows[i].rows();
  }
  model.pca = numkit::fit_pca(pooled, config.pca_dim);
  for (const auto& w : model.pca.warnings) meta.warnings.push_back("pca: " + w);

  auto project = [&](const std::vector<std::size_t>& idx) {
    std::vector<Matrix> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(numkit::pca_project(model.pca, windows[i]));
    return out;
  };
  const auto harm_seqs = project(harm_idx);
  const auto benign_seqs = project(benign_idx);

  const EstepFn estep = [](const GaussianHmm& h, std::span<const Matrix> s) { return kernels::omp::estep(h, s); };
  auto fit_class = [&](const std::vector<Matrix>& seqs, std::uint64_t tag, ClassFitInfo& info) {
    auto fit = fit_hmm(seqs, config.n_states, derive_seed(config.seed, {tag}), config.em, estep);
    info.n_sequences = seqs.size();
    for (const auto& s : seqs) info.n_frames += static_cast<std::size_t>(s.rows());
    info.best_restart = fit.best_restart;
    info.iterations = fit.best.iterations;
    info.converged = fit.best.converged;
    info.final_loglik = fit.best.final_loglik;
    info.restart_logliks = fit.restart_logliks;
    return std::move(fit.best.hmm);
  };
  model.hmm_harm = fit_class(harm_seqs, 0x4841524DULL, meta.harm);
  model.hmm_benign = fit_class(benign_seqs, 0x42454E49474EULL, meta.benign);

  std::vector<double> harm_scores, benign_scores;
  for (const auto& z : harm_seqs) {
    harm_scores.push_back(llr_from_logliks(hmm_loglik(model.hmm_harm, z), hmm_loglik(model.hmm_benign, z),
                                           static_cast<std::size_t>(z.rows())));
  }
  for (const auto& z : benign_seqs) {
    benign_scores.push_back(llr_from_logliks(hmm_loglik(model.hmm_harm, z), hmm_loglik(model.hmm_benign, z),
                                             static_cast<std::size_t>(z.rows())));
  }
  const auto choice = select_threshold(harm_scores, benign_scores);
  model.threshold = choice.threshold;
  meta.train_accuracy = choice.accuracy;
  return model;
}

std::vector<std::uint8_t> encode_trajectory_model(const TrajectoryModel& model) {
  const auto dim = model.pca.dim();
  const auto q = model.pca.n_components();
  const auto k = model.hmm_harm.n_states();
  if (model.hmm_benign.n_states() != k || model.hmm_harm.dim() != q || model.hmm_benign.dim() != q) {
    throw Error(ErrorKind::kValidation, "trajectory model components disagree in shape");
  }
  ByteWriter out;
  out.bytes(kTrajectoryMagic);
  out.u32(static_cast<std::uint32_t>(dim));
  out.u32(static_cast<std::uint32_t>(q));
  out.u32(static_cast<std::uint32_t>(k));
  for (Eigen::Index d = 0; d < dim; ++d) out.f64(model.pca.mean[d]);
  write_matrix(out, model.pca.components);
  for (double v : model.pca.explained_variance) out.f64(v);
  write_hmm(out, model.hmm_harm);
  write_hmm(out, model.hmm_benign);
  out.f64(model.threshold);

  const auto& m = model.meta;
  nlohmann::json meta = {{"seed", m.seed},
                         {"restarts", m.restarts},
                         {"max_iterations", m.max_iterations},
                         {"tolerance", m.tolerance},
                         {"variance_floor", m.variance_floor},
                         {"probability_floor", m.probability_floor},
                         {"requested_pca_dim", m.requested_pca_dim},
                         {"n_harm_records", m.n_harm_records},
                         {"n_benign_records", m.n_benign_records},
                         {"n_dropped", m.n_dropped},
                         {"harm", class_info_json(m.harm)},
                         {"benign", class_info_json(m.benign)},
                         {"train_accuracy", m.train_accuracy},
                         {"warnings", m.warnings}};
  const auto text = meta.dump();
  out.u32(static_cast<std::uint32_t>(text.size()));
  out.bytes(text);
  return std::move(out).take();
}

TrajectoryModel decode_trajectory_model(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  if (bytes.size() < kTrajectoryMagic.size() || in.bytes(kTrajectoryMagic.size(), "magic") != kTrajectoryMagic) {
    throw Error(ErrorKind::kFormat, "bad magic, not a THM1 trajectory model");
  }
  const auto dim = static_cast<Eigen::Index>(in.u32("dim"));
  const auto q = static_cast<Eigen::Index>(in.u32("pca dim"));
  const auto k = static_cast<Eigen::Index>(in.u32("states"));
  if (dim == 0 || q == 0 || k == 0 || q > dim) throw Error(ErrorKind::kFormat, "bad trajectory model shape");
  const std::size_t need = 8 * static_cast<std::size_t>(dim + q * dim + q + 2 * (k + k * k + 2 * k * q) + 1);
  if (in.remaining() < need) throw CorruptionError(in.offset(), "truncated trajectory model parameters");

  TrajectoryModel model;
  model.pca.mean.resize(dim);
  for (Eigen::Index d = 0; d < dim; ++d) model.pca.mean[d] = in.f64("pca mean");
  model.pca.components.resize(q, dim);
  read_matrix(in, model.pca.components, "pca components");
  model.pca.explained_variance.resize(static_cast<std::size_t>(q));
  for (auto& v : model.pca.explained_variance) v = in.f64("explained variance");
  model.hmm_harm = read_hmm(in, k, q);
  model.hmm_benign = read_hmm(in, k, q);
  model.threshold = in.f64("threshold");

  const auto text = in.bytes(in.u32("metadata length"), "metadata");
  if (in.remaining() != 0) throw CorruptionError(in.offset(), "trailing bytes after trajectory metadata");
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::kFormat, "trajectory metadata is not JSON");
  auto& m = model.meta;
  m.seed = j.value("seed", std::uint64_t{0});
  m.restarts = j.value("restarts", 0);
  m.max_iterations = j.value("max_iterations", 0);
  m.tolerance = j.value("tolerance", 0.0);
  m.variance_floor = j.value("variance_floor", 0.0);
  m.probability_floor = j.value("probability_floor", 0.0);
  m.requested_pca_dim = j.value("requested_pca_dim", 0);
  m.n_harm_records = j.value("n_harm_records", std::size_t{0});
  m.n_benign_records = j.value("n_benign_records", std::size_t{0});
  m.n_dropped = j.value("n_dropped", std::size_t{0});
  if (j.contains("harm")) m.harm = class_info_from_json(j["harm"]);
  if (j.contains("benign")) m.benign = class_info_from_json(j["benign"]);
  m.train_accuracy = j.value("train_accuracy", 0.0);
  m.warnings = j.value("warnings", std::vector<std::string>{});
  model.pca.requested_components = m.requested_pca_dim;
  return model;
}

void save_trajectory_model(const TrajectoryModel& model, const std::filesystem::path& destination) {
  write_file_bytes(destination, encode_trajectory_model(model));
}

TrajectoryModel load_trajectory_model(const std::filesystem::path& source) {
  return decode_trajectory_model(read_file_bytes(source));
}

}  // namespace probetraj
