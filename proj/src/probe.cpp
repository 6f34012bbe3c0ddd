#include "probetraj/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "probetraj/binary_io.hpp"
#include "probetraj/errors.hpp"
#include "probetraj/rng.hpp"

namespace probetraj {
namespace {

constexpr std::string_view kProbeMagic = "PRB1";

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double bce_from_logit(double z, double y) { return softplus(z) - y * z; }

double apply_activation(Activation act, double v) {
  return act == Activation::kRectifier ? std::max(v, 0.0) : v;
}

double activation_slope(Activation act, double v) {
  if (act == Activation::kIdentity) return 1.0;
  return v > 0.0 ? 1.0 : 0.0;
}

void require_state_dim(const BottleneckProbe& probe, Eigen::Index got) {
  if (got != probe.dim()) {
    throw Error(ErrorKind::kDimension, "probe expects state width " + std::to_string(probe.dim()) +
                                           ", got " + std::to_string(got));
  }
}

template <typename M>
void round_to_f32(M& m) {
  m = m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

struct TrainingSet {
  Matrix x;
  Vector y;
  Vector weight;
};

double objective(const BottleneckProbe& p, const TrainingSet& data, double weight_decay) {
  Matrix pre = data.x * p.w1.transpose();
  pre.rowwise() += p.b1.transpose();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < pre.rows(); ++i) {
    double z = p.b2;
    for (Eigen::Index k = 0; k < pre.cols(); ++k) z += p.w2[k] * apply_activation(p.activation, pre(i, k));
    loss += data.weight[i] * bce_from_logit(z, data.y[i]);
  }
  loss /= static_cast<double>(pre.rows());
  return loss + 0.5 * weight_decay * (p.w1.squaredNorm() + p.w2.squaredNorm());
}

double accuracy(const BottleneckProbe& p, const TrainingSet& data) {
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
    const bool flagged = probe_logit(p, data.x.row(i).transpose()) > 0.0;
    if (flagged == (data.y[i] > 0.5)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.x.rows());
}

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::kRectifier ? "rectifier" : "identity"; }

std::string_view to_string(ClassBalancing b) { return b == ClassBalancing::kNone ? "none" : "reweight"; }

std::optional<Activation> parse_activation(std::string_view text) {
  if (text == "identity") return Activation::kIdentity;
  if (text == "rectifier" || text == "relu") return Activation::kRectifier;
  return std::nullopt;
}

std::optional<ClassBalancing> parse_balancing(std::string_view text) {
  if (text == "reweight") return ClassBalancing::kReweight;
  if (text == "none") return ClassBalancing::kNone;
  return std::nullopt;
}

BottleneckProbe BottleneckProbe::zeros(Eigen::Index width, Eigen::Index dim, Activation act) {
  BottleneckProbe p;
  p.w1 = Matrix::Zero(width, dim);
  p.b1 = Vector::Zero(width);
  p.w2 = Vector::Zero(width);
  p.b2 = 0.0;
  p.activation = act;
  return p;
}

void BottleneckProbe::validate() const {
  if (w1.rows() < 1 || w1.cols() < 1) throw Error(ErrorKind::kValidation, "probe has empty first layer");
  if (b1.size() != w1.rows() || w2.size() != w1.rows()) {
    throw Error(ErrorKind::kValidation, "probe width mismatch between W1, b1 and w2");
  }
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !std::isfinite(b2)) {
    throw Error(ErrorKind::kValidation, "probe has non-finite parameters");
  }
}

double probe_logit(const BottleneckProbe& probe, const Eigen::Ref<const Vector>& state) {
  require_state_dim(probe, state.size());
  double z = probe.b2;
  for (Eigen::Index k = 0; k < probe.width(); ++k) {
    double pre = probe.b1[k];
    for (Eigen::Index d = 0; d < probe.dim(); ++d) pre += probe.w1(k, d) * state[d];
    z += probe.w2[k] * apply_activation(probe.activation, pre);
  }
  return z;
}

double probe_score(const BottleneckProbe& probe, const Eigen::Ref<const Vector>& state) {
  return sigmoid(probe_logit(probe, state));
}

std::vector<double> score_positions(const BottleneckProbe& probe, const SequenceRecord& record) {
  require_state_dim(probe, record.states.cols());
  std::vector<double> scores(record.length());
  for (Eigen::Index t = 0; t < record.states.rows(); ++t) {
    scores[static_cast<std::size_t>(t)] = probe_score(probe, record.states.row(t).transpose());
  }
  return scores;
}

double sample_loss(const BottleneckProbe& probe, const Vector& state, double label) {
  return bce_from_logit(probe_logit(probe, state), label);
}

ProbeGradient loss_gradient(const BottleneckProbe& probe, const Vector& state, double label) {
  require_state_dim(probe, state.size());
  const Vector pre = probe.w1 * state + probe.b1;
  Vector act(pre.size());
  for (Eigen::Index k = 0; k < pre.size(); ++k) act[k] = apply_activation(probe.activation, pre[k]);
  const double z = probe.w2.dot(act) + probe.b2;
  const double delta = sigmoid(z) - label;

  ProbeGradient g;
  g.b2 = delta;
  g.w2 = delta * act;
  g.b1.resize(pre.size());
  for (Eigen::Index k = 0; k < pre.size(); ++k) {
    g.b1[k] = delta * probe.w2[k] * activation_slope(probe.activation, pre[k]);
  }
  g.w1 = g.b1 * state.transpose();
  return g;
}

double gradient_check(const BottleneckProbe& probe, const Vector& state, double label, double step) {
  const auto analytic = loss_gradient(probe, state, label);
  BottleneckProbe work = probe;
  double worst = 0.0;
  auto compare = [&](double& param, double grad) {
    const double saved = param;
    param = saved + step;
    const double up = sample_loss(work, state, label);
    param = saved - step;
    const double down = sample_loss(work, state, label);
    param = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(grad), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(grad - numeric) / denom);
  };
  for (Eigen::Index k = 0; k < work.width(); ++k) {
    for (Eigen::Index d = 0; d < work.dim(); ++d) compare(work.w1(k, d), analytic.w1(k, d));
    compare(work.b1[k], analytic.b1[k]);
    compare(work.w2[k], analytic.w2[k]);
  }
  compare(work.b2, analytic.b2);
  return worst;
}

BottleneckProbe train_probe(const ActivationDataset& train, const TrainConfig& config) {
  if (config.width < 1 || config.epochs < 1 || config.batch_size < 1 || !(config.learning_rate > 0.0) ||
      config.weight_decay < 0.0) {
    throw Error(ErrorKind::kArgument, "invalid training configuration");
  }
  const auto n = train.records.size();
  std::size_t n_harm = 0;
  for (const auto& r : train.records) n_harm += r.label == Label::kHarmful ? 1 : 0;
  const std::size_t n_benign = n - n_harm;
  if (n_harm == 0 || n_benign == 0) {
    throw Error(ErrorKind::kDegenerateSplit, "training set needs both harmful and benign records (" +
                                                 std::to_string(n_harm) + " harmful, " +
                                                 std::to_string(n_benign) + " benign)");
  }

  const auto dim = static_cast<Eigen::Index>(train.dim);
  TrainingSet data;
  data.x.resize(static_cast<Eigen::Index>(n), dim);
  data.y.resize(static_cast<Eigen::Index>(n));
  data.weight.resize(static_cast<Eigen::Index>(n));
  const double w_harm = config.balancing == ClassBalancing::kReweight ? n / (2.0 * n_harm) : 1.0;
  const double w_benign = config.balancing == ClassBalancing::kReweight ? n / (2.0 * n_benign) : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = train.records[i];
    if (r.states.cols() != dim) throw RecordError(ErrorKind::kDimension, i, "state width differs from dataset dim");
    const auto row = static_cast<Eigen::Index>(i);
    data.x.row(row) = r.states.row(r.states.rows() - 1);
    const bool harmful = r.label == Label::kHarmful;
    data.y[row] = harmful ? 1.0 : 0.0;
    data.weight[row] = harmful ? w_harm : w_benign;
  }

  Rng rng(derive_seed(config.seed, {0x50524F4245ULL}));
  BottleneckProbe p;
  p.activation = config.activation;
  const double lim1 = 1.0 / std::sqrt(static_cast<double>(dim));
  const double lim2 = 1.0 / std::sqrt(static_cast<double>(config.width));
  p.w1.resize(config.width, dim);
  for (Eigen::Index k = 0; k < p.w1.rows(); ++k) {
    for (Eigen::Index d = 0; d < dim; ++d) p.w1(k, d) = uniform(rng, -lim1, lim1);
  }
  p.w2.resize(config.width);
  for (Eigen::Index k = 0; k < p.w2.size(); ++k) p.w2[k] = uniform(rng, -lim2, lim2);
  p.b1 = Vector::Zero(config.width);
  p.b2 = 0.0;

  auto& info = p.info;
  info.trained = true;
  info.seed = config.seed;
  info.learning_rate = config.learning_rate;
  info.epochs = config.epochs;
  info.batch_size = config.batch_size;
  info.weight_decay = config.weight_decay;
  info.balancing = config.balancing;
  info.n_train = n;
  info.epoch_losses.reserve(static_cast<std::size_t>(config.epochs));

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const double lr = config.learning_rate;
  const double decay = config.weight_decay;
  Matrix xb, pre, dpre;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      const auto b = static_cast<Eigen::Index>(stop - start);
      xb.resize(b, dim);
      Vector yb(b), wb(b);
      for (Eigen::Index i = 0; i < b; ++i) {
        const auto src = order[start + static_cast<std::size_t>(i)];
        xb.row(i) = data.x.row(src);
        yb[i] = data.y[src];
        wb[i] = data.weight[src];
      }
      pre = xb * p.w1.transpose();
      pre.rowwise() += p.b1.transpose();
      Matrix act = pre.unaryExpr([&](double v) { return apply_activation(p.activation, v); });
      Vector z = act * p.w2;
      z.array() += p.b2;
      Vector delta(b);
      for (Eigen::Index i = 0; i < b; ++i) delta[i] = wb[i] * (sigmoid(z[i]) - yb[i]) / static_cast<double>(b);

      const Vector grad_w2 = act.transpose() * delta + decay * p.w2;
      const double grad_b2 = delta.sum();
      dpre = delta * p.w2.transpose();
      for (Eigen::Index i = 0; i < b; ++i) {
        for (Eigen::Index k = 0; k < dpre.cols(); ++k) dpre(i, k) *= activation_slope(p.activation, pre(i, k));
      }
      const Matrix grad_w1 = dpre.transpose() * xb + decay * p.w1;
      const Vector grad_b1 = dpre.colwise().sum().transpose();

      p.w1 -= lr * grad_w1;
      p.b1 -= lr * grad_b1;
      p.w2 -= lr * grad_w2;
      p.b2 -= lr * grad_b2;
    }
    info.epoch_losses.push_back(objective(p, data, decay));
  }

  round_to_f32(p.w1);
  round_to_f32(p.b1);
  round_to_f32(p.w2);
  p.b2 = static_cast<double>(static_cast<float>(p.b2));
  p.validate();
  info.final_loss = objective(p, data, decay);
  info.final_accuracy = accuracy(p, data);
  return p;
}

std::vector<std::uint8_t> encode_probe(const BottleneckProbe& probe) {
  probe.validate();
  ByteWriter out;
  out.bytes(kProbeMagic);
  out.u32(static_cast<std::uint32_t>(probe.dim()));
  out.u32(static_cast<std::uint32_t>(probe.width()));
  out.u8(static_cast<std::uint8_t>(probe.activation));
  for (Eigen::Index k = 0; k < probe.width(); ++k) {
    for (Eigen::Index d = 0; d < probe.dim(); ++d) out.f32(static_cast<float>(probe.w1(k, d)));
  }
  for (Eigen::Index k = 0; k < probe.width(); ++k) out.f32(static_cast<float>(probe.b1[k]));
  for (Eigen::Index k = 0; k < probe.width(); ++k) out.f32(static_cast<float>(probe.w2[k]));
  out.f32(static_cast<float>(probe.b2));

  const auto& info = probe.info;
  nlohmann::json meta = {
      {"activation", to_string(probe.activation)},
      {"trained", info.trained},
  };
  if (info.trained) {
    meta["seed"] = info.seed;
    meta["learning_rate"] = info.learning_rate;
    meta["epochs"] = info.epochs;
    meta["batch_size"] = info.batch_size;
    meta["weight_decay"] = info.weight_decay;
    meta["class_balancing"] = to_string(info.balancing);
    meta["init"] = info.init;
    meta["n_train"] = info.n_train;
    meta["final_loss"] = info.final_loss;
    meta["final_accuracy"] = info.final_accuracy;
  }
  const auto text = meta.dump();
  out.u32(static_cast<std::uint32_t>(text.size()));
  out.bytes(text);
  return std::move(out).take();
}

BottleneckProbe decode_probe(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  if (bytes.size() < kProbeMagic.size() || in.bytes(kProbeMagic.size(), "magic") != kProbeMagic) {
    throw Error(ErrorKind::kFormat, "bad magic, not a PRB1 probe");
  }
  const auto dim = in.u32("dim");
  const auto width = in.u32("width");
  if (dim == 0 || width == 0) throw Error(ErrorKind::kFormat, "probe has zero dimension or width");
  const auto act = in.u8("activation tag");
  if (act > 1) throw Error(ErrorKind::kFormat, "unknown activation tag " + std::to_string(act));
  const std::size_t need = (static_cast<std::size_t>(width) * dim + 2 * width + 1) * 4;
  if (in.remaining() < need) throw CorruptionError(in.offset(), "truncated probe parameters");

  auto p = BottleneckProbe::zeros(width, dim, static_cast<Activation>(act));
  for (Eigen::Index k = 0; k < p.width(); ++k) {
    for (Eigen::Index d = 0; d < p.dim(); ++d) p.w1(k, d) = in.f32("W1");
  }
  for (Eigen::Index k = 0; k < p.width(); ++k) p.b1[k] = in.f32("b1");
  for (Eigen::Index k = 0; k < p.width(); ++k) p.w2[k] = in.f32("w2");
  p.b2 = in.f32("b2");

  const auto meta_len = in.u32("metadata length");
  const auto text = in.bytes(meta_len, "metadata");
  if (in.remaining() != 0) throw CorruptionError(in.offset(), "trailing bytes after probe metadata");
  const auto meta = nlohmann::json::parse(text, nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) throw Error(ErrorKind::kFormat, "probe metadata is not JSON");
  auto& info = p.info;
  info.trained = meta.value("trained", false);
  if (info.trained) {
    info.seed = meta.value("seed", std::uint64_t{0});
    info.learning_rate = meta.value("learning_rate", 0.0);
    info.epochs = meta.value("epochs", 0);
    info.batch_size = meta.value("batch_size", 0);
    info.weight_decay = meta.value("weight_decay", 0.0);
    info.balancing = parse_balancing(meta.value("class_balancing", std::string("reweight")))
                         .value_or(ClassBalancing::kReweight);
    info.init = meta.value("init", info.init);
    info.n_train = meta.value("n_train", std::size_t{0});
    info.final_loss = meta.value("final_loss", 0.0);
    info.final_accuracy = meta.value("final_accuracy", 0.0);
  }
  p.validate();
  return p;
}

void save_probe(const BottleneckProbe& probe, const std::filesystem::path& destination) {
  write_file_bytes(destination, encode_probe(probe));
}

BottleneckProbe load_probe(const std::filesystem::path& source) { return decode_probe(read_file_bytes(source)); }

}  // namespace probetraj
