#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <span>
#include <string>
#include <vector>

#include "probetraj/dataset.hpp"
#include "probetraj/types.hpp"

namespace probetraj {

enum class Activation : std::uint8_t { kIdentity = 0, kRectifier = 1 };
enum class ClassBalancing : std::uint8_t { kReweight = 0, kNone = 1 };

std::string_view to_string(Activation a);
std::string_view to_string(ClassBalancing b);
std::optional<Activation> parse_activation(std::string_view text);
std::optional<ClassBalancing> parse_balancing(std::string_view text);

struct ProbeTrainingInfo {
  bool trained = false;
  std::uint64_t seed = 0;
  double learning_rate = 0.0;
  int epochs = 0;
  int batch_size = 0;
  double weight_decay = 0.0;
  ClassBalancing balancing = ClassBalancing::kReweight;
  std::string init = "uniform(-1/sqrt(D), 1/sqrt(D)) for W1, uniform(-1/sqrt(w), 1/sqrt(w)) for w2, zero biases";
  std::size_t n_train = 0;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  std::vector<double> epoch_losses;  // full-set objective after each epoch
};

// score(x) = sigmoid(w2 . act(W1 x + b1) + b2)
struct BottleneckProbe {
  Matrix w1;  // width x D
  Vector b1;
  Vector w2;
  double b2 = 0.0;
  Activation activation = Activation::kIdentity;
  ProbeTrainingInfo info;

  Eigen::Index width() const noexcept { return w1.rows(); }
  Eigen::Index dim() const noexcept { return w1.cols(); }

  static BottleneckProbe zeros(Eigen::Index width, Eigen::Index dim, Activation act = Activation::kIdentity);
  void validate() const;
};

struct TrainConfig {
  int width = 64;
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_size = 128;
  double weight_decay = 1e-4;
  std::uint64_t seed = 42;
  ClassBalancing balancing = ClassBalancing::kReweight;
  Activation activation = Activation::kIdentity;
};

// Trains on the final-token state of every record. Parameters are rounded to
// f32 on return so the serialized probe is exactly the in-memory one.
BottleneckProbe train_probe(const ActivationDataset& train, const TrainConfig& config);

double probe_logit(const BottleneckProbe& probe, const Eigen::Ref<const Vector>& state);
double probe_score(const BottleneckProbe& probe, const Eigen::Ref<const Vector>& state);
std::vector<double> score_positions(const BottleneckProbe& probe, const SequenceRecord& record);

struct ProbeGradient {
  Matrix w1;
  Vector b1;
  Vector w2;
  double b2 = 0.0;
};

// Binary cross-entropy of sigmoid(logit) against a label in [0, 1].
double sample_loss(const BottleneckProbe& probe, const Vector& state, double label);
ProbeGradient loss_gradient(const BottleneckProbe& probe, const Vector& state, double label);

// Max relative error between the analytic gradient and central differences.
double gradient_check(const BottleneckProbe& probe, const Vector& state, double label, double step = 1e-5);

std::vector<std::uint8_t> encode_probe(const BottleneckProbe& probe);
BottleneckProbe decode_probe(std::span<const std::uint8_t> bytes);
void save_probe(const BottleneckProbe& probe, const std::filesystem::path& destination);
BottleneckProbe load_probe(const std::filesystem::path& source);

}  // namespace probetraj
