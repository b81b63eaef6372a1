// Feed-forward distinguisher, logistic baseline, training, and evaluation
// metrics including the empirical distinguishing advantage.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsc/cipher.hpp"

namespace nsc {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major feature matrix with one 0/1 label per row.
struct LabeledDataset {
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
  void add(std::span<const double> x, int label);
  std::size_t count(int label) const;
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> biases;
  bool operator==(const DenseLayer&) const = default;
};

// Per-column affine map applied before the first layer. Columns outside
// [first, first + mean.size()) pass through unchanged.
struct Standardizer {
  std::size_t first = 0;
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const LabeledDataset& data, std::size_t first);
  void apply(std::span<double> x) const;
  LabeledDataset apply(const LabeledDataset& data) const;
  bool empty() const noexcept { return mean.empty(); }
  bool operator==(const Standardizer&) const = default;
};

// Hidden layers use the rectifier; the output layer is a single sigmoid unit.
struct MlpParameters {
  std::vector<std::size_t> layer_sizes;
  std::vector<DenseLayer> layers;
  std::uint64_t init_seed = 0;
  Standardizer standardizer;

  std::size_t input_dim() const { return layer_sizes.front(); }
  bool operator==(const MlpParameters&) const = default;
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
  double l2 = 1e-4;
  // Stop after this many epochs without a validation-loss improvement; 0 disables.
  std::size_t patience = 40;
  // Columns from this index on are z-scored with training-set statistics,
  // which are stored in the returned parameters.
  std::optional<std::size_t> standardize_from;
};

inline const std::vector<std::size_t> kDefaultHiddenLayers{64, 32};

MlpParameters init_parameters(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed);

double forward(const MlpParameters& params, std::span<const double> x);
inline int decide(double probability) { return probability >= 0.5 ? 1 : 0; }
std::vector<double> predict(const MlpParameters& params, const LabeledDataset& data);

inline constexpr double kProbabilityClamp = 1e-12;
double loss_bce(std::span<const double> probabilities, std::span<const int> labels);

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  double norm() const;
};

// Gradient of mean BCE over the batch rows plus l2 * sum(w^2) over weights.
Gradients gradients(const MlpParameters& params, const LabeledDataset& data,
                    std::span<const std::size_t> batch, double l2);
// Objective matching `gradients`, used by finite-difference checks.
double objective(const MlpParameters& params, const LabeledDataset& data,
                 std::span<const std::size_t> batch, double l2);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainResult {
  MlpParameters params;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

// Mini-batch gradient descent with seeded shuffling; returns the parameters
// of the epoch with the lowest validation loss.
TrainResult train(const LabeledDataset& train_set, const LabeledDataset& validation_set,
                  const TrainConfig& cfg, const std::vector<std::size_t>& hidden = kDefaultHiddenLayers);
TrainResult logistic_baseline(const LabeledDataset& train_set, const LabeledDataset& validation_set,
                              const TrainConfig& cfg);

struct ConfusionCounts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// Undefined ratios (zero denominators) are empty optionals.
struct Metrics {
  ConfusionCounts counts;
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> labels);
Metrics metrics_from_counts(const ConfusionCounts& c);
Metrics evaluate(const MlpParameters& params, const LabeledDataset& data);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels);

struct AdvantageEstimate {
  double adv = 0.0;
  double epsilon = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_cipher = 0.0;  // Pr[M = 1 | cipher]
  double p_random = 0.0;  // Pr[M = 1 | random]
};

// From hard decisions on each source.
AdvantageEstimate advantage(std::span<const int> cipher_decisions, std::span<const int> random_decisions);
AdvantageEstimate advantage(const MlpParameters& params, const LabeledDataset& cipher_set,
                            const LabeledDataset& random_set);

// Text checkpoint: "NSCMLP v1", layer sizes, per-layer weights and biases,
// then the standardizer. Values are written with 17 significant digits.
void save_checkpoint(const MlpParameters& params, std::ostream& os);
MlpParameters load_checkpoint(std::istream& is);
void save_checkpoint(const MlpParameters& params, const std::string& path);
MlpParameters load_checkpoint(const std::string& path);

}  // namespace nsc
