#include "nsc/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace nsc {
namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

void check_dim(const MlpParameters& params, std::size_t dim) {
  if (params.layer_sizes.empty() || dim != params.input_dim()) {
    throw InputError("feature dimension " + std::to_string(dim) + " does not match model input " +
                     std::to_string(params.layer_sizes.empty() ? 0 : params.input_dim()));
  }
}

// Activations of every layer for one input; acts[0] is the input itself.
void forward_all(const MlpParameters& params, std::span<const double> x,
                 std::vector<std::vector<double>>& acts) {
  acts.resize(params.layers.size() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    const auto& in = acts[l];
    auto& out = acts[l + 1];
    out.resize(layer.out);
    const bool last = l + 1 == params.layers.size();
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* w = layer.weights.data() + o * layer.in;
      double z = layer.biases[o];
      for (std::size_t i = 0; i < layer.in; ++i) z += w[i] * in[i];
      out[o] = last ? sigmoid(z) : std::max(0.0, z);
    }
  }
}

double mean_loss(const MlpParameters& params, const LabeledDataset& data, double* accuracy) {
  const auto probs = predict(params, data);
  if (accuracy != nullptr) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) correct += decide(probs[i]) == data.labels[i];
    *accuracy = static_cast<double>(correct) / static_cast<double>(probs.size());
  }
  return loss_bce(probs, data.labels);
}

void write_values(std::ostream& os, const char* tag, const std::vector<double>& v) {
  os << tag;
  for (double x : v) os << ' ' << x;
  os << '\n';
}

std::vector<double> read_values(std::istream& is, const std::string& tag, std::size_t count) {
  std::string line;
  if (!std::getline(is, line)) throw InputError("checkpoint truncated before '" + tag + "'");
  std::istringstream ls(line);
  std::string got;
  ls >> got;
  if (got != tag) throw InputError("checkpoint expected '" + tag + "', found '" + got + "'");
  std::vector<double> v(count);
  for (auto& x : v) {
    if (!(ls >> x)) throw InputError("checkpoint '" + tag + "' line has too few values");
  }
  double extra;
  if (ls >> extra) throw InputError("checkpoint '" + tag + "' line has too many values");
  return v;
}

}  // namespace

void LabeledDataset::add(std::span<const double> x, int label) {
  if (dim == 0 && labels.empty()) dim = x.size();
  if (x.size() != dim) throw InputError("row dimension mismatch");
  if (label != 0 && label != 1) throw InputError("labels must be 0 or 1");
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label);
}

std::size_t LabeledDataset::count(int label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

Standardizer Standardizer::fit(const LabeledDataset& data, std::size_t first) {
  if (data.size() == 0) throw InputError("cannot fit a standardizer on an empty dataset");
  Standardizer s;
  s.first = std::min(first, data.dim);
  const std::size_t cols = data.dim - s.first;
  s.mean.assign(cols, 0.0);
  s.scale.assign(cols, 1.0);
  const double n = static_cast<double>(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto x = data.row(r);
    for (std::size_t c = 0; c < cols; ++c) s.mean[c] += x[s.first + c];
  }
  for (auto& m : s.mean) m /= n;
  std::vector<double> var(cols, 0.0);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto x = data.row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = x[s.first + c] - s.mean[c];
      var[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < cols; ++c) {
    const double sd = std::sqrt(var[c] / n);
    s.scale[c] = sd > 0 ? 1.0 / sd : 1.0;
  }
  return s;
}

void Standardizer::apply(std::span<double> x) const {
  for (std::size_t c = 0; c < mean.size(); ++c) {
    x[first + c] = (x[first + c] - mean[c]) * scale[c];
  }
}

LabeledDataset Standardizer::apply(const LabeledDataset& data) const {
  LabeledDataset out = data;
  for (std::size_t r = 0; r < out.size(); ++r) {
    apply(std::span<double>(out.features.data() + r * out.dim, out.dim));
  }
  return out;
}

MlpParameters init_parameters(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ConfigError("layer list needs at least input and output sizes");
  if (layer_sizes.back() != 1) throw ConfigError("output layer must have exactly one unit");
  for (auto s : layer_sizes) {
    if (s == 0) throw ConfigError("layer sizes must be positive");
  }
  MlpParameters p;
  p.layer_sizes = layer_sizes;
  p.init_seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    DenseLayer layer;
    layer.in = layer_sizes[l];
    layer.out = layer_sizes[l + 1];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(layer.in)));
    layer.weights.resize(layer.in * layer.out);
    for (auto& w : layer.weights) w = dist(rng);
    layer.biases.assign(layer.out, 0.0);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

double forward(const MlpParameters& params, std::span<const double> x) {
  check_dim(params, x.size());
  std::vector<std::vector<double>> acts;
  if (params.standardizer.empty()) {
    forward_all(params, x, acts);
  } else {
    std::vector<double> z(x.begin(), x.end());
    params.standardizer.apply(z);
    forward_all(params, z, acts);
  }
  return acts.back()[0];
}

std::vector<double> predict(const MlpParameters& params, const LabeledDataset& data) {
  check_dim(params, data.dim);
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = forward(params, data.row(i));
  return out;
}

double loss_bce(std::span<const double> probabilities, std::span<const int> labels) {
  if (probabilities.size() != labels.size()) throw InputError("probabilities and labels differ in length");
  if (probabilities.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = clamp_probability(probabilities[i]);
    total -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(labels.size());
}

double Gradients::norm() const {
  double s = 0.0;
  for (const auto& g : weights) for (double v : g) s += v * v;
  for (const auto& g : biases) for (double v : g) s += v * v;
  return std::sqrt(s);
}

Gradients gradients(const MlpParameters& params, const LabeledDataset& data,
                    std::span<const std::size_t> batch, double l2) {
  if (batch.empty()) throw InputError("gradient batch is empty");
  check_dim(params, data.dim);
  const std::size_t L = params.layers.size();
  Gradients g;
  g.weights.resize(L);
  g.biases.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    g.weights[l].assign(params.layers[l].weights.size(), 0.0);
    g.biases[l].assign(params.layers[l].out, 0.0);
  }
  std::vector<std::vector<double>> acts;
  std::vector<double> delta, prev;
  std::vector<double> x;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto idx : batch) {
    const auto row = data.row(idx);
    if (params.standardizer.empty()) {
      forward_all(params, row, acts);
    } else {
      x.assign(row.begin(), row.end());
      params.standardizer.apply(x);
      forward_all(params, x, acts);
    }
    delta.assign(1, (acts.back()[0] - data.labels[idx]) * inv);
    for (std::size_t l = L; l-- > 0;) {
      const auto& layer = params.layers[l];
      const auto& in = acts[l];
      auto& gw = g.weights[l];
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        g.biases[l][o] += d;
        double* row_g = gw.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) row_g[i] += d * in[i];
      }
      if (l == 0) break;
      prev.assign(layer.in, 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* w = layer.weights.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) prev[i] += d * w[i];
      }
      // Rectifier derivative, taken as 0 at the kink.
      for (std::size_t i = 0; i < layer.in; ++i) {
        if (in[i] <= 0.0) prev[i] = 0.0;
      }
      delta.swap(prev);
    }
  }
  if (l2 > 0) {
    for (std::size_t l = 0; l < L; ++l) {
      const auto& w = params.layers[l].weights;
      for (std::size_t i = 0; i < w.size(); ++i) g.weights[l][i] += 2.0 * l2 * w[i];
    }
  }
  return g;
}

double objective(const MlpParameters& params, const LabeledDataset& data,
                 std::span<const std::size_t> batch, double l2) {
  std::vector<double> probs;
  std::vector<int> labels;
  for (auto idx : batch) {
    probs.push_back(forward(params, data.row(idx)));
    labels.push_back(data.labels[idx]);
  }
  double penalty = 0.0;
  for (const auto& layer : params.layers) {
    for (double w : layer.weights) penalty += w * w;
  }
  return loss_bce(probs, labels) + l2 * penalty;
}

TrainResult train(const LabeledDataset& train_set, const LabeledDataset& validation_set,
                  const TrainConfig& cfg, const std::vector<std::size_t>& hidden) {
  if (cfg.learning_rate <= 0 || cfg.epochs == 0 || cfg.batch_size == 0 || cfg.l2 < 0) {
    throw ConfigError("invalid training configuration");
  }
  if (train_set.count(0) < 2 || train_set.count(1) < 2) {
    throw TrainingError("training needs at least 2 samples of each class");
  }
  if (validation_set.size() == 0) throw TrainingError("validation set is empty");
  if (validation_set.dim != train_set.dim) throw InputError("train/validation dimension mismatch");

  std::vector<std::size_t> sizes{train_set.dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);

  Standardizer standardizer;
  LabeledDataset scaled_train, scaled_validation;
  if (cfg.standardize_from) {
    standardizer = Standardizer::fit(train_set, *cfg.standardize_from);
    scaled_train = standardizer.apply(train_set);
    scaled_validation = standardizer.apply(validation_set);
  }
  const LabeledDataset& tr = cfg.standardize_from ? scaled_train : train_set;
  const LabeledDataset& va = cfg.standardize_from ? scaled_validation : validation_set;

  TrainResult result;
  MlpParameters params = init_parameters(sizes, cfg.seed);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_loss = std::numeric_limits<double>::infinity();
  result.params = params;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const auto g = gradients(params, tr, std::span(order).subspan(start, end - start), cfg.l2);
      for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& layer = params.layers[l];
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
          layer.weights[i] -= cfg.learning_rate * g.weights[l][i];
        }
        for (std::size_t o = 0; o < layer.out; ++o) layer.biases[o] -= cfg.learning_rate * g.biases[l][o];
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = mean_loss(params, tr, &rec.train_accuracy);
    rec.validation_loss = mean_loss(params, va, &rec.validation_accuracy);
    for (const auto& layer : params.layers) {
      for (double w : layer.weights) {
        if (!std::isfinite(w)) throw TrainingError("training diverged (non-finite weight)");
      }
    }
    result.history.push_back(rec);
    if (rec.validation_loss < best_loss) {
      best_loss = rec.validation_loss;
      result.params = params;
      result.best_epoch = epoch;
    } else if (cfg.patience > 0 && epoch - result.best_epoch >= cfg.patience) {
      break;
    }
  }
  result.params.standardizer = std::move(standardizer);
  return result;
}

TrainResult logistic_baseline(const LabeledDataset& train_set, const LabeledDataset& validation_set,
                              const TrainConfig& cfg) {
  return train(train_set, validation_set, cfg, {});
}

ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw InputError("predictions and labels differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      predicted[i] == 1 ? ++c.tp : ++c.fn;
    } else {
      predicted[i] == 1 ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

Metrics metrics_from_counts(const ConfusionCounts& c) {
  if (c.total() == 0) throw InputError("no evaluated samples");
  Metrics m;
  m.counts = c;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

Metrics evaluate(const MlpParameters& params, const LabeledDataset& data) {
  if (data.size() == 0) throw InputError("evaluation set is empty");
  const auto probs = predict(params, data);
  std::vector<int> decisions(probs.size());
  std::transform(probs.begin(), probs.end(), decisions.begin(), decide);
  return metrics_from_counts(confusion(decisions, data.labels));
}

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("scores and labels differ in length");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw InputError("ROC needs both classes present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) {
      labels[order[i]] == 1 ? ++tp : ++fp;
    }
    roc.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                          static_cast<double>(tp) / static_cast<double>(positives), t});
  }
  for (std::size_t k = 1; k < roc.points.size(); ++k) {
    const auto& a = roc.points[k - 1];
    const auto& b = roc.points[k];
    roc.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  roc.auc = std::clamp(roc.auc, 0.0, 1.0);
  return roc;
}

AdvantageEstimate advantage(std::span<const int> cipher_decisions, std::span<const int> random_decisions) {
  if (cipher_decisions.empty() || random_decisions.empty()) {
    throw InputError("advantage needs non-empty cipher and random sets");
  }
  const auto n1 = static_cast<double>(cipher_decisions.size());
  const auto n0 = static_cast<double>(random_decisions.size());
  const auto hits1 = static_cast<double>(std::count(cipher_decisions.begin(), cipher_decisions.end(), 1));
  const auto hits0 = static_cast<double>(std::count(random_decisions.begin(), random_decisions.end(), 1));
  AdvantageEstimate a;
  a.p_cipher = hits1 / n1;
  a.p_random = hits0 / n0;
  a.adv = std::abs(a.p_cipher - a.p_random);
  a.epsilon = (hits1 + (n0 - hits0)) / (n1 + n0) - 0.5;
  constexpr double kZ95 = 1.959963984540054;
  const double se = std::sqrt(a.p_cipher * (1 - a.p_cipher) / n1 + a.p_random * (1 - a.p_random) / n0);
  a.ci_low = std::clamp(a.adv - kZ95 * se, 0.0, 1.0);
  a.ci_high = std::clamp(a.adv + kZ95 * se, 0.0, 1.0);
  return a;
}

AdvantageEstimate advantage(const MlpParameters& params, const LabeledDataset& cipher_set,
                            const LabeledDataset& random_set) {
  auto decisions = [&](const LabeledDataset& d) {
    const auto probs = predict(params, d);
    std::vector<int> out(probs.size());
    std::transform(probs.begin(), probs.end(), out.begin(), decide);
    return out;
  };
  return advantage(decisions(cipher_set), decisions(random_set));
}

void save_checkpoint(const MlpParameters& params, std::ostream& os) {
  os << "NSCMLP v1\n";
  os << "layers";
  for (auto s : params.layer_sizes) os << ' ' << s;
  os << "\ninit_seed " << params.init_seed << '\n';
  os << std::setprecision(17);
  for (const auto& layer : params.layers) {
    write_values(os, "weights", layer.weights);
    write_values(os, "biases", layer.biases);
  }
  os << "standardizer " << params.standardizer.first << ' ' << params.standardizer.mean.size() << '\n';
  write_values(os, "mean", params.standardizer.mean);
  write_values(os, "scale", params.standardizer.scale);
}

MlpParameters load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "NSCMLP v1") throw InputError("not an NSCMLP v1 checkpoint");
  std::getline(is, line);
  std::istringstream ls(line);
  std::string tag;
  ls >> tag;
  if (tag != "layers") throw InputError("checkpoint missing layer sizes");
  std::vector<std::size_t> sizes;
  for (std::size_t s; ls >> s;) sizes.push_back(s);
  std::getline(is, line);
  std::istringstream ss(line);
  std::uint64_t seed = 0;
  if (!(ss >> tag >> seed) || tag != "init_seed") throw InputError("checkpoint missing init_seed");

  MlpParameters p = init_parameters(sizes, seed);
  for (auto& layer : p.layers) {
    layer.weights = read_values(is, "weights", layer.in * layer.out);
    layer.biases = read_values(is, "biases", layer.out);
  }
  std::getline(is, line);
  std::istringstream st(line);
  std::size_t first = 0, count = 0;
  if (!(st >> tag >> first >> count) || tag != "standardizer") {
    throw InputError("checkpoint missing standardizer");
  }
  p.standardizer.first = first;
  p.standardizer.mean = read_values(is, "mean", count);
  p.standardizer.scale = read_values(is, "scale", count);
  if (count > 0 && first + count != p.input_dim()) throw InputError("standardizer does not cover the input tail");
  return p;
}

void save_checkpoint(const MlpParameters& params, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  save_checkpoint(params, os);
  if (!os) throw std::runtime_error("write failed: " + path);
}

MlpParameters load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return load_checkpoint(is);
}

}  // namespace nsc
