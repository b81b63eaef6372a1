#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "nsc/neural.hpp"

using namespace nsc;

namespace {

LabeledDataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  LabeledDataset d;
  d.dim = dim;
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = g(rng);
    d.add(x, static_cast<int>(i % 2));
  }
  return d;
}

// Two Gaussian blobs far apart along the first axis.
LabeledDataset separable(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::normal_distribution<double> g(0.0, 0.3);
  LabeledDataset d;
  d.dim = dim;
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    for (auto& v : x) v = g(rng);
    x[0] += label == 1 ? 3.0 : -3.0;
    d.add(x, label);
  }
  return d;
}

double* param_at(MlpParameters& p, std::size_t layer, bool weight, std::size_t idx) {
  return weight ? &p.layers[layer].weights[idx] : &p.layers[layer].biases[idx];
}

// Mann-Whitney statistic with ties counted as one half.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

}  // namespace

TEST(Init, DeterministicHeNormalZeroBias) {
  const auto a = init_parameters({280, 64, 32, 1}, 9);
  const auto b = init_parameters({280, 64, 32, 1}, 9);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, init_parameters({280, 64, 32, 1}, 10));
  for (const auto& layer : a.layers) {
    for (double v : layer.biases) EXPECT_EQ(v, 0.0);
  }
  const auto& w = a.layers[0].weights;
  double mean = 0, sq = 0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  for (double v : w) sq += (v - mean) * (v - mean);
  const double var = sq / static_cast<double>(w.size());
  EXPECT_NEAR(var, 2.0 / 280.0, 0.2 * 2.0 / 280.0);
  EXPECT_THROW(init_parameters({4}, 1), ConfigError);
  EXPECT_THROW(init_parameters({4, 2}, 1), ConfigError);
}

TEST(Forward, RangeAndZeroNetwork) {
  auto p = init_parameters({5, 4, 1}, 1);
  for (auto& l : p.layers) std::fill(l.weights.begin(), l.weights.end(), 0.0);
  const std::vector<double> zero(5, 0.0);
  EXPECT_DOUBLE_EQ(forward(p, zero), 0.5);

  const auto q = init_parameters({5, 4, 1}, 2);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 3.0);
  std::vector<double> x(5);
  for (int t = 0; t < 10000; ++t) {
    for (auto& v : x) v = g(rng);
    const double y = forward(q, x);
    ASSERT_GT(y, 0.0);
    ASSERT_LT(y, 1.0);
  }
  EXPECT_EQ(decide(0.5), 1);
  EXPECT_EQ(decide(0.4999999), 0);
  EXPECT_THROW(forward(q, std::vector<double>(3)), InputError);
}

TEST(Loss, DocumentedValues) {
  const std::vector<int> y{1, 0, 1, 0};
  EXPECT_NEAR(loss_bce(std::vector<double>{1.0, 0.0, 1.0, 0.0}, y), 0.0, 1e-11);
  EXPECT_NEAR(loss_bce(std::vector<double>(4, 0.5), y), std::log(2.0), 1e-15);
  EXPECT_TRUE(std::isfinite(loss_bce(std::vector<double>{0.0, 1.0, 0.0, 1.0}, y)));
  EXPECT_GE(loss_bce(std::vector<double>{0.3, 0.9, 0.2, 0.6}, y), 0.0);
}

TEST(Gradients, MatchCentralDifferences) {
  std::mt19937_64 rng(123);
  const auto data = random_dataset(rng, 24, 6);
  std::vector<std::size_t> batch(data.size());
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  const double l2 = 1e-3;
  const double h = 1e-5;
  double worst = 0.0;
  for (int probe = 0; probe < 12; ++probe) {
    auto p = init_parameters({6, 4, 1}, 100 + static_cast<std::uint64_t>(probe));
    for (auto& l : p.layers) {
      for (auto& b : l.biases) b = std::normal_distribution<double>(0.0, 0.1)(rng);
    }
    const auto g = gradients(p, data, batch, l2);
    for (std::size_t layer = 0; layer < p.layers.size(); ++layer) {
      for (int kind = 0; kind < 2; ++kind) {
        const bool weight = kind == 0;
        const std::size_t count = weight ? p.layers[layer].weights.size() : p.layers[layer].biases.size();
        for (std::size_t i = 0; i < count; ++i) {
          double* v = param_at(p, layer, weight, i);
          const double keep = *v;
          *v = keep + h;
          const double up = objective(p, data, batch, l2);
          *v = keep - h;
          const double down = objective(p, data, batch, l2);
          *v = keep;
          const double numeric = (up - down) / (2 * h);
          const double analytic = weight ? g.weights[layer][i] : g.biases[layer][i];
          const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
          worst = std::max(worst, std::abs(numeric - analytic) / denom);
        }
      }
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Gradients, L2TermAndStationaryPoint) {
  auto p = init_parameters({3, 1}, 5);
  LabeledDataset d;
  d.dim = 3;
  // With all-zero weights the output is 0.5 everywhere; balanced labels make
  // the data term vanish after averaging over symmetric inputs.
  std::fill(p.layers[0].weights.begin(), p.layers[0].weights.end(), 0.0);
  d.add(std::vector<double>{1, 2, 3}, 1);
  d.add(std::vector<double>{1, 2, 3}, 0);
  const std::vector<std::size_t> batch{0, 1};
  EXPECT_NEAR(gradients(p, d, batch, 0.0).norm(), 0.0, 1e-12);

  p.layers[0].weights = {0.5, -1.0, 2.0};
  const auto with = gradients(p, d, batch, 0.1);
  const auto without = gradients(p, d, batch, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(with.weights[0][i] - without.weights[0][i], 2 * 0.1 * p.layers[0].weights[i], 1e-12);
  }
  EXPECT_DOUBLE_EQ(with.biases[0][0], without.biases[0][0]);
}

TEST(Train, SeparableDataReachesPerfectAccuracy) {
  std::mt19937_64 rng(2024);
  const auto tr = separable(rng, 200, 2);
  const auto va = separable(rng, 60, 2);
  const auto te = separable(rng, 60, 2);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.patience = 0;
  const auto mlp = train(tr, va, cfg);
  EXPECT_DOUBLE_EQ(evaluate(mlp.params, tr).accuracy, 1.0);
  EXPECT_DOUBLE_EQ(evaluate(mlp.params, te).accuracy, 1.0);
  const auto lin = logistic_baseline(tr, va, cfg);
  EXPECT_EQ(lin.params.layer_sizes, (std::vector<std::size_t>{2, 1}));
  EXPECT_DOUBLE_EQ(evaluate(lin.params, te).accuracy, 1.0);
}

TEST(Train, DeterministicForFixedSeed) {
  std::mt19937_64 rng(3);
  const auto tr = random_dataset(rng, 120, 8);
  const auto va = random_dataset(rng, 40, 8);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.seed = 77;
  cfg.standardize_from = 2;
  const auto a = train(tr, va, cfg, {6});
  const auto b = train(tr, va, cfg, {6});
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].validation_loss, b.history[i].validation_loss);
  }
  // best_epoch is 1-based and points at the lowest validation loss.
  double best = a.history.front().validation_loss;
  for (const auto& r : a.history) best = std::min(best, r.validation_loss);
  EXPECT_EQ(a.history[a.best_epoch - 1].validation_loss, best);
  EXPECT_EQ(a.params.standardizer.first, 2u);
}

TEST(Train, RejectsSingleClass) {
  LabeledDataset d;
  d.dim = 1;
  for (int i = 0; i < 10; ++i) d.add(std::vector<double>{double(i)}, 1);
  EXPECT_THROW(train(d, d, TrainConfig{}), TrainingError);
}

TEST(Metrics, PublishedConfusionTable) {
  const auto m = metrics_from_counts({87, 85, 15, 13});
  EXPECT_DOUBLE_EQ(m.accuracy, 0.86);
  EXPECT_NEAR(*m.precision, 87.0 / 102.0, 1e-15);
  EXPECT_NEAR(*m.recall, 87.0 / 100.0, 1e-15);
  EXPECT_NEAR(*m.f1, 2 * 87.0 / (2 * 87.0 + 15 + 13), 1e-15);
  EXPECT_NEAR(m.accuracy * 200, 172.0, 1e-12);
}

TEST(Metrics, PerfectAndUndefined) {
  const auto perfect = metrics_from_counts({10, 10, 0, 0});
  EXPECT_DOUBLE_EQ(perfect.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(*perfect.f1, 1.0);
  const auto never = metrics_from_counts({0, 10, 0, 10});
  EXPECT_FALSE(never.precision.has_value());
  EXPECT_DOUBLE_EQ(*never.recall, 0.0);
  EXPECT_FALSE(never.f1.has_value());
  const std::vector<int> pred{1, 0, 1, 1}, lab{1, 0, 0, 1};
  EXPECT_EQ(confusion(pred, lab), (ConfusionCounts{2, 1, 1, 0}));
}

TEST(Metrics, RandomTablesSatisfyIdentities) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 1000; ++t) {
    ConfusionCounts c{rng() % 50, rng() % 50, rng() % 50, rng() % 50};
    if (c.total() == 0) continue;
    const auto m = metrics_from_counts(c);
    EXPECT_NEAR(m.accuracy * static_cast<double>(c.total()), static_cast<double>(c.tp + c.tn), 1e-9);
    if (m.precision && m.recall && *m.precision + *m.recall > 0) {
      EXPECT_NEAR(*m.f1, 2 * *m.precision * *m.recall / (*m.precision + *m.recall), 1e-12);
    }
  }
}

TEST(Roc, DocumentedCases) {
  const std::vector<int> y{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y).auc, 1.0);
  const auto flat = roc_auc(std::vector<double>(4, 0.3), y);
  EXPECT_DOUBLE_EQ(flat.auc, 0.5);
  EXPECT_EQ(flat.points.size(), 2u);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), InputError);
}

TEST(Roc, PropertiesOnRandomScores) {
  std::mt19937_64 rng(55);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 4 + rng() % 60;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 20) / 20.0;  // deliberate ties
      y[i] = static_cast<int>(i % 2);
    }
    const auto roc = roc_auc(s, y);
    ASSERT_EQ(roc.points.front().fpr, 0.0);
    ASSERT_EQ(roc.points.front().tpr, 0.0);
    ASSERT_EQ(roc.points.back().fpr, 1.0);
    ASSERT_EQ(roc.points.back().tpr, 1.0);
    for (std::size_t k = 1; k < roc.points.size(); ++k) {
      ASSERT_GE(roc.points[k].fpr, roc.points[k - 1].fpr);
      ASSERT_GE(roc.points[k].tpr, roc.points[k - 1].tpr);
    }
    ASSERT_NEAR(roc.auc, pairwise_auc(s, y), 1e-12);
    std::vector<double> mapped(n);
    for (std::size_t i = 0; i < n; ++i) mapped[i] = std::exp(3 * s[i]) - 7;
    ASSERT_NEAR(roc_auc(mapped, y).auc, roc.auc, 1e-12);
  }
}

TEST(Advantage, DocumentedCases) {
  const std::vector<int> ones(10, 1), zeros(10, 0);
  EXPECT_DOUBLE_EQ(advantage(ones, ones).adv, 0.0);
  EXPECT_DOUBLE_EQ(advantage(ones, zeros).adv, 1.0);
  EXPECT_DOUBLE_EQ(advantage(ones, zeros).epsilon, 0.5);
  EXPECT_THROW(advantage(std::vector<int>{}, ones), InputError);
}

TEST(Advantage, BalancedIdentityOnRandomTables) {
  std::mt19937_64 rng(88);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = 1 + rng() % 300;
    std::vector<int> c(n), r(n);
    const double pc = static_cast<double>(rng() % 101) / 100.0;
    const double pr = static_cast<double>(rng() % 101) / 100.0;
    for (auto& v : c) v = std::bernoulli_distribution(pc)(rng);
    for (auto& v : r) v = std::bernoulli_distribution(pr)(rng);
    const auto a = advantage(c, r);
    const auto hits_c = static_cast<std::uint64_t>(std::count(c.begin(), c.end(), 1));
    const auto hits_r = static_cast<std::uint64_t>(std::count(r.begin(), r.end(), 1));
    const auto m = metrics_from_counts({hits_c, n - hits_r, hits_r, n - hits_c});
    ASSERT_NEAR(a.adv, std::abs(2 * m.accuracy - 1), 1e-12);
    ASSERT_NEAR(a.adv, 2 * std::abs(a.epsilon), 1e-12);
    ASSERT_LE(a.ci_low, a.adv);
    ASSERT_GE(a.ci_high, a.adv);
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  std::mt19937_64 rng(6);
  const auto tr = random_dataset(rng, 60, 5);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.standardize_from = 1;
  const auto p = train(tr, tr, cfg, {4}).params;
  std::stringstream ss;
  save_checkpoint(p, ss);
  const auto q = load_checkpoint(ss);
  EXPECT_EQ(p, q);
  std::istringstream bad("NSCMLP v2\n");
  EXPECT_THROW(load_checkpoint(bad), InputError);
}
