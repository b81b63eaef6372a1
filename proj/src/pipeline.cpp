#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "nsc/experiments.hpp"

namespace nsc {
namespace fs = std::filesystem;

namespace {

void log_to(const RunArtifacts& art, const std::string& msg) {
  if (art.log) art.log(msg);
}

bool corpus_matches(const CorpusManifest& m, const ExperimentConfig& cfg) {
  if (m.task != to_string(cfg.task) || m.rng_mode != to_string(cfg.rng_mode)) return false;
  if (cfg.rng_mode == RngMode::seeded && m.global_seed != cfg.global_seed) return false;
  const auto sources = corpus_sources(cfg);
  if (m.entries.size() != sources.size() * cfg.sequences_per_class) return false;
  for (const auto& src : sources) {
    const auto n = std::count_if(m.entries.begin(), m.entries.end(), [&](const auto& e) {
      return src.matches(e) && e.n_bits == cfg.n_bits;
    });
    if (static_cast<std::size_t>(n) != cfg.sequences_per_class) return false;
  }
  return true;
}

struct Prepared {
  CorpusManifest manifest;
  FeatureMatrix features;
};

Prepared prepare(const ExperimentConfig& cfg, const RunArtifacts& art) {
  const fs::path corpus_dir = art.out_dir / "corpus";
  const fs::path manifest_path = corpus_dir / "manifest.json";
  const std::string task = to_string(cfg.task);
  Prepared p;
  bool fresh = true;
  if (art.reuse_corpus && fs::exists(manifest_path)) {
    try {
      auto m = load_manifest(manifest_path);
      verify_manifest(m, corpus_dir);
      if (corpus_matches(m, cfg)) {
        p.manifest = std::move(m);
        fresh = false;
        log_to(art, "corpus: reusing " + manifest_path.string());
      }
    } catch (const std::exception& ex) {
      log_to(art, std::string("corpus: existing manifest unusable (") + ex.what() + "), regenerating");
    }
  }
  if (fresh) {
    log_to(art, "corpus: generating " + std::to_string(corpus_sources(cfg).size() * cfg.sequences_per_class) +
                    " sequences of " + std::to_string(cfg.n_bits) + " bits");
    std::error_code ec;
    fs::remove_all(corpus_dir, ec);
    p.manifest = generate_corpus(cfg, corpus_dir);
  }

  const fs::path feat_dir = art.out_dir / "features";
  fs::create_directories(feat_dir);
  const fs::path nscf = feat_dir / (task + ".nscf");
  bool have = false;
  if (!fresh && art.reuse_features && fs::exists(nscf)) {
    try {
      p.features = read_features_nscf(nscf, p.manifest);
      have = p.features.schema_version == cfg.schema_version;
      if (have) log_to(art, "features: reusing " + nscf.string());
    } catch (const std::exception&) {
      have = false;
    }
  }
  if (!have) {
    log_to(art, "features: extracting schema " + cfg.schema_version);
    p.features = extract_corpus_features(p.manifest, corpus_dir, FeatureSchema::by_version(cfg.schema_version),
                                         cfg.threads);
    write_features_nscf(p.features, nscf);
    write_features_csv(p.features, feat_dir / (task + ".csv"));
  }
  return p;
}

struct ConditionOutcome {
  ReportRow neural;
  ReportRow logistic;
  RocCurve neural_roc;
  RocCurve logistic_roc;
  std::vector<std::string> test_ids;
};

ReportRow score_model(const MlpParameters& params, const ConditionData& data, const Condition& c,
                      const std::string& model, RocCurve* roc_out) {
  const auto probs = predict(params, data.test);
  std::vector<int> decisions(probs.size());
  std::transform(probs.begin(), probs.end(), decisions.begin(), decide);
  const auto metrics = metrics_from_counts(confusion(decisions, data.test.labels));
  const auto roc = roc_auc(probs, data.test.labels);
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    (data.test.labels[i] == 1 ? pos : neg).push_back(decisions[i]);
  }
  const auto adv = advantage(pos, neg);

  ReportRow row;
  row.condition = c.name;
  row.rounds = c.positive.generator == Generator::urandom ? 0 : c.positive.rounds;
  row.model = model;
  row.accuracy = metrics.accuracy;
  row.precision = metrics.precision;
  row.recall = metrics.recall;
  row.f1 = metrics.f1;
  row.auc = roc.auc;
  row.advantage = adv.adv;
  row.ci_low = adv.ci_low;
  row.ci_high = adv.ci_high;
  row.n_test = data.test.size();
  row.counts = metrics.counts;
  if (roc_out != nullptr) *roc_out = roc;
  return row;
}

ConditionOutcome run_condition(const Prepared& p, const ExperimentConfig& cfg, const Condition& c,
                               const RunArtifacts& art) {
  const auto data = build_condition_data(p.features, p.manifest, c, *cfg.split_seed);
  const fs::path model_dir = art.out_dir / "models";
  fs::create_directories(model_dir);
  const std::string stem = to_string(cfg.task) + "_" + c.name;
  const std::string split_json = split_to_json(data.split, c.positive, c.negative);
  for (const char* kind : {"_mlp", "_logistic"}) {
    std::ofstream os(model_dir / (stem + kind + ".split.json"));
    os << split_json;
  }

  TrainConfig tc = cfg.train;
  tc.standardize_from = FeatureSchema::by_version(cfg.schema_version).offset("ngram_statistics");

  ConditionOutcome out;
  log_to(art, "train: " + c.name + " (mlp)");
  const auto mlp = train(data.train, data.validation, tc);
  save_checkpoint(mlp.params, (model_dir / (stem + "_mlp.nscmlp")).string());
  out.neural = score_model(mlp.params, data, c, "mlp", &out.neural_roc);

  log_to(art, "train: " + c.name + " (logistic)");
  const auto logit = logistic_baseline(data.train, data.validation, tc);
  save_checkpoint(logit.params, (model_dir / (stem + "_logistic.nscmlp")).string());
  out.logistic = score_model(logit.params, data, c, "logistic", &out.logistic_roc);

  out.test_ids = data.test_ids;
  log_to(art, "eval: " + c.name + " mlp accuracy " + std::to_string(out.neural.accuracy) + ", logistic " +
                  std::to_string(out.logistic.accuracy));
  return out;
}

ReportRow random_guess_row() {
  ReportRow r;
  r.condition = "random_guessing";
  r.model = "reference";
  r.accuracy = 0.5;
  r.precision = 0.5;
  r.recall = 0.5;
  r.f1 = 0.5;
  r.auc = 0.5;
  r.advantage = 0.0;
  r.reference = true;
  return r;
}

TaskReport run_task(const ExperimentConfig& cfg_in, const RunArtifacts& art, Task task) {
  ExperimentConfig cfg = cfg_in;
  cfg.task = task;
  cfg.validate();
  cfg.resolve_seeds();
  fs::create_directories(art.out_dir);
  const auto prepared = prepare(cfg, art);

  TaskReport report;
  report.task = task;
  report.config_echo = config_echo(cfg);
  std::vector<std::string> all_test_ids;
  for (const auto& c : task_conditions(cfg)) {
    const auto outcome = run_condition(prepared, cfg, c, art);
    report.rows.push_back(outcome.neural);
    report.rows.push_back(outcome.logistic);
    report.curves.push_back({c.name + ":mlp", outcome.neural_roc});
    report.curves.push_back({c.name + ":logistic", outcome.logistic_roc});
    report.test_ids[c.name] = outcome.test_ids;
    all_test_ids.insert(all_test_ids.end(), outcome.test_ids.begin(), outcome.test_ids.end());
  }
  if (task == Task::distinguish) report.rows.push_back(random_guess_row());
  report.ngrams = ngram_summary(prepared.features, prepared.manifest, corpus_sources(cfg), all_test_ids);

  report.notes.push_back("All metrics are computed on the test split only; test ids are listed in " +
                         to_string(task) + "_test_ids.txt.");
  report.notes.push_back("Undefined precision/recall/F1 (zero denominators) are written as 'undefined' and "
                         "excluded from aggregates.");
  if (task == Task::variants) {
    report.notes.push_back("All variant tasks share feature schema " + cfg.schema_version +
                           "; the first-named source in each condition is class 1.");
  }
  emit_reports(report, art.out_dir / "reports");
  return report;
}

}  // namespace

std::string condition_name(const SourceSpec& pos, const SourceSpec& neg) {
  auto part = [](const SourceSpec& s) {
    return s.generator == Generator::urandom ? std::string("urandom")
                                             : to_string(s.generator) + "_r" + std::to_string(s.rounds);
  };
  return part(pos) + "_vs_" + part(neg);
}

std::vector<Condition> task_conditions(const ExperimentConfig& cfg) {
  const SourceSpec uniform{Generator::urandom, 0};
  std::vector<Condition> out;
  auto add = [&](SourceSpec pos, SourceSpec neg) { out.push_back({condition_name(pos, neg), pos, neg}); };
  switch (cfg.task) {
    case Task::distinguish:
      add({Generator::echacha20, cfg.rounds_list.front()}, uniform);
      break;
    case Task::rounds_sweep:
      for (int r : cfg.rounds_list) add({Generator::echacha20, r}, uniform);
      break;
    case Task::variants: {
      const int r = cfg.rounds_list.front();
      add({Generator::chacha20, r}, uniform);
      add({Generator::echacha20, r}, uniform);
      add({Generator::chacha20, r}, {Generator::echacha20, r});
      break;
    }
  }
  return out;
}

ConditionData build_condition_data(const FeatureMatrix& f, const CorpusManifest& m, const Condition& c,
                                   std::uint64_t split_seed) {
  if (f.rows() != m.entries.size()) throw InputError("feature rows do not match manifest entries");
  if (c.positive == c.negative) throw ConfigError("condition compares a source with itself");
  std::vector<std::pair<std::string, int>> labeled;
  std::vector<std::pair<std::size_t, int>> rows;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    if (f.ids[i] != e.id) throw InputError("feature row order does not match the manifest");
    int label = -1;
    if (c.positive.matches(e)) label = 1;
    if (c.negative.matches(e)) label = 0;
    if (label < 0) continue;
    labeled.emplace_back(e.id, label);
    rows.emplace_back(i, label);
  }
  ConditionData out;
  out.split = split_dataset(labeled, split_seed);
  out.train.dim = out.validation.dim = out.test.dim = f.dim;
  for (const auto& [i, label] : rows) {
    switch (out.split.of(f.ids[i])) {
      case Split::train: out.train.add(f.row(i), label); break;
      case Split::validation: out.validation.add(f.row(i), label); break;
      case Split::test:
        out.test.add(f.row(i), label);
        out.test_ids.push_back(f.ids[i]);
        break;
    }
  }
  return out;
}

std::vector<NgramSummaryRow> ngram_summary(const FeatureMatrix& f, const CorpusManifest& m,
                                           const std::vector<SourceSpec>& sources,
                                           const std::vector<std::string>& ids) {
  const std::set<std::string> wanted(ids.begin(), ids.end());
  const std::size_t base = FeatureSchema::by_version(f.schema_version).offset("ngram_statistics");
  std::vector<NgramSummaryRow> out;
  for (const auto& src : sources) {
    for (std::size_t k = 0; k < kNgramLengths.size(); ++k) {
      NgramSummaryRow row;
      row.source = src.label();
      row.m = kNgramLengths[k];
      for (std::size_t i = 0; i < m.entries.size(); ++i) {
        if (!src.matches(m.entries[i]) || !wanted.count(m.entries[i].id)) continue;
        const auto x = f.row(i);
        row.chi_square_z += x[base + 4 * k];
        row.entropy_ratio += x[base + 4 * k + 1];
        row.distinct_ratio += x[base + 4 * k + 2];
        ++row.sequences;
      }
      if (row.sequences > 0) {
        const double n = static_cast<double>(row.sequences);
        row.chi_square_z /= n;
        row.entropy_ratio /= n;
        row.distinct_ratio /= n;
      }
      out.push_back(row);
    }
  }
  return out;
}

TaskReport run_distinguish(const ExperimentConfig& cfg, const RunArtifacts& art) {
  return run_task(cfg, art, Task::distinguish);
}

TaskReport run_rounds_sweep(const ExperimentConfig& cfg, const RunArtifacts& art) {
  return run_task(cfg, art, Task::rounds_sweep);
}

TaskReport run_variants(const ExperimentConfig& cfg, const RunArtifacts& art) {
  return run_task(cfg, art, Task::variants);
}

TaskReport run_experiment(const ExperimentConfig& cfg, const RunArtifacts& art) {
  return run_task(cfg, art, cfg.task);
}

}  // namespace nsc
