// nsc: keystream generation, stringology features, neural distinguishers.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "nsc/cipher.hpp"
#include "nsc/experiments.hpp"
#include "nsc/neural.hpp"
#include "nsc/stringology.hpp"

namespace fs = std::filesystem;
using namespace nsc;

namespace {

struct CorpusFlags {
  std::string preset = "desk";
  std::string task = "distinguish";
  std::string out;
  std::string rng = "seeded";
  std::uint64_t seed = 42;
  std::optional<std::uint64_t> key_seed, uniform_seed, split_seed;
  std::optional<std::size_t> sequences;
  std::optional<std::size_t> n_bits;
  std::vector<int> rounds;
  std::string schema = "v1";
  std::size_t threads = 0;
};

struct TrainFlags {
  double lr = TrainConfig{}.learning_rate;
  std::size_t epochs = TrainConfig{}.epochs;
  std::size_t batch = TrainConfig{}.batch_size;
  double l2 = TrainConfig{}.l2;
  std::size_t patience = TrainConfig{}.patience;
  std::uint64_t train_seed = TrainConfig{}.seed;
};

void add_corpus_flags(CLI::App* app, CorpusFlags& f, bool with_task) {
  app->add_option("--preset", f.preset, "Scale preset")->check(CLI::IsMember({"desk", "paper"}))->capture_default_str();
  if (with_task) {
    app->add_option("--task", f.task, "Corpus layout for a task")
        ->check(CLI::IsMember({"distinguish", "rounds", "variants"}))
        ->capture_default_str();
  }
  app->add_option("--out", f.out, "Output directory (all artifact paths are relative to it)")->required();
  app->add_option("--rng", f.rng, "Randomness mode")->check(CLI::IsMember({"os", "seeded"}))->capture_default_str();
  app->add_option("--seed", f.seed, "Global seed")->capture_default_str();
  app->add_option("--key-seed", f.key_seed, "Seed for key/nonce sampling (default: derived from --seed)");
  app->add_option("--uniform-seed", f.uniform_seed, "Seed for the uniform baseline (default: derived from --seed)");
  app->add_option("--split-seed", f.split_seed, "Seed for the train/validation/test split");
  app->add_option("--sequences", f.sequences, "Sequences per class (default: from preset)");
  app->add_option("--n-bits", f.n_bits, "Bits per sequence (default: from preset)");
  app->add_option("--rounds", f.rounds, "Round counts (default: 20, or 2 4 8 12 20 for rounds)");
  app->add_option("--schema", f.schema, "Feature schema version")->capture_default_str();
  app->add_option("--threads", f.threads, "Worker threads (0 = auto; NSC_THREADS caps)")->capture_default_str();
}

void add_train_flags(CLI::App* app, TrainFlags& t) {
  app->add_option("--lr", t.lr, "Learning rate")->capture_default_str();
  app->add_option("--epochs", t.epochs, "Maximum epochs")->capture_default_str();
  app->add_option("--batch", t.batch, "Mini-batch size")->capture_default_str();
  app->add_option("--l2", t.l2, "L2 penalty")->capture_default_str();
  app->add_option("--patience", t.patience, "Early-stop patience in epochs (0 disables)")->capture_default_str();
  app->add_option("--train-seed", t.train_seed, "Initialization and shuffling seed")->capture_default_str();
}

ExperimentConfig make_config(const CorpusFlags& f, const TrainFlags& t, Task task) {
  auto cfg = ExperimentConfig::preset(f.preset, task);
  if (f.sequences) cfg.sequences_per_class = *f.sequences;
  if (f.n_bits) cfg.n_bits = *f.n_bits;
  if (!f.rounds.empty()) cfg.rounds_list = f.rounds;
  cfg.schema_version = f.schema;
  cfg.rng_mode = rng_mode_from_string(f.rng);
  cfg.global_seed = f.seed;
  cfg.key_seed = f.key_seed;
  cfg.uniform_seed = f.uniform_seed;
  cfg.split_seed = f.split_seed;
  cfg.threads = f.threads;
  cfg.train.learning_rate = t.lr;
  cfg.train.epochs = t.epochs;
  cfg.train.batch_size = t.batch;
  cfg.train.l2 = t.l2;
  cfg.train.patience = t.patience;
  cfg.train.seed = t.train_seed;
  cfg.validate();
  cfg.resolve_seeds();
  return cfg;
}

void log_line(const std::string& msg) { std::cerr << "[nsc] " << msg << '\n'; }

fs::path manifest_path(const fs::path& out) { return out / "corpus" / "manifest.json"; }

std::string read_text(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Default positive class: the first cipher source in the manifest.
SourceSpec first_cipher_source(const CorpusManifest& m) {
  for (const auto& e : m.entries) {
    if (e.label == 1) return {generator_from_string(e.generator), e.rounds};
  }
  throw std::runtime_error("manifest has no cipher entries");
}

FeatureMatrix load_features(const fs::path& path, const CorpusManifest& m) {
  if (path.extension() == ".csv") return read_features_csv(path);
  return read_features_nscf(path, m);
}

int cmd_generate(const CorpusFlags& f) {
  const auto cfg = make_config(f, {}, task_from_string(f.task));
  const fs::path corpus = fs::path(f.out) / "corpus";
  const auto m = generate_corpus(cfg, corpus);
  std::cout << (corpus / "manifest.json").string() << " (" << m.entries.size() << " sequences, " << cfg.n_bits
            << " bits each)\n";
  return 0;
}

int cmd_features(const std::string& out, const std::string& schema_name, std::size_t threads) {
  const auto& schema = FeatureSchema::by_version(schema_name);
  const fs::path base(out);
  const auto m = load_manifest(manifest_path(base));
  verify_manifest(m, base / "corpus");
  const auto fm = extract_corpus_features(m, base / "corpus", schema, threads);
  fs::create_directories(base / "features");
  const fs::path stem = base / "features" / (m.task.empty() ? std::string("corpus") : m.task);
  write_features_nscf(fm, stem.string() + ".nscf");
  write_features_csv(fm, stem.string() + ".csv");
  std::cout << "d=" << fm.dim << " rows=" << fm.rows() << " -> " << stem.string() << ".nscf\n";
  return 0;
}

struct TrainArgs {
  std::string out;
  std::string features;
  std::string positive;
  std::string negative = "urandom";
  std::string name;
  bool logistic = false;
  std::uint64_t split_seed = 0;
  bool split_seed_set = false;
  TrainFlags t;
};

int cmd_train(const TrainArgs& a) {
  const fs::path base(a.out);
  const auto m = load_manifest(manifest_path(base));
  const fs::path feat = a.features.empty() ? base / "features" / (m.task + ".nscf") : base / a.features;
  const auto fm = load_features(feat, m);
  Condition c;
  c.positive = a.positive.empty() ? first_cipher_source(m) : SourceSpec::parse(a.positive);
  c.negative = SourceSpec::parse(a.negative);
  c.name = a.name.empty() ? condition_name(c.positive, c.negative) : a.name;
  const std::uint64_t split_seed = a.split_seed_set ? a.split_seed : derive_seed(m.global_seed, 3, 0);
  const auto data = build_condition_data(fm, m, c, split_seed);

  TrainConfig tc;
  tc.learning_rate = a.t.lr;
  tc.epochs = a.t.epochs;
  tc.batch_size = a.t.batch;
  tc.l2 = a.t.l2;
  tc.patience = a.t.patience;
  tc.seed = a.t.train_seed;
  tc.standardize_from = FeatureSchema::by_version(fm.schema_version).offset("ngram_statistics");
  const auto result = a.logistic ? logistic_baseline(data.train, data.validation, tc)
                                 : train(data.train, data.validation, tc);
  fs::create_directories(base / "models");
  const fs::path model = base / "models" / (c.name + (a.logistic ? "_logistic" : "_mlp") + ".nscmlp");
  save_checkpoint(result.params, model.string());
  {
    std::ofstream os(fs::path(model).replace_extension(".split.json"));
    os << split_to_json(data.split, c.positive, c.negative);
  }
  const auto& best = result.history.at(result.best_epoch - 1);
  std::printf("best epoch %zu validation accuracy %.4f -> %s\n", result.best_epoch, best.validation_accuracy,
              model.string().c_str());
  return 0;
}

int cmd_eval(const std::string& out, const std::string& model_rel, const std::string& features_rel,
             const std::string& split_name, bool allow_train_eval) {
  const Split split = split_from_string(split_name);
  if (split != Split::test && !allow_train_eval) {
    throw ConfigError("refusing to evaluate on the " + split_name + " split without --allow-train-eval");
  }
  const fs::path base(out);
  const auto m = load_manifest(manifest_path(base));
  const fs::path model_path = base / model_rel;
  const auto params = load_checkpoint(model_path.string());
  const auto stored = split_from_json(read_text(fs::path(model_path).replace_extension(".split.json")));
  const fs::path feat = features_rel.empty() ? base / "features" / (m.task + ".nscf") : base / features_rel;
  const auto fm = load_features(feat, m);

  Condition c{"eval", stored.positive, stored.negative};
  auto data = build_condition_data(fm, m, c, stored.split.seed);
  if (data.split.assignment != stored.split.assignment) {
    throw std::runtime_error("recomputed split differs from the model's stored split");
  }
  const LabeledDataset& set = split == Split::test ? data.test : split == Split::train ? data.train : data.validation;
  const auto probs = predict(params, set);
  std::vector<int> decisions(probs.size());
  std::transform(probs.begin(), probs.end(), decisions.begin(), decide);
  const auto metrics = metrics_from_counts(confusion(decisions, set.labels));
  const auto roc = roc_auc(probs, set.labels);
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < decisions.size(); ++i) (set.labels[i] == 1 ? pos : neg).push_back(decisions[i]);
  const auto adv = advantage(pos, neg);

  ReportRow row;
  row.condition = condition_name(stored.positive, stored.negative);
  row.rounds = stored.positive.rounds;
  row.model = model_path.stem().string();
  row.accuracy = metrics.accuracy;
  row.precision = metrics.precision;
  row.recall = metrics.recall;
  row.f1 = metrics.f1;
  row.auc = roc.auc;
  row.advantage = adv.adv;
  row.ci_low = adv.ci_low;
  row.ci_high = adv.ci_high;
  row.n_test = set.size();
  row.counts = metrics.counts;
  fs::create_directories(base / "reports");
  const fs::path report = base / "reports" / ("eval_" + model_path.stem().string() + "_" + split_name + ".csv");
  {
    std::ofstream os(report);
    os << kReportCsvHeader << '\n' << format_csv_row(row) << '\n';
  }
  std::printf("accuracy %.4f auc %.4f advantage %.4f (%s split, n=%zu) -> %s\n", metrics.accuracy, roc.auc, adv.adv,
              split_name.c_str(), set.size(), report.string().c_str());
  return 0;
}

int cmd_experiment(const CorpusFlags& f, const TrainFlags& t, const std::string& task_name) {
  const Task task = task_from_string(task_name);
  const auto cfg = make_config(f, t, task);
  RunArtifacts art;
  art.out_dir = f.out;
  art.log = log_line;
  const auto report = run_experiment(cfg, art);
  const auto& top = report.rows.front();
  std::printf("%s: %s accuracy %.4f -> %s\n", to_string(task).c_str(), top.condition.c_str(), top.accuracy,
              (fs::path(f.out) / "reports" / (to_string(task) + ".csv")).string().c_str());
  return 0;
}

int cmd_report(const std::string& out, const std::string& task_name) {
  const fs::path reports = fs::path(out) / "reports";
  const std::string task = to_string(task_from_string(task_name));
  const auto report = report_from_json(read_text(reports / (task + ".json")));
  emit_reports(report, reports);
  std::printf("%zu rows -> %s\n", report.rows.size(), (reports / (task + ".csv")).string().c_str());
  return 0;
}

int cmd_dump_schedule() {
  const auto& table = echacha_schedule();
  for (std::size_t k = 0; k < table.size(); ++k) {
    std::printf("%s%zu:", k < 4 ? "row" : "diag", k < 4 ? k : k - 4);
    for (auto idx : table[k]) std::printf(" %zu", idx);
    std::printf("\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keystream stringology features and neural distinguishers"};
  app.require_subcommand(1);

  CorpusFlags gen_flags;
  auto* gen = app.add_subcommand("generate", "Generate a keystream corpus and manifest");
  add_corpus_flags(gen, gen_flags, true);

  std::string feat_out, feat_schema = "v1";
  std::size_t feat_threads = 0;
  auto* feat = app.add_subcommand("features", "Extract feature matrices from a corpus");
  feat->add_option("--out", feat_out, "Run directory")->required();
  feat->add_option("--schema", feat_schema, "Feature schema version")->capture_default_str();
  feat->add_option("--threads", feat_threads, "Worker threads (0 = auto)")->capture_default_str();

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train a distinguisher on one condition");
  tr->add_option("--out", train_args.out, "Run directory")->required();
  tr->add_option("--features", train_args.features, "Feature file relative to --out (default: features/<task>.nscf)");
  tr->add_option("--positive", train_args.positive, "Class-1 source, e.g. echacha20:8 (default: first cipher source)");
  tr->add_option("--negative", train_args.negative, "Class-0 source")->capture_default_str();
  tr->add_option("--name", train_args.name, "Model name (default: derived from the sources)");
  tr->add_flag("--logistic", train_args.logistic, "Train the logistic baseline instead of the MLP");
  tr->add_option("--split-seed", train_args.split_seed, "Split seed (default: derived from the corpus seed)")
      ->each([&](const std::string&) { train_args.split_seed_set = true; });
  add_train_flags(tr, train_args.t);

  std::string eval_out, eval_model, eval_features, eval_split = "test";
  bool allow_train_eval = false;
  auto* ev = app.add_subcommand("eval", "Evaluate a trained model on a split");
  ev->add_option("--out", eval_out, "Run directory")->required();
  ev->add_option("--model", eval_model, "Checkpoint relative to --out")->required();
  ev->add_option("--features", eval_features, "Feature file relative to --out (default: features/<task>.nscf)");
  ev->add_option("--split", eval_split, "Split to evaluate")
      ->check(CLI::IsMember({"train", "validation", "test"}))
      ->capture_default_str();
  ev->add_flag("--allow-train-eval", allow_train_eval, "Permit evaluation on non-test splits");

  CorpusFlags exp_flags;
  TrainFlags exp_train;
  std::string exp_task;
  auto* ex = app.add_subcommand("experiment", "Run generate, features, train and eval for a task");
  ex->add_option("task", exp_task, "distinguish | rounds | variants")
      ->required()
      ->check(CLI::IsMember({"distinguish", "rounds", "variants"}));
  add_corpus_flags(ex, exp_flags, false);
  add_train_flags(ex, exp_train);

  std::string rep_out, rep_task = "distinguish";
  auto* rep = app.add_subcommand("report", "Re-render CSV/SVG reports from a stored result");
  rep->add_option("--out", rep_out, "Run directory")->required();
  rep->add_option("--task", rep_task, "Task name")
      ->check(CLI::IsMember({"distinguish", "rounds", "variants"}))
      ->capture_default_str();

  auto* dump = app.add_subcommand("dump-schedule", "Print the QR6 word-index schedule (rows then diagonals)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(gen_flags);
    if (*feat) return cmd_features(feat_out, feat_schema, feat_threads);
    if (*tr) return cmd_train(train_args);
    if (*ev) return cmd_eval(eval_out, eval_model, eval_features, eval_split, allow_train_eval);
    if (*ex) return cmd_experiment(exp_flags, exp_train, exp_task);
    if (*rep) return cmd_report(rep_out, rep_task);
    if (*dump) return cmd_dump_schedule();
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
