// Corpus generation, dataset splits, feature files, the three experiment
// tasks, and report emission (CSV tables, SVG charts, run summary).
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsc/cipher.hpp"
#include "nsc/neural.hpp"
#include "nsc/stringology.hpp"

namespace nsc {

inline constexpr const char* kToolVersion = "0.3.0";

enum class RngMode { os, seeded };
std::string to_string(RngMode m);
RngMode rng_mode_from_string(const std::string& s);

enum class Task { distinguish, rounds_sweep, variants };
std::string to_string(Task t);
// Accepts "distinguish", "rounds", "rounds_sweep", "variants".
Task task_from_string(const std::string& s);

// Independent deterministic stream for entry `index` of a named source.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

// Uniform baseline bits. Seeded mode uses std::mt19937_64 keyed by `seed`;
// os mode reads std::random_device and ignores `seed`.
BitString uniform_source(std::size_t n_bits, RngMode mode, std::uint64_t seed);

struct ExperimentConfig {
  Task task = Task::distinguish;
  std::size_t sequences_per_class = 1000;
  std::size_t n_bits = std::size_t{1} << 13;
  std::vector<int> rounds_list{kFullRounds};
  std::string schema_version = "v1";
  TrainConfig train;
  RngMode rng_mode = RngMode::seeded;
  std::uint64_t global_seed = 42;
  // Key/nonce sampling and the uniform baseline draw from separate seeds.
  std::optional<std::uint64_t> key_seed;
  std::optional<std::uint64_t> uniform_seed;
  std::optional<std::uint64_t> split_seed;
  std::size_t threads = 0;  // 0 = NSC_THREADS or hardware concurrency

  static ExperimentConfig preset(const std::string& name, Task task);
  // Fills unset derived seeds from global_seed.
  void resolve_seeds();
  // Throws ConfigError on invalid values.
  void validate() const;
};

std::vector<int> default_rounds(Task task);

struct CorpusEntry {
  std::string id;
  std::string file;  // relative to the corpus directory
  std::string generator;
  int rounds = 0;
  std::string key_hex;
  std::string nonce_hex;
  std::size_t n_bits = 0;
  int label = 0;  // 1 = cipher output, 0 = uniform baseline
};

struct CorpusManifest {
  std::vector<CorpusEntry> entries;
  std::string created_at;
  std::string tool_version = kToolVersion;
  std::uint64_t global_seed = 0;
  std::string rng_mode;
  std::string task;
  std::string nonce_convention;
  std::uint32_t chacha_counter_start = 0;

  const CorpusEntry& at(const std::string& id) const;
};

std::string manifest_to_json(const CorpusManifest& m);
CorpusManifest manifest_from_json(const std::string& text);
CorpusManifest load_manifest(const std::filesystem::path& path);
// Checks unique ids, file presence and sizes, and label/generator agreement.
void verify_manifest(const CorpusManifest& m, const std::filesystem::path& corpus_dir);

// One class of sequences: a generator at a round count (ignored for urandom).
struct SourceSpec {
  Generator generator = Generator::echacha20;
  int rounds = kFullRounds;

  std::string label() const;
  bool matches(const CorpusEntry& e) const;
  static SourceSpec parse(const std::string& text);  // "echacha20:8", "urandom"
  bool operator==(const SourceSpec&) const = default;
};

std::vector<SourceSpec> corpus_sources(const ExperimentConfig& cfg);

// Writes <corpus_dir>/<id>.ks and then manifest.json. On failure, files
// written by this call are removed before rethrowing.
CorpusManifest generate_corpus(const ExperimentConfig& cfg, const std::filesystem::path& corpus_dir);

BitString load_sequence(const CorpusEntry& e, const std::filesystem::path& corpus_dir);

enum class Split { train, validation, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct SplitAssignment {
  std::map<std::string, Split> assignment;
  std::uint64_t seed = 0;

  Split of(const std::string& id) const;
  std::vector<std::string> ids(Split s) const;
};

// Stratified 70/15/15 with largest-remainder rounding per class.
SplitAssignment split_dataset(const std::vector<std::pair<std::string, int>>& labeled_ids,
                              std::uint64_t seed, std::array<double, 3> ratios = {0.70, 0.15, 0.15});

std::string split_to_json(const SplitAssignment& s, const SourceSpec& positive, const SourceSpec& negative);
struct StoredSplit {
  SplitAssignment split;
  SourceSpec positive;
  SourceSpec negative;
};
StoredSplit split_from_json(const std::string& text);

struct FeatureMatrix {
  std::string schema_version;
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<double> values;  // rows x dim

  std::size_t rows() const noexcept { return ids.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

FeatureMatrix extract_corpus_features(const CorpusManifest& m, const std::filesystem::path& corpus_dir,
                                      const FeatureSchema& schema, std::size_t threads = 0);

// CSV: header "schema_version,source_id,label,x_0001..x_NNNN".
void write_features_csv(const FeatureMatrix& f, const std::filesystem::path& path);
FeatureMatrix read_features_csv(const std::filesystem::path& path);
// Binary: "NSCF", u32 schema version number, u32 d, u64 rows, then rows x d
// little-endian doubles. Row order matches the manifest entry order.
void write_features_nscf(const FeatureMatrix& f, const std::filesystem::path& path);
FeatureMatrix read_features_nscf(const std::filesystem::path& path, const CorpusManifest& m);

struct Condition {
  std::string name;
  SourceSpec positive;  // class 1
  SourceSpec negative;  // class 0
};

// "echacha20_r8_vs_urandom"; the positive (class 1) source is named first.
std::string condition_name(const SourceSpec& positive, const SourceSpec& negative);
std::vector<Condition> task_conditions(const ExperimentConfig& cfg);

struct ConditionData {
  LabeledDataset train, validation, test;
  std::vector<std::string> test_ids;
  SplitAssignment split;
};

ConditionData build_condition_data(const FeatureMatrix& f, const CorpusManifest& m, const Condition& c,
                                   std::uint64_t split_seed);

struct ReportRow {
  std::string condition;
  int rounds = 0;
  std::string model;
  double accuracy = 0.0;
  std::optional<double> precision, recall, f1;
  double auc = 0.5;
  double advantage = 0.0;
  double ci_low = 0.0, ci_high = 0.0;
  std::size_t n_test = 0;
  ConfusionCounts counts;
  bool reference = false;  // fixed reference row, not measured
};

struct NgramSummaryRow {
  std::string source;
  unsigned m = 0;
  double entropy_ratio = 0.0;
  double chi_square_z = 0.0;
  double distinct_ratio = 0.0;
  std::size_t sequences = 0;
};

struct CurveSeries {
  std::string name;
  RocCurve roc;
};

struct TaskReport {
  Task task = Task::distinguish;
  std::vector<ReportRow> rows;
  std::vector<CurveSeries> curves;
  std::vector<NgramSummaryRow> ngrams;
  std::map<std::string, std::vector<std::string>> test_ids;  // per condition
  std::vector<std::string> notes;
  std::string config_echo;
};

struct RunArtifacts {
  std::filesystem::path out_dir;
  bool reuse_corpus = true;
  bool reuse_features = true;
  std::function<void(const std::string&)> log;
};

// End-to-end pipeline: corpus -> features -> models -> report bundle.
TaskReport run_experiment(const ExperimentConfig& cfg, const RunArtifacts& art);
TaskReport run_distinguish(const ExperimentConfig& cfg, const RunArtifacts& art);
TaskReport run_rounds_sweep(const ExperimentConfig& cfg, const RunArtifacts& art);
TaskReport run_variants(const ExperimentConfig& cfg, const RunArtifacts& art);

// Per-source m-gram summaries over test-split rows only.
std::vector<NgramSummaryRow> ngram_summary(const FeatureMatrix& f, const CorpusManifest& m,
                                           const std::vector<SourceSpec>& sources,
                                           const std::vector<std::string>& ids);

std::string report_to_json(const TaskReport& r);
TaskReport report_from_json(const std::string& text);
// reports/<task>.csv, <task>.svg, <task>_roc.csv, <task>_ngrams.csv/.svg,
// <task>_test_ids.txt, <task>.json and summary.txt.
void emit_reports(const TaskReport& r, const std::filesystem::path& out_dir);

std::string config_echo(const ExperimentConfig& cfg);
std::string format_csv_row(const ReportRow& row);
inline constexpr const char* kReportCsvHeader =
    "condition,rounds,model,accuracy,precision,recall,f1,auc,advantage,ci_low,ci_high,n_test,tp,tn,fp,fn";

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series,
                           double x_min, double x_max, double y_min, double y_max);
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& groups,
                          const std::vector<std::pair<std::string, std::vector<double>>>& series,
                          const std::string& y_label);

std::size_t worker_count(std::size_t requested);
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace nsc
