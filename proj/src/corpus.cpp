#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "nsc/experiments.hpp"

namespace nsc {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void fill_bytes(std::span<std::uint8_t> out, RngMode mode, std::uint64_t seed) {
  if (mode == RngMode::seeded) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < out.size(); i += 8) {
      std::uint64_t v = rng();
      for (std::size_t k = 0; k < 8 && i + k < out.size(); ++k) out[i + k] = static_cast<std::uint8_t>(v >> (8 * k));
    }
    return;
  }
  try {
    std::random_device rd;
    for (std::size_t i = 0; i < out.size(); i += 4) {
      const auto v = static_cast<std::uint32_t>(rd());
      for (std::size_t k = 0; k < 4 && i + k < out.size(); ++k) out[i + k] = static_cast<std::uint8_t>(v >> (8 * k));
    }
  } catch (const std::exception& ex) {
    throw std::runtime_error(std::string("entropy source unavailable: ") + ex.what());
  }
}

std::string entry_id(const SourceSpec& src, std::size_t index) {
  std::ostringstream os;
  os << to_string(src.generator);
  if (src.generator != Generator::urandom) os << "-r" << std::setw(2) << std::setfill('0') << src.rounds;
  os << '-' << std::setw(6) << std::setfill('0') << index;
  return os.str();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << content;
    if (!os) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::uint32_t schema_number(const std::string& version) {
  if (version.size() < 2 || version[0] != 'v') throw ConfigError("bad schema version '" + version + "'");
  return static_cast<std::uint32_t>(std::stoul(version.substr(1)));
}

}  // namespace

std::string to_string(RngMode m) { return m == RngMode::os ? "os" : "seeded"; }

RngMode rng_mode_from_string(const std::string& s) {
  if (s == "os") return RngMode::os;
  if (s == "seeded") return RngMode::seeded;
  throw ConfigError("rng mode must be 'os' or 'seeded', got '" + s + "'");
}

std::string to_string(Task t) {
  switch (t) {
    case Task::distinguish: return "distinguish";
    case Task::rounds_sweep: return "rounds";
    case Task::variants: return "variants";
  }
  return "unknown";
}

Task task_from_string(const std::string& s) {
  if (s == "distinguish") return Task::distinguish;
  if (s == "rounds" || s == "rounds_sweep") return Task::rounds_sweep;
  if (s == "variants") return Task::variants;
  throw ConfigError("unknown task '" + s + "'");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index);
}

BitString uniform_source(std::size_t n_bits, RngMode mode, std::uint64_t seed) {
  if (n_bits == 0 || n_bits % 8 != 0) throw InputError("uniform source length must be a positive multiple of 8");
  std::vector<std::uint8_t> bytes(n_bits / 8);
  fill_bytes(bytes, mode, seed);
  return BitString(std::move(bytes), n_bits);
}

std::vector<int> default_rounds(Task task) {
  if (task == Task::rounds_sweep) return {2, 4, 8, 12, 20};
  return {kFullRounds};
}

ExperimentConfig ExperimentConfig::preset(const std::string& name, Task task) {
  ExperimentConfig cfg;
  cfg.task = task;
  cfg.rounds_list = default_rounds(task);
  if (name == "desk") {
    cfg.sequences_per_class = 1000;
    cfg.n_bits = std::size_t{1} << 13;
  } else if (name == "paper") {
    cfg.sequences_per_class = 50000;
    cfg.n_bits = std::size_t{1} << 16;
  } else {
    throw ConfigError("preset must be 'desk' or 'paper', got '" + name + "'");
  }
  return cfg;
}

void ExperimentConfig::resolve_seeds() {
  if (!key_seed) key_seed = derive_seed(global_seed, 1, 0);
  if (!uniform_seed) uniform_seed = derive_seed(global_seed, 2, 0);
  if (!split_seed) split_seed = derive_seed(global_seed, 3, 0);
}

void ExperimentConfig::validate() const {
  if (sequences_per_class < 20) throw ConfigError("sequences per class must be >= 20");
  if (n_bits % 8 != 0) throw ConfigError("n_bits must be a multiple of 8");
  if (n_bits < kMinFeatureBits) throw ConfigError("n_bits must be >= 4096");
  if (rounds_list.empty()) throw ConfigError("rounds list is empty");
  for (int r : rounds_list) RoundCount{r};
  FeatureSchema::by_version(schema_version);
  if (train.learning_rate <= 0 || train.epochs == 0 || train.batch_size == 0 || train.l2 < 0) {
    throw ConfigError("invalid training configuration");
  }
  if (task == Task::variants && n_bits / 512 > 0xFFFFFFFFULL) throw ConfigError("n_bits too large for ChaCha20");
}

const CorpusEntry& CorpusManifest::at(const std::string& id) const {
  for (const auto& e : entries) {
    if (e.id == id) return e;
  }
  throw InputError("manifest has no entry '" + id + "'");
}

std::string manifest_to_json(const CorpusManifest& m) {
  json j;
  j["created_at"] = m.created_at;
  j["tool_version"] = m.tool_version;
  j["global_seed"] = m.global_seed;
  j["rng_mode"] = m.rng_mode;
  j["task"] = m.task;
  j["nonce_convention"] = m.nonce_convention;
  j["chacha_counter_start"] = m.chacha_counter_start;
  j["entries"] = json::array();
  for (const auto& e : m.entries) {
    j["entries"].push_back({{"id", e.id},
                            {"file", e.file},
                            {"generator", e.generator},
                            {"rounds", e.rounds},
                            {"key_hex", e.key_hex},
                            {"nonce_hex", e.nonce_hex},
                            {"n_bits", e.n_bits},
                            {"label", e.label}});
  }
  return j.dump(1) + "\n";
}

CorpusManifest manifest_from_json(const std::string& text) {
  CorpusManifest m;
  try {
    const auto j = json::parse(text);
    m.created_at = j.at("created_at").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.global_seed = j.at("global_seed").get<std::uint64_t>();
    m.rng_mode = j.value("rng_mode", "");
    m.task = j.value("task", "");
    m.nonce_convention = j.value("nonce_convention", "");
    m.chacha_counter_start = j.value("chacha_counter_start", 0u);
    for (const auto& je : j.at("entries")) {
      CorpusEntry e;
      e.id = je.at("id").get<std::string>();
      e.file = je.at("file").get<std::string>();
      e.generator = je.at("generator").get<std::string>();
      e.rounds = je.at("rounds").get<int>();
      e.key_hex = je.at("key_hex").get<std::string>();
      e.nonce_hex = je.at("nonce_hex").get<std::string>();
      e.n_bits = je.at("n_bits").get<std::size_t>();
      e.label = je.at("label").get<int>();
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw InputError(std::string("malformed manifest: ") + ex.what());
  }
  return m;
}

CorpusManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("manifest not found: " + path.string());
  return manifest_from_json(read_file(path));
}

void verify_manifest(const CorpusManifest& m, const fs::path& corpus_dir) {
  std::set<std::string> seen;
  for (const auto& e : m.entries) {
    if (!seen.insert(e.id).second) throw InputError("duplicate manifest id '" + e.id + "'");
    const auto g = generator_from_string(e.generator);
    if (e.label != (g == Generator::urandom ? 0 : 1)) {
      throw InputError("entry '" + e.id + "' label disagrees with generator");
    }
    const fs::path p = corpus_dir / e.file;
    if (!fs::exists(p)) throw std::runtime_error("missing corpus file " + p.string());
    if (fs::file_size(p) != e.n_bits / 8) throw std::runtime_error("corpus file has wrong size: " + p.string());
  }
}

std::string SourceSpec::label() const {
  if (generator == Generator::urandom) return "urandom";
  return to_string(generator) + ":" + std::to_string(rounds);
}

bool SourceSpec::matches(const CorpusEntry& e) const {
  if (e.generator != to_string(generator)) return false;
  return generator == Generator::urandom || e.rounds == rounds;
}

SourceSpec SourceSpec::parse(const std::string& text) {
  SourceSpec s;
  const auto colon = text.find(':');
  s.generator = generator_from_string(text.substr(0, colon));
  if (s.generator == Generator::urandom) {
    s.rounds = 0;
  } else if (colon != std::string::npos) {
    try {
      s.rounds = RoundCount(std::stoi(text.substr(colon + 1))).value();
    } catch (const std::logic_error&) {
      throw ConfigError("bad round count in source '" + text + "'");
    }
  }
  return s;
}

std::vector<SourceSpec> corpus_sources(const ExperimentConfig& cfg) {
  std::vector<SourceSpec> out;
  switch (cfg.task) {
    case Task::distinguish:
      out.push_back({Generator::echacha20, cfg.rounds_list.front()});
      break;
    case Task::rounds_sweep:
      for (int r : cfg.rounds_list) out.push_back({Generator::echacha20, r});
      break;
    case Task::variants:
      out.push_back({Generator::chacha20, cfg.rounds_list.front()});
      out.push_back({Generator::echacha20, cfg.rounds_list.front()});
      break;
  }
  out.push_back({Generator::urandom, 0});
  return out;
}

CorpusManifest generate_corpus(const ExperimentConfig& cfg_in, const fs::path& corpus_dir) {
  ExperimentConfig cfg = cfg_in;
  cfg.validate();
  cfg.resolve_seeds();
  fs::create_directories(corpus_dir);

  CorpusManifest m;
  m.global_seed = cfg.global_seed;
  m.rng_mode = to_string(cfg.rng_mode);
  m.task = to_string(cfg.task);
  m.created_at = cfg.rng_mode == RngMode::seeded ? "1970-01-01T00:00:00Z" : utc_now();
  const auto sources = corpus_sources(cfg);
  const bool has_chacha = std::any_of(sources.begin(), sources.end(),
                                      [](const auto& s) { return s.generator == Generator::chacha20; });
  if (has_chacha) m.nonce_convention = "chacha20: nonce96 = first 12 bytes of nonce_hex";

  struct Job {
    SourceSpec src;
    std::size_t source_index;
    std::size_t index;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    for (std::size_t i = 0; i < cfg.sequences_per_class; ++i) jobs.push_back({sources[s], s, i});
  }
  m.entries.resize(jobs.size());

  std::mutex written_mu;
  std::vector<fs::path> written;
  try {
    parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
      const auto& job = jobs[j];
      CorpusEntry e;
      e.id = entry_id(job.src, job.index);
      e.file = e.id + ".ks";
      e.generator = to_string(job.src.generator);
      e.n_bits = cfg.n_bits;
      std::vector<std::uint8_t> bytes;
      if (job.src.generator == Generator::urandom) {
        e.rounds = 0;
        e.label = 0;
        bytes = uniform_source(cfg.n_bits, cfg.rng_mode, derive_seed(*cfg.uniform_seed, 0, job.index)).packed();
      } else {
        e.rounds = job.src.rounds;
        e.label = 1;
        std::array<std::uint8_t, 48> material{};
        fill_bytes(material, cfg.rng_mode, derive_seed(*cfg.key_seed, job.source_index + 1, job.index));
        Key256 key;
        Nonce128 nonce;
        std::copy_n(material.begin(), 32, key.bytes.begin());
        std::copy_n(material.begin() + 32, 16, nonce.bytes.begin());
        e.key_hex = key.hex();
        e.nonce_hex = nonce.hex();
        const RoundCount rounds(job.src.rounds);
        const Keystream ks = job.src.generator == Generator::echacha20
                                 ? echacha_keystream(key, nonce, rounds, cfg.n_bits)
                                 : chacha20_keystream(key, truncate_nonce(nonce), rounds, cfg.n_bits,
                                                      m.chacha_counter_start);
        bytes = ks.bytes;
      }
      const fs::path path = corpus_dir / e.file;
      {
        std::lock_guard lock(written_mu);
        written.push_back(path);
      }
      std::ofstream os(path, std::ios::binary);
      os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      if (!os) throw std::runtime_error("write failed: " + path.string());
      m.entries[j] = std::move(e);
    });
    write_file_atomic(corpus_dir / "manifest.json", manifest_to_json(m));
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    fs::remove(corpus_dir / "manifest.json.tmp", ec);
    throw;
  }
  return m;
}

BitString load_sequence(const CorpusEntry& e, const fs::path& corpus_dir) {
  const auto raw = read_file(corpus_dir / e.file);
  if (raw.size() * 8 != e.n_bits) throw std::runtime_error("corpus file has wrong size: " + e.file);
  return BitString(std::vector<std::uint8_t>(raw.begin(), raw.end()), e.n_bits);
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "unknown";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw ConfigError("split must be train, validation or test");
}

Split SplitAssignment::of(const std::string& id) const {
  const auto it = assignment.find(id);
  if (it == assignment.end()) throw InputError("id '" + id + "' is not in the split");
  return it->second;
}

std::vector<std::string> SplitAssignment::ids(Split s) const {
  std::vector<std::string> out;
  for (const auto& [id, sp] : assignment) {
    if (sp == s) out.push_back(id);
  }
  return out;
}

SplitAssignment split_dataset(const std::vector<std::pair<std::string, int>>& labeled_ids, std::uint64_t seed,
                              std::array<double, 3> ratios) {
  SplitAssignment out;
  out.seed = seed;
  for (int label : {0, 1}) {
    std::vector<std::string> ids;
    for (const auto& [id, l] : labeled_ids) {
      if (l == label) ids.push_back(id);
    }
    if (ids.size() < 20) {
      throw ConfigError("split needs at least 20 entries per class, class " + std::to_string(label) + " has " +
                        std::to_string(ids.size()));
    }
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(derive_seed(seed, 7, static_cast<std::uint64_t>(label)));
    std::shuffle(ids.begin(), ids.end(), rng);

    const double n = static_cast<double>(ids.size());
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double exact = n * ratios[k];
      counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      frac[k] = exact - static_cast<double>(counts[k]);
      assigned += counts[k];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] > frac[b] + 1e-12; });
    for (std::size_t k = 0; assigned < ids.size(); ++k, ++assigned) ++counts[order[k % 3]];

    std::size_t pos = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t c = 0; c < counts[k]; ++c) out.assignment[ids[pos++]] = static_cast<Split>(k);
    }
  }
  return out;
}

std::string split_to_json(const SplitAssignment& s, const SourceSpec& positive, const SourceSpec& negative) {
  json j;
  j["seed"] = s.seed;
  j["positive"] = positive.label();
  j["negative"] = negative.label();
  json a = json::object();
  for (const auto& [id, sp] : s.assignment) a[id] = to_string(sp);
  j["assignment"] = a;
  return j.dump(1) + "\n";
}

StoredSplit split_from_json(const std::string& text) {
  StoredSplit out;
  try {
    const auto j = json::parse(text);
    out.split.seed = j.at("seed").get<std::uint64_t>();
    out.positive = SourceSpec::parse(j.at("positive").get<std::string>());
    out.negative = SourceSpec::parse(j.at("negative").get<std::string>());
    for (const auto& [id, sp] : j.at("assignment").items()) {
      out.split.assignment[id] = split_from_string(sp.get<std::string>());
    }
  } catch (const json::exception& ex) {
    throw InputError(std::string("malformed split file: ") + ex.what());
  }
  return out;
}

FeatureMatrix extract_corpus_features(const CorpusManifest& m, const fs::path& corpus_dir,
                                      const FeatureSchema& schema, std::size_t threads) {
  FeatureMatrix f;
  f.schema_version = schema.version;
  f.dim = schema.dimension();
  f.ids.resize(m.entries.size());
  f.labels.resize(m.entries.size());
  f.values.assign(m.entries.size() * f.dim, 0.0);
  parallel_for(m.entries.size(), threads, [&](std::size_t i) {
    const auto& e = m.entries[i];
    const auto fv = extract_features(load_sequence(e, corpus_dir), schema, e.id);
    f.ids[i] = e.id;
    f.labels[i] = e.label;
    std::copy(fv.values.begin(), fv.values.end(), f.values.begin() + static_cast<std::ptrdiff_t>(i * f.dim));
  });
  return f;
}

void write_features_csv(const FeatureMatrix& f, const fs::path& path) {
  std::ostringstream os;
  os << "schema_version,source_id,label";
  for (std::size_t c = 0; c < f.dim; ++c) {
    os << ",x_" << std::setw(4) << std::setfill('0') << c + 1;
  }
  os << '\n' << std::setprecision(17);
  for (std::size_t r = 0; r < f.rows(); ++r) {
    os << f.schema_version << ',' << f.ids[r] << ',' << f.labels[r];
    for (double v : f.row(r)) os << ',' << v;
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

FeatureMatrix read_features_csv(const fs::path& path) {
  std::istringstream is(read_file(path));
  std::string line;
  if (!std::getline(is, line) || line.rfind("schema_version,source_id,label", 0) != 0) {
    throw InputError("feature CSV has an unexpected header");
  }
  FeatureMatrix f;
  f.dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 2;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    if (f.schema_version.empty()) f.schema_version = cell;
    if (cell != f.schema_version) throw InputError("mixed schema versions in feature CSV");
    std::getline(ls, cell, ',');
    f.ids.push_back(cell);
    std::getline(ls, cell, ',');
    f.labels.push_back(std::stoi(cell));
    std::size_t got = 0;
    while (std::getline(ls, cell, ',')) {
      f.values.push_back(std::stod(cell));
      ++got;
    }
    if (got != f.dim) throw InputError("feature CSV row has " + std::to_string(got) + " values");
  }
  return f;
}

void write_features_nscf(const FeatureMatrix& f, const fs::path& path) {
  std::string out = "NSCF";
  auto put = [&out](std::uint64_t v, int bytes) {
    for (int k = 0; k < bytes; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
  };
  put(schema_number(f.schema_version), 4);
  put(f.dim, 4);
  put(f.rows(), 8);
  for (double v : f.values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put(bits, 8);
  }
  write_file_atomic(path, out);
}

FeatureMatrix read_features_nscf(const fs::path& path, const CorpusManifest& m) {
  const auto raw = read_file(path);
  if (raw.size() < 20 || raw.compare(0, 4, "NSCF") != 0) throw InputError("not an NSCF feature file");
  auto get = [&raw](std::size_t off, int bytes) {
    std::uint64_t v = 0;
    for (int k = 0; k < bytes; ++k) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(raw[off + k])) << (8 * k);
    return v;
  };
  FeatureMatrix f;
  f.schema_version = "v" + std::to_string(get(4, 4));
  f.dim = get(8, 4);
  const std::size_t rows = get(12, 8);
  if (raw.size() != 20 + rows * f.dim * 8) throw InputError("NSCF file size does not match its header");
  if (rows != m.entries.size()) throw InputError("NSCF row count does not match the manifest");
  f.values.resize(rows * f.dim);
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    const std::uint64_t bits = get(20 + 8 * i, 8);
    std::memcpy(&f.values[i], &bits, sizeof bits);
  }
  for (const auto& e : m.entries) {
    f.ids.push_back(e.id);
    f.labels.push_back(e.label);
  }
  return f;
}

std::size_t worker_count(std::size_t requested) {
  std::size_t n = requested > 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("NSC_THREADS")) {
    try {
      const auto cap = static_cast<std::size_t>(std::stoul(env));
      if (cap > 0) n = std::min(n, cap);
    } catch (const std::logic_error&) {
    }
  }
  return n;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(threads), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace nsc
