#include <pybind11/pybind11.h>
#include <pybind11/operators.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "nsc/experiments.hpp"

namespace py = pybind11;
using namespace nsc;

namespace {

std::vector<std::uint8_t> as_vector(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

template <std::size_t N>
std::array<std::uint8_t, N> fixed_bytes(const py::bytes& b, const char* what) {
  const std::string s = b;
  if (s.size() != N) throw InputError(std::string(what) + " must be " + std::to_string(N) + " bytes");
  std::array<std::uint8_t, N> out{};
  std::copy(s.begin(), s.end(), out.begin());
  return out;
}

Key256 key_of(const py::bytes& b) { return Key256{fixed_bytes<32>(b, "key")}; }
Nonce128 nonce_of(const py::bytes& b) { return Nonce128{fixed_bytes<16>(b, "nonce")}; }

template <typename Range>
py::bytes to_bytes(const Range& r) {
  return py::bytes(reinterpret_cast<const char*>(r.data()), r.size());
}

BitString bits_of(const py::object& o) {
  if (py::isinstance<py::str>(o)) return BitString::from_text(o.cast<std::string>());
  const auto v = as_vector(o.cast<py::bytes>());
  return BitString::from_bytes(v);
}

LabeledDataset dataset_of(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  if (x.size() != y.size()) throw InputError("features and labels differ in length");
  if (x.empty()) throw InputError("dataset is empty");
  LabeledDataset d;
  d.dim = x.front().size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != d.dim) throw InputError("ragged feature rows");
    d.add(x[i], y[i]);
  }
  return d;
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["tp"] = m.counts.tp;
  d["tn"] = m.counts.tn;
  d["fp"] = m.counts.fp;
  d["fn"] = m.counts.fn;
  d["accuracy"] = m.accuracy;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["f1"] = m.f1;
  return d;
}

py::dict row_dict(const ReportRow& r) {
  py::dict d;
  d["condition"] = r.condition;
  d["rounds"] = r.rounds;
  d["model"] = r.model;
  d["accuracy"] = r.accuracy;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["auc"] = r.auc;
  d["advantage"] = r.advantage;
  d["ci"] = py::make_tuple(r.ci_low, r.ci_high);
  d["n_test"] = r.n_test;
  d["reference"] = r.reference;
  return d;
}

}  // namespace

PYBIND11_MODULE(nscpy, m) {
  m.doc() = "Keystream generation, bit-string statistics and neural distinguishers";
  m.attr("__version__") = NSC_VERSION;

  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  // cipher
  m.def("rotl32", &rotl32, py::arg("x"), py::arg("r"));
  m.def("qr6", [](const Qr6Words& y) { return echacha_qr6(y); }, py::arg("words"));
  m.def("echacha_constants", &echacha_constants);
  m.def("echacha_schedule", &echacha_schedule);
  m.def(
      "echacha_block",
      [](const py::bytes& key, const py::bytes& nonce, std::uint64_t counter, int rounds) {
        return to_bytes(echacha_block(key_of(key), nonce_of(nonce), counter, RoundCount(rounds)));
      },
      py::arg("key"), py::arg("nonce"), py::arg("counter") = 0, py::arg("rounds") = kFullRounds);
  m.def(
      "echacha_keystream",
      [](const py::bytes& key, const py::bytes& nonce, int rounds, std::size_t n_bits) {
        return to_bytes(echacha_keystream(key_of(key), nonce_of(nonce), RoundCount(rounds), n_bits).bytes);
      },
      py::arg("key"), py::arg("nonce"), py::arg("rounds"), py::arg("n_bits"));
  m.def(
      "chacha20_block",
      [](const py::bytes& key, const py::bytes& nonce, std::uint32_t counter, int rounds) {
        return to_bytes(chacha20_block(key_of(key), fixed_bytes<12>(nonce, "nonce"), counter, RoundCount(rounds)));
      },
      py::arg("key"), py::arg("nonce"), py::arg("counter") = 0, py::arg("rounds") = kFullRounds);
  m.def("chacha_quarter_round", [](const ChaChaWords& w) { return chacha_quarter_round(w); });

  // stringology; bit strings are '0'/'1' text or packed bytes (MSB first)
  m.def("naive_search", [](const py::object& p, const py::object& s) { return naive_search(bits_of(p), bits_of(s)); });
  m.def("kmp_search", [](const py::object& p, const py::object& s) { return kmp_search(bits_of(p), bits_of(s)); });
  m.def("bm_search", [](const py::object& p, const py::object& s) { return bm_search(bits_of(p), bits_of(s)); });
  m.def("count_occurrences",
        [](const py::object& p, const py::object& s) { return count_occurrences(bits_of(p), bits_of(s)); });
  m.def("longest_repeated_substring", [](const py::object& s) { return longest_repeated_substring(bits_of(s)); });
  m.def("serial_correlation", [](const py::object& s, std::size_t lag) { return serial_correlation(bits_of(s), lag); });
  m.def(
      "ngram_stats",
      [](const py::object& s, unsigned m) {
        const auto h = ngram_histogram(bits_of(s), m);
        const auto c = collision_stats(h);
        py::dict d;
        d["windows"] = h.windows;
        d["distinct"] = h.distinct();
        d["chi_square"] = chi_square_uniform(h);
        d["entropy"] = shannon_entropy(h);
        d["distinct_ratio"] = c.distinct_ratio;
        d["max_multiplicity"] = c.max_multiplicity;
        return d;
      },
      py::arg("bits"), py::arg("m"));
  m.def(
      "extract_features",
      [](const py::object& s, const std::string& schema) {
        return extract_features(bits_of(s), FeatureSchema::by_version(schema)).values;
      },
      py::arg("bits"), py::arg("schema") = "v1");
  m.def("feature_dimension", [](const std::string& schema) { return FeatureSchema::by_version(schema).dimension(); },
        py::arg("schema") = "v1");

  // neural
  py::class_<MlpParameters>(m, "Model")
      .def_property_readonly("layer_sizes", [](const MlpParameters& p) { return p.layer_sizes; })
      .def("predict",
           [](const MlpParameters& p, const std::vector<std::vector<double>>& x) {
             std::vector<double> out;
             out.reserve(x.size());
             for (const auto& row : x) out.push_back(forward(p, row));
             return out;
           })
      .def("save", [](const MlpParameters& p, const std::string& path) { save_checkpoint(p, path); })
      .def_static("load", [](const std::string& path) { return load_checkpoint(path); })
      .def(py::self == py::self);
  m.def(
      "train",
      [](const std::vector<std::vector<double>>& x, const std::vector<int>& y,
         const std::vector<std::vector<double>>& vx, const std::vector<int>& vy, std::vector<std::size_t> hidden,
         std::size_t epochs, double learning_rate, std::uint64_t seed, std::optional<std::size_t> standardize_from) {
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.learning_rate = learning_rate;
        cfg.seed = seed;
        cfg.standardize_from = standardize_from;
        return train(dataset_of(x, y), dataset_of(vx, vy), cfg, hidden).params;
      },
      py::arg("x"), py::arg("y"), py::arg("val_x"), py::arg("val_y"), py::arg("hidden") = kDefaultHiddenLayers,
      py::arg("epochs") = 300, py::arg("learning_rate") = 0.01, py::arg("seed") = 1,
      py::arg("standardize_from") = py::none());
  m.def(
      "evaluate",
      [](const MlpParameters& p, const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
        return metrics_dict(evaluate(p, dataset_of(x, y)));
      },
      py::arg("model"), py::arg("x"), py::arg("y"));
  m.def(
      "metrics",
      [](std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
        return metrics_dict(metrics_from_counts({tp, tn, fp, fn}));
      },
      py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));
  m.def(
      "roc_auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        const auto roc = roc_auc(scores, labels);
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : roc.points) pts.emplace_back(p.fpr, p.tpr);
        return py::make_tuple(pts, roc.auc);
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "advantage",
      [](const std::vector<int>& cipher, const std::vector<int>& random) {
        const auto a = advantage(cipher, random);
        py::dict d;
        d["adv"] = a.adv;
        d["epsilon"] = a.epsilon;
        d["ci"] = py::make_tuple(a.ci_low, a.ci_high);
        return d;
      },
      py::arg("cipher_decisions"), py::arg("random_decisions"));

  // experiments
  m.def("derive_seed", &derive_seed);
  m.def(
      "run_experiment",
      [](const std::string& task, const std::filesystem::path& out, const std::string& preset,
         std::optional<std::size_t> sequences, std::optional<std::size_t> n_bits, std::optional<std::vector<int>> rounds,
         std::uint64_t seed, std::optional<std::size_t> epochs) {
        auto cfg = ExperimentConfig::preset(preset, task_from_string(task));
        if (sequences) cfg.sequences_per_class = *sequences;
        if (n_bits) cfg.n_bits = *n_bits;
        if (rounds) cfg.rounds_list = *rounds;
        if (epochs) cfg.train.epochs = *epochs;
        cfg.global_seed = seed;
        TaskReport r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg, {out});
        }
        py::list rows;
        for (const auto& row : r.rows) rows.append(row_dict(row));
        return rows;
      },
      py::arg("task"), py::arg("out"), py::arg("preset") = "desk", py::arg("sequences") = py::none(),
      py::arg("n_bits") = py::none(), py::arg("rounds") = py::none(), py::arg("seed") = 42,
      py::arg("epochs") = py::none());
}
