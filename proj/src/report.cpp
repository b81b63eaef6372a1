#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "nsc/experiments.hpp"

namespace nsc {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? fixed(*v) : "undefined"; }

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> json_opt(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

constexpr double kPlotW = 640, kPlotH = 440, kLeft = 70, kRight = 190, kTop = 50, kBottom = 60;

std::string svg_open(const std::string& title) {
  std::ostringstream os;
  os << R"(<?xml version="1.0" encoding="UTF-8"?>)" << '\n'
     << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << kPlotW << R"(" height=")" << kPlotH
     << R"(" viewBox="0 0 )" << kPlotW << ' ' << kPlotH << R"(" font-family="sans-serif" font-size="12">)" << '\n'
     << R"(<rect x="0" y="0" width=")" << kPlotW << R"(" height=")" << kPlotH << R"(" fill="white"/>)" << '\n'
     << R"(<text x=")" << kPlotW / 2 << R"(" y="24" text-anchor="middle" font-size="15">)" << xml_escape(title)
     << "</text>\n";
  return os.str();
}

}  // namespace

std::string config_echo(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "task=" << to_string(cfg.task) << '\n'
     << "sequences_per_class=" << cfg.sequences_per_class << '\n'
     << "n_bits=" << cfg.n_bits << '\n'
     << "rounds=";
  for (std::size_t i = 0; i < cfg.rounds_list.size(); ++i) os << (i ? "," : "") << cfg.rounds_list[i];
  os << '\n'
     << "schema=" << cfg.schema_version << '\n'
     << "rng_mode=" << to_string(cfg.rng_mode) << '\n'
     << "global_seed=" << cfg.global_seed << '\n'
     << "key_seed=" << cfg.key_seed.value_or(0) << '\n'
     << "uniform_seed=" << cfg.uniform_seed.value_or(0) << '\n'
     << "split_seed=" << cfg.split_seed.value_or(0) << '\n'
     << "learning_rate=" << cfg.train.learning_rate << '\n'
     << "epochs=" << cfg.train.epochs << '\n'
     << "batch_size=" << cfg.train.batch_size << '\n'
     << "l2=" << cfg.train.l2 << '\n'
     << "patience=" << cfg.train.patience << '\n'
     << "train_seed=" << cfg.train.seed << '\n'
     << "tool_version=" << kToolVersion << '\n';
  return os.str();
}

std::string format_csv_row(const ReportRow& r) {
  std::ostringstream os;
  os << r.condition << ',' << r.rounds << ',' << r.model << ',' << fixed(r.accuracy) << ',' << opt(r.precision)
     << ',' << opt(r.recall) << ',' << opt(r.f1) << ',' << fixed(r.auc) << ',' << fixed(r.advantage) << ','
     << fixed(r.ci_low) << ',' << fixed(r.ci_high) << ',' << r.n_test << ',' << r.counts.tp << ',' << r.counts.tn
     << ',' << r.counts.fp << ',' << r.counts.fn;
  return os.str();
}

std::string report_to_json(const TaskReport& r) {
  json j;
  j["task"] = to_string(r.task);
  j["config_echo"] = r.config_echo;
  j["rows"] = json::array();
  for (const auto& row : r.rows) {
    j["rows"].push_back({{"condition", row.condition},
                         {"rounds", row.rounds},
                         {"model", row.model},
                         {"accuracy", row.accuracy},
                         {"precision", opt_json(row.precision)},
                         {"recall", opt_json(row.recall)},
                         {"f1", opt_json(row.f1)},
                         {"auc", row.auc},
                         {"advantage", row.advantage},
                         {"ci_low", row.ci_low},
                         {"ci_high", row.ci_high},
                         {"n_test", row.n_test},
                         {"tp", row.counts.tp},
                         {"tn", row.counts.tn},
                         {"fp", row.counts.fp},
                         {"fn", row.counts.fn},
                         {"reference", row.reference}});
  }
  j["curves"] = json::array();
  for (const auto& c : r.curves) {
    json pts = json::array();
    for (const auto& p : c.roc.points) {
      pts.push_back({p.fpr, p.tpr, std::isfinite(p.threshold) ? json(p.threshold) : json(nullptr)});
    }
    j["curves"].push_back({{"name", c.name}, {"auc", c.roc.auc}, {"points", pts}});
  }
  j["ngrams"] = json::array();
  for (const auto& g : r.ngrams) {
    j["ngrams"].push_back({{"source", g.source},
                           {"m", g.m},
                           {"entropy_ratio", g.entropy_ratio},
                           {"chi_square_z", g.chi_square_z},
                           {"distinct_ratio", g.distinct_ratio},
                           {"sequences", g.sequences}});
  }
  j["test_ids"] = r.test_ids;
  j["notes"] = r.notes;
  return j.dump(1) + "\n";
}

TaskReport report_from_json(const std::string& text) {
  TaskReport r;
  try {
    const auto j = json::parse(text);
    r.task = task_from_string(j.at("task").get<std::string>());
    r.config_echo = j.at("config_echo").get<std::string>();
    for (const auto& jr : j.at("rows")) {
      ReportRow row;
      row.condition = jr.at("condition").get<std::string>();
      row.rounds = jr.at("rounds").get<int>();
      row.model = jr.at("model").get<std::string>();
      row.accuracy = jr.at("accuracy").get<double>();
      row.precision = json_opt(jr.at("precision"));
      row.recall = json_opt(jr.at("recall"));
      row.f1 = json_opt(jr.at("f1"));
      row.auc = jr.at("auc").get<double>();
      row.advantage = jr.at("advantage").get<double>();
      row.ci_low = jr.at("ci_low").get<double>();
      row.ci_high = jr.at("ci_high").get<double>();
      row.n_test = jr.at("n_test").get<std::size_t>();
      row.counts = {jr.at("tp").get<std::uint64_t>(), jr.at("tn").get<std::uint64_t>(),
                    jr.at("fp").get<std::uint64_t>(), jr.at("fn").get<std::uint64_t>()};
      row.reference = jr.at("reference").get<bool>();
      r.rows.push_back(std::move(row));
    }
    for (const auto& jc : j.at("curves")) {
      CurveSeries c;
      c.name = jc.at("name").get<std::string>();
      c.roc.auc = jc.at("auc").get<double>();
      for (const auto& p : jc.at("points")) {
        c.roc.points.push_back({p.at(0).get<double>(), p.at(1).get<double>(),
                                p.at(2).is_null() ? std::numeric_limits<double>::infinity() : p.at(2).get<double>()});
      }
      r.curves.push_back(std::move(c));
    }
    for (const auto& jg : j.at("ngrams")) {
      r.ngrams.push_back({jg.at("source").get<std::string>(), jg.at("m").get<unsigned>(),
                          jg.at("entropy_ratio").get<double>(), jg.at("chi_square_z").get<double>(),
                          jg.at("distinct_ratio").get<double>(), jg.at("sequences").get<std::size_t>()});
    }
    r.test_ids = j.at("test_ids").get<std::map<std::string, std::vector<std::string>>>();
    r.notes = j.at("notes").get<std::vector<std::string>>();
  } catch (const json::exception& ex) {
    throw InputError(std::string("malformed report: ") + ex.what());
  }
  return r;
}

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series,
                           double x_min, double x_max, double y_min, double y_max) {
  const double pw = kPlotW - kLeft - kRight;
  const double ph = kPlotH - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * pw; };
  auto sy = [&](double y) { return kTop + ph - (y - y_min) / (y_max - y_min) * ph; };
  std::ostringstream os;
  os << svg_open(title);
  os << R"(<rect x=")" << kLeft << R"(" y=")" << kTop << R"(" width=")" << pw << R"(" height=")" << ph
     << R"(" fill="none" stroke="black"/>)" << '\n';
  for (int t = 0; t <= 5; ++t) {
    const double fx = x_min + (x_max - x_min) * t / 5.0;
    const double fy = y_min + (y_max - y_min) * t / 5.0;
    os << R"(<text x=")" << fixed(sx(fx), 1) << R"(" y=")" << fixed(kTop + ph + 16, 1)
       << R"(" text-anchor="middle">)" << fixed(fx, 2) << "</text>\n";
    os << R"(<text x=")" << fixed(kLeft - 6, 1) << R"(" y=")" << fixed(sy(fy) + 4, 1) << R"(" text-anchor="end">)"
       << fixed(fy, 2) << "</text>\n";
  }
  os << R"(<text x=")" << fixed(kLeft + pw / 2, 1) << R"(" y=")" << fixed(kPlotH - 18, 1)
     << R"(" text-anchor="middle">)" << xml_escape(x_label) << "</text>\n";
  os << R"(<text x="18" y=")" << fixed(kTop + ph / 2, 1) << R"(" text-anchor="middle" transform="rotate(-90 18 )"
     << fixed(kTop + ph / 2, 1) << R"lit()">)lit" << xml_escape(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    os << R"(<polyline fill="none" stroke=")" << color << R"(" stroke-width="2" points=")";
    for (std::size_t i = 0; i < series[s].second.size(); ++i) {
      const auto& [x, y] = series[s].second[i];
      os << (i ? " " : "") << fixed(sx(x), 2) << ',' << fixed(sy(y), 2);
    }
    os << R"("/>)" << '\n';
    const double ly = kTop + 14 + 18.0 * static_cast<double>(s);
    os << R"(<line x1=")" << fixed(kLeft + pw + 12, 1) << R"(" y1=")" << fixed(ly, 1) << R"(" x2=")"
       << fixed(kLeft + pw + 32, 1) << R"(" y2=")" << fixed(ly, 1) << R"(" stroke=")" << color
       << R"(" stroke-width="2"/>)" << '\n';
    os << R"(<text x=")" << fixed(kLeft + pw + 36, 1) << R"(" y=")" << fixed(ly + 4, 1) << R"(">)"
       << xml_escape(series[s].first) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& groups,
                          const std::vector<std::pair<std::string, std::vector<double>>>& series,
                          const std::string& y_label) {
  const double pw = kPlotW - kLeft - kRight;
  const double ph = kPlotH - kTop - kBottom;
  double y_max = 0.0;
  for (const auto& s : series) {
    for (double v : s.second) y_max = std::max(y_max, v);
  }
  y_max = y_max > 0 ? y_max * 1.1 : 1.0;
  auto sy = [&](double y) { return kTop + ph - y / y_max * ph; };
  std::ostringstream os;
  os << svg_open(title);
  os << R"(<line x1=")" << kLeft << R"(" y1=")" << kTop + ph << R"(" x2=")" << kLeft + pw << R"(" y2=")" << kTop + ph
     << R"(" stroke="black"/>)" << '\n';
  os << R"(<line x1=")" << kLeft << R"(" y1=")" << kTop << R"(" x2=")" << kLeft << R"(" y2=")" << kTop + ph
     << R"(" stroke="black"/>)" << '\n';
  for (int t = 0; t <= 5; ++t) {
    const double fy = y_max * t / 5.0;
    os << R"(<text x=")" << fixed(kLeft - 6, 1) << R"(" y=")" << fixed(sy(fy) + 4, 1) << R"(" text-anchor="end">)"
       << fixed(fy, 2) << "</text>\n";
  }
  os << R"(<text x="18" y=")" << fixed(kTop + ph / 2, 1) << R"(" text-anchor="middle" transform="rotate(-90 18 )"
     << fixed(kTop + ph / 2, 1) << R"lit()">)lit" << xml_escape(y_label) << "</text>\n";
  const double group_w = pw / static_cast<double>(std::max<std::size_t>(groups.size(), 1));
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(series.size(), 1));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = kLeft + group_w * static_cast<double>(g) + group_w * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = g < series[s].second.size() ? series[s].second[g] : 0.0;
      os << R"(<rect x=")" << fixed(gx + bar_w * static_cast<double>(s), 2) << R"(" y=")" << fixed(sy(v), 2)
         << R"(" width=")" << fixed(bar_w, 2) << R"(" height=")" << fixed(kTop + ph - sy(v), 2) << R"(" fill=")"
         << kPalette[s % std::size(kPalette)] << R"("><title>)" << xml_escape(series[s].first) << ' '
         << xml_escape(groups[g]) << ": " << fixed(v, 4) << "</title></rect>\n";
    }
    os << R"(<text x=")" << fixed(gx + group_w * 0.4, 1) << R"(" y=")" << fixed(kTop + ph + 16, 1)
       << R"(" text-anchor="middle">)" << xml_escape(groups[g]) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double ly = kTop + 14 + 18.0 * static_cast<double>(s);
    os << R"(<rect x=")" << fixed(kLeft + pw + 12, 1) << R"(" y=")" << fixed(ly - 6, 1)
       << R"(" width="14" height="12" fill=")" << kPalette[s % std::size(kPalette)] << R"("/>)" << '\n';
    os << R"(<text x=")" << fixed(kLeft + pw + 32, 1) << R"(" y=")" << fixed(ly + 4, 1) << R"(">)"
       << xml_escape(series[s].first) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_reports(const TaskReport& r, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw std::runtime_error("cannot create report directory " + out_dir.string());
  const std::string task = to_string(r.task);

  std::ostringstream table;
  table << kReportCsvHeader << '\n';
  for (const auto& row : r.rows) table << format_csv_row(row) << '\n';
  write_text(out_dir / (task + ".csv"), table.str());

  std::ostringstream roc;
  roc << "series,fpr,tpr,threshold\n";
  for (const auto& c : r.curves) {
    for (const auto& p : c.roc.points) {
      roc << c.name << ',' << fixed(p.fpr) << ',' << fixed(p.tpr) << ','
          << (std::isfinite(p.threshold) ? fixed(p.threshold, 9) : std::string("inf")) << '\n';
    }
  }
  write_text(out_dir / (task + "_roc.csv"), roc.str());

  std::ostringstream ng;
  ng << "source,m,entropy_ratio,chi_square_z,distinct_ratio,sequences\n";
  for (const auto& g : r.ngrams) {
    ng << g.source << ',' << g.m << ',' << fixed(g.entropy_ratio) << ',' << fixed(g.chi_square_z) << ','
       << fixed(g.distinct_ratio) << ',' << g.sequences << '\n';
  }
  write_text(out_dir / (task + "_ngrams.csv"), ng.str());

  {
    std::vector<std::string> groups;
    for (unsigned m : kNgramLengths) groups.push_back("m=" + std::to_string(m));
    std::vector<std::pair<std::string, std::vector<double>>> series;
    for (const auto& g : r.ngrams) {
      auto it = std::find_if(series.begin(), series.end(), [&](const auto& s) { return s.first == g.source; });
      if (it == series.end()) {
        series.push_back({g.source, {}});
        it = std::prev(series.end());
      }
      it->second.push_back(g.entropy_ratio);
    }
    write_text(out_dir / (task + "_ngrams.svg"),
               svg_bar_chart("Normalized m-gram entropy (H/m), test split", groups, series, "H / m"));
  }

  std::string figure;
  if (r.task == Task::distinguish) {
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> series;
    for (const auto& c : r.curves) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& p : c.roc.points) pts.emplace_back(p.fpr, p.tpr);
      series.push_back({c.name + " (AUC " + fixed(c.roc.auc, 3) + ")", pts});
    }
    series.push_back({"chance", {{0.0, 0.0}, {1.0, 1.0}}});
    figure = svg_line_chart("ROC curve", "False positive rate", "True positive rate", series, 0, 1, 0, 1);
  } else if (r.task == Task::rounds_sweep) {
    std::map<std::string, std::vector<std::pair<double, double>>> by_model;
    double x_min = 1e9, x_max = -1e9;
    for (const auto& row : r.rows) {
      if (row.reference) continue;
      by_model[row.model].emplace_back(row.rounds, row.accuracy);
      x_min = std::min(x_min, static_cast<double>(row.rounds));
      x_max = std::max(x_max, static_cast<double>(row.rounds));
    }
    if (x_max <= x_min) x_max = x_min + 1;
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> series(by_model.begin(),
                                                                                        by_model.end());
    series.push_back({"chance", {{x_min, 0.5}, {x_max, 0.5}}});
    figure = svg_line_chart("Accuracy vs rounds", "Rounds", "Accuracy", series, x_min, x_max, 0.4, 1.0);
  } else {
    std::vector<std::string> groups;
    std::map<std::string, std::vector<double>> by_model;
    for (const auto& row : r.rows) {
      if (row.reference) continue;
      if (std::find(groups.begin(), groups.end(), row.condition) == groups.end()) groups.push_back(row.condition);
      by_model[row.model].push_back(row.accuracy);
    }
    std::vector<std::pair<std::string, std::vector<double>>> series(by_model.begin(), by_model.end());
    figure = svg_bar_chart("Variant comparison accuracy", groups, series, "Accuracy");
  }
  write_text(out_dir / (task + ".svg"), figure);

  std::ostringstream ids;
  for (const auto& [cond, list] : r.test_ids) {
    for (const auto& id : list) ids << cond << ' ' << id << '\n';
  }
  write_text(out_dir / (task + "_test_ids.txt"), ids.str());
  write_text(out_dir / (task + ".json"), report_to_json(r));

  std::ostringstream sum;
  sum << "# run summary: " << task << "\n\n[config]\n" << r.config_echo << "\n[results]\n" << kReportCsvHeader << '\n';
  for (const auto& row : r.rows) sum << format_csv_row(row) << (row.reference ? "  (reference)" : "") << '\n';
  std::size_t n_ids = 0;
  for (const auto& [cond, list] : r.test_ids) n_ids += list.size();
  sum << "\n[audit]\ntest_entries=" << n_ids << '\n';
  sum << "\n[notes]\n";
  for (const auto& n : r.notes) sum << "- " << n << '\n';
  write_text(out_dir / "summary.txt", sum.str());
}

}  // namespace nsc
