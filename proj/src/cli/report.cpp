#include <fstream>
#include <map>
#include <sstream>

#include "rlcf/cli/cli.hpp"
#include "rlcf/core/rng.hpp"

namespace rlcf::cli {

namespace fs = std::filesystem;

namespace {

struct EvalInput {
  std::string dir;
  std::string method;
  eval::EvalReport report;
};

struct SeriesRow {
  std::string method;
  std::string dir;
  std::int64_t episode = 0;
  double compile_rate = 0;
  std::vector<double> errors;
};

std::string unique_method(std::map<std::string, int>& seen, const std::string& m) {
  const int n = seen[m]++;
  return n == 0 ? m : m + "#" + std::to_string(n + 1);
}

}  // namespace

ReportSummary emit_report(const std::vector<fs::path>& run_dirs, const fs::path& out) {
  ReportSummary s;
  std::vector<EvalInput> evals;
  std::vector<SeriesRow> series;
  std::map<std::string, int> eval_names, series_names;
  std::string hash_input;

  for (const auto& dir : run_dirs) {
    bool any = false;
    const fs::path ej = dir / "eval.json";
    if (fs::exists(ej)) {
      try {
        std::ifstream in(ej);
        const json j = json::parse(in);
        EvalInput e{dir.string(), unique_method(eval_names, j.value("method", dir.filename().string())),
                    eval::report_from_json(j)};
        hash_input += j.value("config_hash", "") + "|";
        evals.push_back(std::move(e));
        ++s.eval_reports;
        any = true;
      } catch (const std::exception& ex) {
        s.problems.push_back(dir.string() + ": unreadable eval.json (" + ex.what() + ")");
      }
    }
    const fs::path mj = dir / "metrics.jsonl";
    if (fs::exists(mj)) {
      std::ifstream in(mj);
      std::string method = dir.filename().string();
      bool header = false;
      int rows = 0;
      for (std::string line; std::getline(in, line);) {
        const json j = json::parse(line, nullptr, false);
        if (!j.is_object()) continue;
        if (j.value("type", "") == "header") {
          method = unique_method(series_names, j.value("method", method));
          hash_input += std::to_string(j.value("config_hash", std::uint64_t{0})) + "|";
          header = true;
          continue;
        }
        if (j.value("type", "") != "batch") continue;
        SeriesRow r{method, dir.string(), j.value("episode", std::int64_t{0}), j.value("compile_rate", 0.0), {}};
        if (j.contains("errors_per_response")) r.errors = j["errors_per_response"].get<std::vector<double>>();
        series.push_back(std::move(r));
        ++rows;
      }
      if (!header) s.problems.push_back(dir.string() + ": metrics.jsonl has no header line");
      if (rows > 0) {
        ++s.metric_streams;
        any = true;
      }
    }
    if (!any) s.problems.push_back(dir.string() + ": no eval.json or metrics.jsonl");
  }

  // Comparisons are only meaningful on a shared grid.
  for (std::size_t i = 1; i < evals.size(); ++i) {
    const auto& a = evals.front().report.config;
    const auto& b = evals[i].report.config;
    if (a.ks != b.ks || a.temperatures != b.temperatures || a.n != b.n) {
      s.problems.push_back(evals[i].dir + ": k/temperature grid differs from " + evals.front().dir);
    }
  }

  const std::uint64_t hash = fnv1a64(hash_input);
  const std::string head = std::string("# rlcf-report v1 ") + kToolVersion + " config_hash=" + hex_hash(hash) + "\n";

  std::ostringstream comparison, best, errs;
  comparison << head;
  best << head << "method,metric,k,value,temperature\n";
  for (std::size_t i = 0; i < evals.size(); ++i) {
    comparison << eval::table_csv(evals[i].report, evals[i].method, i == 0);
    const auto& r = evals[i].report;
    best.precision(10);
    const std::pair<const char*, const std::map<int, double>*> rows[] = {
        {"pass", &r.best.pass}, {"exec", &r.best.exec}, {"comp", &r.best.comp}};
    for (const auto& [name, m] : rows) {
      for (const auto& [k, v] : *m) {
        best << evals[i].method << ',' << name << ',' << k << ',' << v << ',' << r.chosen_temperature.at(k) << '\n';
      }
    }
  }
  errs << head << "method,episode,compile_error_rate";
  for (int k = 0; k < minilang::kNumDiagKinds; ++k) errs << ',' << minilang::to_string(static_cast<minilang::DiagKind>(k));
  errs << '\n';
  errs.precision(10);
  for (const auto& r : series) {
    errs << r.method << ',' << r.episode << ',' << 1.0 - r.compile_rate;
    for (int k = 0; k < minilang::kNumDiagKinds; ++k) {
      errs << ',' << (static_cast<std::size_t>(k) < r.errors.size() ? r.errors[static_cast<std::size_t>(k)] : 0.0);
    }
    errs << '\n';
  }

  auto write = [](const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
  };
  write(out / "comparison.csv", comparison.str());
  write(out / "best.csv", best.str());
  write(out / "error_series.csv", errs.str());

  json j{{"format", "rlcf-report"},
         {"version", 1},
         {"tool_version", kToolVersion},
         {"config_hash", hex_hash(hash)},
         {"runs", json::array()},
         {"problems", s.problems}};
  for (const auto& e : evals) j["runs"].push_back({{"dir", e.dir}, {"method", e.method}, {"kind", "eval"}});
  std::map<std::string, int> lengths;
  for (const auto& r : series) ++lengths[r.method];
  for (const auto& [m, n] : lengths) j["runs"].push_back({{"method", m}, {"kind", "metrics"}, {"batches", n}});
  write(out / "report.json", j.dump(2) + "\n");
  return s;
}

}  // namespace rlcf::cli
