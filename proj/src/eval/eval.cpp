#include "rlcf/eval/eval.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "rlcf/nn/sampling.hpp"

namespace rlcf::eval {

using nlohmann::json;

double metric_at_k(int n, int c, int k) {
  if (n < 0 || c < 0 || c > n) throw std::invalid_argument("metric_at_k: need 0 <= c <= n");
  if (k < 1 || k > n) throw std::invalid_argument("metric_at_k: need 1 <= k <= n");
  if (n - c < k) return 1.0;
  double prod = 1.0;
  for (int i = n - c + 1; i <= n; ++i) prod *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  return 1.0 - prod;
}

Tier classify(const TaskSample& task, const TokenSeq& response) {
  Tier t;
  const TokenSeq code = minilang::checked_sequence(task.prompt, response);
  minilang::ParseOutput parsed = minilang::parse_program(code);
  if (!parsed.result.ok || !parsed.program) return t;
  t.comp = true;
  bool completed = true, matched = true;
  for (const auto& test : task.tests) {
    minilang::ExecResult r = minilang::execute(*parsed.program, test.input);
    if (r.status != minilang::ExecStatus::Completed) {
      completed = false;
      break;
    }
    if (r.outputs != test.expected) matched = false;
  }
  t.exec = completed;
  t.pass = completed && matched;
  return t;
}

void EvalConfig::validate() const {
  if (ks.empty()) throw std::invalid_argument("eval: empty k list");
  for (int k : ks) {
    if (k < 1) throw std::invalid_argument("eval: k must be >= 1");
    if (!(n > k)) throw std::invalid_argument("eval: n must exceed every k");
  }
  if (temperatures.empty()) throw std::invalid_argument("eval: no temperatures");
  for (double t : temperatures) {
    if (!(t > 0.0)) throw std::invalid_argument("eval: temperatures must be positive");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("eval: top_p must be in (0, 1]");
  if (horizon <= 0) throw std::invalid_argument("eval: horizon must be positive");
  if (workers <= 0) throw std::invalid_argument("eval: workers must be positive");
}

ResponseSource policy_source(const nn::ModelParams& policy, double top_p, int horizon) {
  return [&policy, top_p, horizon](const TaskSample& task, int, double temperature, Rng& rng) {
    nn::SamplingConfig sc;
    sc.temperature = temperature;
    sc.top_p = top_p;
    sc.max_len = horizon;
    return nn::sample_response(policy, task.prompt, sc, rng).tokens;
  };
}

void add_to_profile(ErrorProfile& p, const minilang::CompileResult& result) {
  for (const auto& d : result.diagnostics) ++p.totals[static_cast<std::size_t>(d.kind)];
  ++p.responses;
  for (int i = 0; i < kNumDiagKinds; ++i) {
    p.mean_per_response[static_cast<std::size_t>(i)] =
        static_cast<double>(p.totals[static_cast<std::size_t>(i)]) / static_cast<double>(p.responses);
  }
}

namespace {

std::uint64_t sample_index(std::size_t task, std::size_t temp, std::size_t ntemps, int n, int s) {
  return (static_cast<std::uint64_t>(task) * ntemps + temp) * static_cast<std::uint64_t>(n) +
         static_cast<std::uint64_t>(s);
}

struct TaskOutcome {
  std::vector<TierCounts> per_temp;
  std::array<std::int64_t, kNumDiagKinds> totals{};
  std::int64_t responses = 0;
};

TaskOutcome run_task(const std::vector<TaskSample>& tasks, std::size_t ti, const ResponseSource& source,
                     const EvalConfig& c) {
  TaskOutcome out;
  out.per_temp.resize(c.temperatures.size());
  for (std::size_t j = 0; j < c.temperatures.size(); ++j) {
    for (int s = 0; s < c.n; ++s) {
      Rng rng = make_rng(c.seed, "eval-sample", sample_index(ti, j, c.temperatures.size(), c.n, s));
      const TokenSeq y = source(tasks[ti], s, c.temperatures[j], rng);
      const minilang::CompileResult cr = minilang::compile_check(tasks[ti].prompt, y);
      for (const auto& d : cr.diagnostics) ++out.totals[static_cast<std::size_t>(d.kind)];
      ++out.responses;
      const Tier t = classify(tasks[ti], y);
      out.per_temp[j].comp += t.comp;
      out.per_temp[j].exec += t.exec;
      out.per_temp[j].pass += t.pass;
    }
  }
  return out;
}

template <class F>
void parallel_for(std::size_t count, int workers, F&& f) {
  workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = static_cast<std::size_t>(w); i < count; i += static_cast<std::size_t>(workers)) f(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

EvalReport evaluate(const std::vector<TaskSample>& tasks, const ResponseSource& source, const EvalConfig& config) {
  config.validate();
  if (tasks.empty()) throw std::invalid_argument("evaluate: no tasks");
  std::vector<TaskOutcome> outcomes(tasks.size());
  parallel_for(tasks.size(), config.workers, [&](std::size_t i) { outcomes[i] = run_task(tasks, i, source, config); });

  EvalReport r;
  r.config = config;
  r.num_tasks = tasks.size();
  const double nt = static_cast<double>(tasks.size());
  for (std::size_t j = 0; j < config.temperatures.size(); ++j) {
    TemperatureResult tr;
    tr.temperature = config.temperatures[j];
    for (const auto& o : outcomes) tr.per_task.push_back(o.per_temp[j]);
    for (int k : config.ks) {
      double p = 0, e = 0, c = 0;
      for (const auto& tc : tr.per_task) {
        p += metric_at_k(config.n, tc.pass, k);
        e += metric_at_k(config.n, tc.exec, k);
        c += metric_at_k(config.n, tc.comp, k);
      }
      tr.metrics.pass[k] = p / nt;
      tr.metrics.exec[k] = e / nt;
      tr.metrics.comp[k] = c / nt;
    }
    r.by_temperature.push_back(std::move(tr));
  }
  for (int k : config.ks) {
    // Ties go to the first temperature listed.
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.by_temperature.size(); ++j) {
      if (r.by_temperature[j].metrics.pass.at(k) > r.by_temperature[best].metrics.pass.at(k)) best = j;
    }
    const auto& m = r.by_temperature[best].metrics;
    r.best.pass[k] = m.pass.at(k);
    r.best.exec[k] = m.exec.at(k);
    r.best.comp[k] = m.comp.at(k);
    r.chosen_temperature[k] = r.by_temperature[best].temperature;
  }
  for (const auto& o : outcomes) {
    for (int i = 0; i < kNumDiagKinds; ++i) r.errors.totals[static_cast<std::size_t>(i)] += o.totals[static_cast<std::size_t>(i)];
    r.errors.responses += o.responses;
  }
  for (int i = 0; i < kNumDiagKinds; ++i) {
    r.errors.mean_per_response[static_cast<std::size_t>(i)] =
        static_cast<double>(r.errors.totals[static_cast<std::size_t>(i)]) / static_cast<double>(r.errors.responses);
  }
  return r;
}

EvalReport evaluate_model(const nn::ModelParams& policy, const std::vector<TaskSample>& tasks,
                          const EvalConfig& config) {
  return evaluate(tasks, policy_source(policy, config.top_p, config.horizon), config);
}

ErrorProfile error_profile(const std::vector<TaskSample>& tasks, const ResponseSource& source, int n,
                           double temperature, std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("error_profile: n must be positive");
  ErrorProfile p;
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    for (int s = 0; s < n; ++s) {
      Rng rng = make_rng(seed, "profile-sample", sample_index(ti, 0, 1, n, s));
      add_to_profile(p, minilang::compile_check(tasks[ti].prompt, source(tasks[ti], s, temperature, rng)));
    }
  }
  return p;
}

ErrorProfile error_profile(const nn::ModelParams& policy, const std::vector<TaskSample>& tasks, int n,
                           double temperature, std::uint64_t seed, double top_p, int horizon) {
  return error_profile(tasks, policy_source(policy, top_p, horizon), n, temperature, seed);
}

void finetune(nn::ModelParams& policy, const std::vector<TaskSample>& finetune_split,
              const train::SupervisedConfig& config) {
  if (finetune_split.empty()) return;
  train::bootstrap_supervised(policy, taskgen::training_view(finetune_split), config);
}

// --- serialization ---------------------------------------------------------

namespace {

json metric_map(const std::map<int, double>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

std::map<int, double> metric_map_from(const json& j) {
  std::map<int, double> m;
  for (auto it = j.begin(); it != j.end(); ++it) m[std::stoi(it.key())] = it.value().get<double>();
  return m;
}

json metric_set(const MetricSet& m) {
  return {{"pass", metric_map(m.pass)}, {"exec", metric_map(m.exec)}, {"comp", metric_map(m.comp)}};
}

MetricSet metric_set_from(const json& j) {
  return {metric_map_from(j.at("pass")), metric_map_from(j.at("exec")), metric_map_from(j.at("comp"))};
}

}  // namespace

json to_json(const ErrorProfile& p) {
  json totals = json::object(), means = json::object();
  for (int i = 0; i < kNumDiagKinds; ++i) {
    const char* name = minilang::to_string(static_cast<minilang::DiagKind>(i));
    totals[name] = p.totals[static_cast<std::size_t>(i)];
    means[name] = p.mean_per_response[static_cast<std::size_t>(i)];
  }
  return {{"responses", p.responses}, {"totals", totals}, {"mean_per_response", means}};
}

namespace {

ErrorProfile profile_from(const json& j) {
  ErrorProfile p;
  p.responses = j.at("responses").get<std::int64_t>();
  for (int i = 0; i < kNumDiagKinds; ++i) {
    const char* name = minilang::to_string(static_cast<minilang::DiagKind>(i));
    p.totals[static_cast<std::size_t>(i)] = j.at("totals").at(name).get<std::int64_t>();
    p.mean_per_response[static_cast<std::size_t>(i)] = j.at("mean_per_response").at(name).get<double>();
  }
  return p;
}

}  // namespace

json to_json(const EvalReport& r) {
  json temps = json::array();
  for (const auto& t : r.by_temperature) {
    json counts = json::array();
    for (const auto& c : t.per_task) counts.push_back({c.comp, c.exec, c.pass});
    temps.push_back({{"temperature", t.temperature}, {"metrics", metric_set(t.metrics)}, {"per_task", counts}});
  }
  json chosen = json::object();
  for (const auto& [k, v] : r.chosen_temperature) chosen[std::to_string(k)] = v;
  return {{"format", "rlcf-eval-report"},
          {"version", 1},
          {"n", r.config.n},
          {"ks", r.config.ks},
          {"temperatures", r.config.temperatures},
          {"top_p", r.config.top_p},
          {"horizon", r.config.horizon},
          {"seed", r.config.seed},
          {"num_tasks", r.num_tasks},
          {"best", metric_set(r.best)},
          {"chosen_temperature", chosen},
          {"by_temperature", temps},
          {"errors", to_json(r.errors)}};
}

EvalReport report_from_json(const json& j) {
  if (j.value("format", "") != "rlcf-eval-report") throw std::runtime_error("not an eval report");
  EvalReport r;
  r.config.n = j.at("n").get<int>();
  r.config.ks = j.at("ks").get<std::vector<int>>();
  r.config.temperatures = j.at("temperatures").get<std::vector<double>>();
  r.config.top_p = j.at("top_p").get<double>();
  r.config.horizon = j.at("horizon").get<int>();
  r.config.seed = j.at("seed").get<std::uint64_t>();
  r.num_tasks = j.at("num_tasks").get<std::size_t>();
  r.best = metric_set_from(j.at("best"));
  r.chosen_temperature = metric_map_from(j.at("chosen_temperature"));
  for (const auto& t : j.at("by_temperature")) {
    TemperatureResult tr;
    tr.temperature = t.at("temperature").get<double>();
    tr.metrics = metric_set_from(t.at("metrics"));
    for (const auto& c : t.at("per_task")) tr.per_task.push_back({c[0].get<int>(), c[1].get<int>(), c[2].get<int>()});
    r.by_temperature.push_back(std::move(tr));
  }
  r.errors = profile_from(j.at("errors"));
  return r;
}

std::string table_csv(const EvalReport& r, const std::string& method, bool header) {
  std::ostringstream s;
  s.precision(10);
  if (header) s << "method,metric,k,temperature,value,chosen\n";
  for (const auto& t : r.by_temperature) {
    const std::pair<const char*, const std::map<int, double>*> rows[] = {
        {"pass", &t.metrics.pass}, {"exec", &t.metrics.exec}, {"comp", &t.metrics.comp}};
    for (const auto& [name, m] : rows) {
      for (const auto& [k, v] : *m) {
        const bool chosen = r.chosen_temperature.count(k) && r.chosen_temperature.at(k) == t.temperature;
        s << method << ',' << name << ',' << k << ',' << t.temperature << ',' << v << ',' << (chosen ? 1 : 0) << '\n';
      }
    }
  }
  return s.str();
}

}  // namespace rlcf::eval
