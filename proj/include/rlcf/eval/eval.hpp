#ifndef RLCF_EVAL_EVAL_HPP_
#define RLCF_EVAL_EVAL_HPP_

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlcf/core/rng.hpp"
#include "rlcf/nn/model.hpp"
#include "rlcf/taskgen/taskgen.hpp"
#include "rlcf/train/train.hpp"

namespace rlcf::eval {

using minilang::TokenSeq;
using taskgen::TaskSample;

// Unbiased estimate of P(at least one of k draws is good) from n samples
// with c good: 1 - prod_{i=n-c+1..n} (1 - k/i). Throws if k > n.
double metric_at_k(int n, int c, int k);

// comp: compiles; exec: compiles and every hidden test completes;
// pass: exec and every output matches.
struct Tier {
  bool comp = false;
  bool exec = false;
  bool pass = false;
};

Tier classify(const TaskSample& task, const TokenSeq& response);

struct EvalConfig {
  int n = 20;
  std::vector<int> ks = {1, 5, 10};
  std::vector<double> temperatures = {0.2, 0.6, 0.8};
  double top_p = 0.95;
  int horizon = 64;
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const;
};

struct TierCounts {
  int comp = 0;
  int exec = 0;
  int pass = 0;
};

struct MetricSet {
  std::map<int, double> pass;
  std::map<int, double> exec;
  std::map<int, double> comp;
};

struct TemperatureResult {
  double temperature = 0.0;
  MetricSet metrics;
  std::vector<TierCounts> per_task;
};

inline constexpr int kNumDiagKinds = minilang::kNumDiagKinds;

struct ErrorProfile {
  std::int64_t responses = 0;
  std::array<std::int64_t, kNumDiagKinds> totals{};
  // totals / responses, indexed by minilang::DiagKind.
  std::array<double, kNumDiagKinds> mean_per_response{};
};

struct EvalReport {
  EvalConfig config;
  std::size_t num_tasks = 0;
  std::vector<TemperatureResult> by_temperature;
  // Per k: metrics at the temperature with the best pass@k.
  MetricSet best;
  std::map<int, double> chosen_temperature;
  // Diagnostics over every sampled response (all temperatures).
  ErrorProfile errors;
};

// Produces the s-th response for a task at a temperature. Tests use stubs;
// policy_source wraps nucleus sampling.
using ResponseSource =
    std::function<TokenSeq(const TaskSample& task, int sample_index, double temperature, Rng& rng)>;

ResponseSource policy_source(const nn::ModelParams& policy, double top_p, int horizon);

EvalReport evaluate(const std::vector<TaskSample>& tasks, const ResponseSource& source, const EvalConfig& config);
EvalReport evaluate_model(const nn::ModelParams& policy, const std::vector<TaskSample>& tasks, const EvalConfig& config);

// Accumulates diagnostics of one response into a profile (means refreshed).
void add_to_profile(ErrorProfile& profile, const minilang::CompileResult& result);
ErrorProfile error_profile(const std::vector<TaskSample>& tasks, const ResponseSource& source, int n,
                           double temperature, std::uint64_t seed);
ErrorProfile error_profile(const nn::ModelParams& policy, const std::vector<TaskSample>& tasks, int n,
                           double temperature, std::uint64_t seed, double top_p = 0.95, int horizon = 64);

// Supervised fine-tuning on the fine-tune split before testing.
void finetune(nn::ModelParams& policy, const std::vector<TaskSample>& finetune_split,
              const train::SupervisedConfig& config);

nlohmann::json to_json(const ErrorProfile& p);
nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
// Flat table: method,metric,k,temperature,value (one row per grid point).
std::string table_csv(const EvalReport& r, const std::string& method, bool header = true);

}  // namespace rlcf::eval

#endif  // RLCF_EVAL_EVAL_HPP_
