#ifndef RLCF_CLI_CLI_HPP_
#define RLCF_CLI_CLI_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlcf/baselines/baselines.hpp"
#include "rlcf/eval/eval.hpp"
#include "rlcf/train/train.hpp"

namespace rlcf::cli {

inline constexpr const char* kToolVersion = "rlcf 1.0.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Bad flags, bad config values, missing inputs: exit 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- run configuration -------------------------------------------------------
//
// A RunConfig is a JSON object with fixed sections (see default_config). Every
// leaf has a schema entry giving its type and range; unknown keys are errors.

using nlohmann::json;

json default_config();

// Throws UsageError naming the first offending key.
void validate_config(const json& config);

// Defaults overlaid with the file's values (an unknown key is an error).
json load_config(const std::filesystem::path& path);

// "a.b=value" override. The value is parsed as JSON when it parses, else
// taken as a string.
void apply_override(json& config, const std::string& assignment);

// Stages that own a subset of the config; the hash of a stage covers the
// seed plus every section the stage (and its upstream stages) reads.
enum class Stage { Data, Bootstrap, Disc, Train, Eval, Profile };

std::uint64_t config_hash(const json& config, Stage stage, const std::string& method = "");
std::string hex_hash(std::uint64_t h);

// Typed views of the sections.
taskgen::CorpusSizes corpus_sizes(const json& c);
nn::ModelConfig model_config(const json& c);
train::SupervisedConfig bootstrap_config(const json& c);
train::DiscPretrainConfig disc_config(const json& c);
// The method picks feedback source and the freeze switch.
train::RlcfConfig rlcf_config(const json& c, const std::string& method);
baselines::BaselineConfig baseline_config(const json& c);
baselines::CriticTrainConfig critic_config(const json& c);
eval::EvalConfig eval_config(const json& c);
train::SupervisedConfig eval_finetune_config(const json& c);

const std::vector<std::string>& train_methods();

// --- report -------------------------------------------------------------------

struct ReportSummary {
  int eval_reports = 0;
  int metric_streams = 0;
  std::vector<std::string> problems;  // one line per missing or unreadable input
};

// Reads eval.json and metrics.jsonl from each run directory and writes
// comparison.csv, best.csv, error_series.csv and report.json into out.
ReportSummary emit_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out);

// --- entry point ----------------------------------------------------------------

// args excludes the program name. Diagnostics go to err.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rlcf::cli

#endif  // RLCF_CLI_CLI_HPP_
