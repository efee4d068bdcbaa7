#ifndef RLCF_BASELINES_BASELINES_HPP_
#define RLCF_BASELINES_BASELINES_HPP_

#include <optional>
#include <vector>

#include "rlcf/train/train.hpp"

namespace rlcf::baselines {

using minilang::TokenSeq;
using nn::ModelParams;
using taskgen::Example;

// Shared budget: `episodes` sampled (or reference) sequences consumed in
// batches of `batch_size`, so one optimizer step per batch.
struct BaselineConfig {
  int episodes = 2000;
  int batch_size = 8;
  double lr = 3e-4;
  double temperature = 0.6;
  double top_p = 0.95;
  int horizon = 64;
  // Mono only: stop after this many reference tokens (0 = sequence budget).
  std::int64_t token_budget = 0;
  std::uint64_t seed = 0;
  nn::AdamWConfig optim;

  void validate() const;
  std::uint64_t hash(const char* method) const;
};

// --- Mono ------------------------------------------------------------------

// Supervised coarse-tuning for the same number of sequences as an RLCF run.
train::SupervisedConfig mono_config(const BaselineConfig& c, int epochs);
void train_mono(ModelParams& policy, const std::vector<Example>& corpus, const BaselineConfig& config,
                train::MetricsWriter* metrics = nullptr);

// --- token-wise Bipolar RAMP ----------------------------------------------

// Response-relative index of the compiler-blamed token of y, if it fails.
std::optional<std::size_t> failure_token(const TokenSeq& prompt, const TokenSeq& response);

struct RampItem {
  const Example* example = nullptr;
  TokenSeq negative;                    // sampled y-
  std::optional<std::size_t> fail_at;  // tau- support
};

// Token-mean NLL of the references plus the log-likelihood of each failing
// sample's blamed token (minimizing pushes that token down).
nn::Var ramp_loss(nn::Tape& tape, const ModelParams& policy, const std::vector<RampItem>& batch);

void train_bipolar_ramp(ModelParams& policy, const std::vector<Example>& corpus, const BaselineConfig& config,
                        train::MetricsWriter* metrics = nullptr);

// --- CodeRL with compile-only returns ---------------------------------------

struct LabeledSample {
  TokenSeq prompt;
  TokenSeq response;
  bool compiles = false;
};

struct CriticTrainConfig {
  int samples = 4000;
  double temperature = 0.6;
  double top_p = 0.95;
  int horizon = 64;
  int epochs = 3;
  double lr = 3e-4;
  int batch_size = 16;
  std::uint64_t seed = 0;
  nn::AdamWConfig optim;
};

std::vector<LabeledSample> collect_compile_samples(const ModelParams& policy, const std::vector<Example>& corpus,
                                                   const CriticTrainConfig& config);
// BCE on the pooled compile logit. Returns per-step losses.
std::vector<double> train_compile_critic(ModelParams& critic, const std::vector<LabeledSample>& data,
                                         const CriticTrainConfig& config);
// Pooled probability > 0.5 agrees with the label.
double compile_critic_accuracy(const ModelParams& critic, const std::vector<LabeledSample>& data);
double compile_probability(const ModelParams& critic, const TokenSeq& prompt, const TokenSeq& response);
// Per-token p_t over the response.
std::vector<double> token_compile_probabilities(const ModelParams& critic, const TokenSeq& prompt,
                                                const TokenSeq& response);

inline double compile_return(bool compiles) { return compiles ? 1.0 : -1.0; }

// (r(y') - r(y_b)) * vhat_t, vhat_t = p_t if y' compiles else 1 - p_t.
std::vector<double> coderl_coefficients(const ModelParams& critic, const TokenSeq& prompt, const TokenSeq& sample,
                                        bool sample_compiles, bool baseline_compiles);

struct CodeRlItem {
  TokenSeq prompt;
  TokenSeq sample;
  std::vector<double> coefficients;
};

// -(1/tokens) sum_t c_t log p(y'_t).
nn::Var coderl_loss(nn::Tape& tape, const ModelParams& policy, const std::vector<CodeRlItem>& batch);

void train_coderl(ModelParams& policy, const ModelParams& critic, const std::vector<Example>& corpus,
                  const BaselineConfig& config, train::MetricsWriter* metrics = nullptr);

}  // namespace rlcf::baselines

#endif  // RLCF_BASELINES_BASELINES_HPP_
