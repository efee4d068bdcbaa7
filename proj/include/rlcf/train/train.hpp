#ifndef RLCF_TRAIN_TRAIN_HPP_
#define RLCF_TRAIN_TRAIN_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rlcf/grounding/grounding.hpp"
#include "rlcf/nn/model.hpp"
#include "rlcf/nn/optim.hpp"
#include "rlcf/taskgen/taskgen.hpp"

namespace rlcf::train {

using grounding::Trajectory;
using nn::ModelParams;
using taskgen::Example;

// ---------------------------------------------------------------------------
// Supervised bootstrap (also the Mono baseline and the fine-tune stage).

struct SupervisedConfig {
  int epochs = 8;
  double lr = 1e-3;
  int batch_size = 8;
  std::uint64_t seed = 0;
  // Stop after this many sequences (0 = run all epochs). Used to match the
  // RLCF sequence budget.
  std::int64_t max_sequences = 0;
  // Stop once this many reference tokens have been trained on (0 = off).
  std::int64_t max_tokens = 0;
  nn::AdamWConfig optim;
};

struct SupervisedStep {
  std::int64_t step = 0;
  double loss_before = 0.0;  // mean token NLL of the batch before the update
  const std::vector<const Example*>* batch = nullptr;  // valid during the callback
};

// Mean per-token negative log-likelihood of the references.
nn::Var supervised_loss(nn::Tape& tape, const ModelParams& policy, const std::vector<const Example*>& batch);
double supervised_loss(const ModelParams& policy, const std::vector<Example>& data);

// Token-level cross-entropy training on (prompt, reference) pairs with a
// fresh optimizer and linear decay over the whole run. Shuffles each epoch
// from (seed, epoch).
void bootstrap_supervised(ModelParams& policy, const std::vector<Example>& data, const SupervisedConfig& config,
                          const std::function<void(const SupervisedStep&)>& on_step = {});

// ---------------------------------------------------------------------------
// Discriminator pretraining.

struct DiscPretrainConfig {
  int triplet_epochs = 6;
  double triplet_lr = 3e-4;
  double margin = 0.5;
  int adv_epochs = 5;
  double adv_lr = 1.5e-4;
  double temperature = 0.6;
  double top_p = 0.95;
  int horizon = 64;
  int batch_size = 8;
  std::uint64_t seed = 0;
  nn::AdamWConfig optim;
};

struct DiscPretrainReport {
  std::vector<double> triplet_losses;  // per step
  std::vector<double> adv_losses;      // per step, mean D(x, y', y)
};

// max(0, |a - p|^2 - |a - n|^2 + margin).
nn::Var triplet_loss(nn::Var anchor, nn::Var positive, nn::Var negative, double margin);

// Fraction of triples whose anchor is closer to the positive.
double triplet_accuracy(const ModelParams& disc, const std::vector<taskgen::EquivalenceTriple>& triples);

// Mean D(x, y', y) over pairs (lower = references preferred).
double mean_disc_score(const ModelParams& disc, const std::vector<Example>& data,
                       const std::vector<minilang::TokenSeq>& samples);

// Phase 1 on equivalence triples, then phase 2 minimizing D(x, y', y) against
// samples from the (bootstrapped) policy.
DiscPretrainReport pretrain_discriminator(ModelParams& disc, const std::vector<taskgen::TaskSample>& corpus,
                                          const ModelParams& policy, const DiscPretrainConfig& config);

// ---------------------------------------------------------------------------
// PPO pieces.

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma v_{t+1} - v_t with v_{T+1} = 0;
// A_t = sum_l (gamma lambda)^l delta_{t+l}; G_t = A_t + v_t.
GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values, double gamma, double lambda);

// min(rho A, clip(rho, 1-eps, 1+eps) A).
double ppo_clip_term(double ratio, double advantage, double eps);

// Normalizes advantages across all tokens of the batch (zero mean, unit
// variance); leaves them centred only when the variance is ~0.
void normalize_advantages(std::vector<Trajectory>& batch);

// One or more gradient steps on the summed clipped surrogate averaged per
// token. Returns the loss of the first epoch.
double ppo_policy_update(ModelParams& policy, const std::vector<Trajectory>& batch, double eps, double lr,
                         std::int64_t schedule_step, const nn::AdamWConfig& optim, int epochs = 1);

// Per-token mean of (G_j - v_j)^2.
double critic_loss(const ModelParams& critic, const std::vector<Trajectory>& batch);
double critic_update(ModelParams& critic, const std::vector<Trajectory>& batch, double lr, std::int64_t schedule_step,
                     const nn::AdamWConfig& optim);

inline constexpr double kDefaultKlGain = 0.1;

// beta (1 + K_p clip((kl - target) / target, -0.2, 0.2)).
double adapt_kl(double beta, double observed_kl, double kl_target, double kp = kDefaultKlGain);

// One adversarial step minimizing mean D(x, y', y); returns the pre-step loss.
double discriminator_step(ModelParams& disc, const std::vector<const Example*>& examples,
                          const std::vector<minilang::TokenSeq>& samples, double lr, std::int64_t schedule_step,
                          const nn::AdamWConfig& optim);

// ---------------------------------------------------------------------------
// The RLCF episode loop.

struct RlcfConfig {
  int episodes = 2000;
  int batch_size = 8;
  double lr_policy = 3e-4;
  double lr_critic = 3e-4;
  double lr_disc = 1.5e-4;
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  double beta_init = 0.1;
  double kl_target = 0.05;
  double kl_gain = kDefaultKlGain;
  bool adaptive_kl = true;
  bool freeze_disc = false;
  int horizon = 64;
  int ppo_epochs = 1;
  double unused_penalty = grounding::kDefaultUnusedPenalty;
  // Rollout sampling; matches the discriminator's phase-2 samples.
  double temperature = 0.6;
  double top_p = 0.95;
  grounding::RolloutConfig rollout;
  std::uint64_t seed = 0;
  int workers = 1;
  int checkpoint_every = 0;  // batches; 0 disables
  std::filesystem::path checkpoint_path;
  nn::AdamWConfig optim;

  void validate() const;
  // FNV-1a over every semantically relevant field.
  std::uint64_t hash() const;
};

struct BatchMetrics {
  std::int64_t episode = 0;  // episodes completed after this batch
  double mean_reward = 0.0;
  double compile_rate = 0.0;
  double mean_kl = 0.0;
  double beta = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double disc_loss = 0.0;
  double truncation_rate = 0.0;
  std::int64_t tokens = 0;  // response tokens the update was computed on
  // Mean diagnostics per sampled response, indexed by minilang::DiagKind.
  std::array<double, minilang::kNumDiagKinds> errors{};
};

// Adds the diagnostics of one sample to m.errors (caller divides by count).
void count_errors(BatchMetrics& m, const minilang::CompileResult& r);

struct RlcfState {
  ModelParams policy;
  ModelParams critic;
  ModelParams disc;
  ModelParams reference;
  double beta = 0.1;
  std::int64_t episode = 0;
  std::int64_t batch = 0;
};

// Fresh state: critic copied from the policy body, reference frozen.
RlcfState make_rlcf_state(const ModelParams& policy, const ModelParams& disc, const RlcfConfig& config);

// Writes one JSON object per line; the first line is a header.
class MetricsWriter {
 public:
  MetricsWriter(std::ostream* out, std::string method, std::uint64_t config_hash);
  void header(std::int64_t total_episodes);
  void record(const BatchMetrics& m);

 private:
  std::ostream* out_;
  std::string method_;
  std::uint64_t hash_;
};

// Runs episodes [state.episode, config.episodes). Resumable: pass a state
// loaded with load_rlcf_checkpoint.
void train_rlcf(const RlcfConfig& config, const std::vector<Example>& corpus, RlcfState& state,
                MetricsWriter* metrics = nullptr, const std::function<void(const BatchMetrics&)>& on_batch = {});

void save_rlcf_checkpoint(const std::filesystem::path& path, const RlcfState& state, std::uint64_t config_hash);
// Throws nn::CheckpointError when the stored config hash differs.
RlcfState load_rlcf_checkpoint(const std::filesystem::path& path, std::uint64_t config_hash);

}  // namespace rlcf::train

#endif  // RLCF_TRAIN_TRAIN_HPP_
