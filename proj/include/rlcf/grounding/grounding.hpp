#ifndef RLCF_GROUNDING_GROUNDING_HPP_
#define RLCF_GROUNDING_GROUNDING_HPP_

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "rlcf/minilang/minilang.hpp"
#include "rlcf/nn/model.hpp"
#include "rlcf/nn/sampling.hpp"

namespace rlcf::grounding {

using minilang::CompileResult;
using minilang::TokenSeq;

enum class Source { CompilerRule, Discriminator, Degenerate };

const char* source_name(Source s);

struct GroundingOutcome {
  double score = 0.0;
  Source source = Source::Degenerate;
  std::optional<std::array<CompileResult, 2>> details;
};

// D(x, y0, y1) in (-1, 1). A std::function so tests can count invocations.
using Scorer = std::function<double(const TokenSeq& x, const TokenSeq& y0, const TokenSeq& y1)>;

Scorer discriminator_scorer(const nn::ModelParams& disc);

// The grounding function: compiler verdicts dominate, the discriminator
// breaks ties between two compiling candidates, two failures score 0.
GroundingOutcome ground(const TokenSeq& x, const TokenSeq& y0, const TokenSeq& y1, const Scorer& disc);
GroundingOutcome ground(const TokenSeq& x, const TokenSeq& y0, const TokenSeq& y1, const nn::ModelParams& disc);

// Which feedback sources a rollout may use. DiscOnly never consults the
// compiler (no truncation, every rollout is scored by the discriminator);
// CompilerOnly scores compiling rollouts 0 instead of asking the
// discriminator.
enum class Feedback { Full, DiscOnly, CompilerOnly };

struct RolloutConfig {
  Feedback feedback = Feedback::Full;
  // false: a failing rollout keeps its full length (still rewarded -1).
  bool localize = true;
};

// Draws y' for a prompt. Production code wraps nn::sample_response.
using Sampler = std::function<nn::SampledResponse(const TokenSeq& prompt)>;

struct Rollout {
  TokenSeq tokens;               // possibly truncated y'
  std::vector<double> logprobs;  // sampler logprobs, aligned with tokens
  TokenSeq full_sample;          // untruncated y'
  double reward = 0.0;           // terminal reward R
  bool compiled = false;
  bool truncated = false;
  // Response-relative index of the blamed token when the sample failed.
  std::optional<std::size_t> error_index;
  // Response-relative indices of unused declarations (compiling samples).
  std::vector<std::size_t> unused_decl_indices;
  nn::Termination terminated_by = nn::Termination::Horizon;
  CompileResult compile;
};

// Samples y' and grounds it against the reference y. Throws
// std::invalid_argument if y itself does not compile.
Rollout rollout_trajectory(const TokenSeq& x, const TokenSeq& y, const Sampler& sampler, const Scorer& disc,
                           const RolloutConfig& config = {});

// A rollout with its per-token learning signals.
struct Trajectory {
  TokenSeq prompt;
  TokenSeq tokens;
  std::vector<double> old_logprobs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> advantages;
  std::vector<double> returns;
  double terminal_reward = 0.0;
  bool truncated = false;
  std::vector<std::size_t> unused_decl_indices;
};

inline constexpr double kDefaultUnusedPenalty = 0.1;

// r_j = -beta (new_j - ref_j); r_last += R; r_d -= unused_penalty for each
// unused declaration d. Fills traj.rewards and traj.terminal_reward.
void assemble_rewards(Trajectory& traj, double terminal_reward, const std::vector<double>& new_logprobs,
                      const std::vector<double>& ref_logprobs, double beta, double unused_penalty);

}  // namespace rlcf::grounding

#endif  // RLCF_GROUNDING_GROUNDING_HPP_
