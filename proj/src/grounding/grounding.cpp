#include "rlcf/grounding/grounding.hpp"

#include <algorithm>
#include <stdexcept>

#include "rlcf/core/log.hpp"

namespace rlcf::grounding {

using minilang::compile_check;

const char* source_name(Source s) {
  switch (s) {
    case Source::CompilerRule: return "compiler";
    case Source::Discriminator: return "discriminator";
    case Source::Degenerate: return "degenerate";
  }
  return "?";
}

Scorer discriminator_scorer(const nn::ModelParams& disc) {
  return [&disc](const TokenSeq& x, const TokenSeq& y0, const TokenSeq& y1) {
    return nn::discriminator_score(disc, x, y0, y1);
  };
}

GroundingOutcome ground(const TokenSeq& x, const TokenSeq& y0, const TokenSeq& y1, const Scorer& disc) {
  GroundingOutcome out;
  std::array<CompileResult, 2> r = {compile_check(x, y0), compile_check(x, y1)};
  if (r[0].ok && !r[1].ok) {
    out.score = 1.0;
    out.source = Source::CompilerRule;
  } else if (!r[0].ok && r[1].ok) {
    out.score = -1.0;
    out.source = Source::CompilerRule;
  } else if (r[0].ok && r[1].ok) {
    out.score = disc(x, y0, y1);
    out.source = Source::Discriminator;
  } else {
    log_warn("ground: neither candidate compiles; scoring 0");
    out.score = 0.0;
    out.source = Source::Degenerate;
  }
  out.details = std::move(r);
  return out;
}

GroundingOutcome ground(const TokenSeq& x, const TokenSeq& y0, const TokenSeq& y1, const nn::ModelParams& disc) {
  return ground(x, y0, y1, discriminator_scorer(disc));
}

Rollout rollout_trajectory(const TokenSeq& x, const TokenSeq& y, const Sampler& sampler, const Scorer& disc,
                           const RolloutConfig& config) {
  if (!compile_check(x, y).ok) throw std::invalid_argument("rollout_trajectory: reference does not compile");
  nn::SampledResponse s = sampler(x);
  if (s.tokens.empty()) throw std::logic_error("rollout_trajectory: sampler returned nothing");

  Rollout out;
  out.full_sample = s.tokens;
  out.terminated_by = s.terminated_by;
  out.compile = compile_check(x, s.tokens);
  out.compiled = out.compile.ok;
  const std::size_t code_len = minilang::code_portion(x).size();

  if (config.feedback == Feedback::DiscOnly) {
    out.reward = disc(x, s.tokens, y);
  } else if (out.compiled) {
    out.reward = config.feedback == Feedback::CompilerOnly ? 0.0 : disc(x, s.tokens, y);
    for (std::size_t d : out.compile.unused_decl_indices) {
      if (d >= code_len) out.unused_decl_indices.push_back(d - code_len);
    }
  } else {
    out.reward = -1.0;
    const std::size_t blamed = *out.compile.first_error_index;
    // Prefix soundness puts the blame inside the response; clamp regardless.
    out.error_index = std::min(blamed >= code_len ? blamed - code_len : 0, s.tokens.size() - 1);
    if (config.localize) {
      const std::size_t keep = *out.error_index + 1;
      out.truncated = keep < s.tokens.size();
      s.tokens.resize(keep);
      s.logprobs.resize(keep);
    }
  }
  out.tokens = std::move(s.tokens);
  out.logprobs = std::move(s.logprobs);
  return out;
}

void assemble_rewards(Trajectory& traj, double terminal_reward, const std::vector<double>& new_logprobs,
                      const std::vector<double>& ref_logprobs, double beta, double unused_penalty) {
  const std::size_t n = traj.tokens.size();
  if (new_logprobs.size() != n || ref_logprobs.size() != n || n == 0) {
    throw std::invalid_argument("assemble_rewards: logprobs must align with a nonempty trajectory");
  }
  traj.rewards.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) traj.rewards[j] = -beta * (new_logprobs[j] - ref_logprobs[j]);
  traj.rewards[n - 1] += terminal_reward;
  for (std::size_t d : traj.unused_decl_indices) {
    if (d < n) traj.rewards[d] -= unused_penalty;
  }
  traj.terminal_reward = terminal_reward;
}

}  // namespace rlcf::grounding
