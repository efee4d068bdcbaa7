#ifndef RLCF_NN_MODEL_HPP_
#define RLCF_NN_MODEL_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "rlcf/minilang/vocab.hpp"
#include "rlcf/nn/ops.hpp"

namespace rlcf::nn {

using minilang::Token;
using minilang::TokenSeq;

struct ModelConfig {
  int vocab_size = minilang::kVocabSize;
  int width = 64;
  int layers = 2;
  int heads = 4;
  int max_len = 256;
  int ffn_mult = 4;

  bool operator==(const ModelConfig&) const = default;
};

// Policy and FrozenReference carry an LM head, Critic a per-position value
// head, Discriminator a bidirectional encoder with a scalar scoring MLP, and
// CompileCritic (CodeRL) a pooled compile classifier.
enum class Role { Policy, FrozenReference, Critic, Discriminator, CompileCritic };

const char* role_name(Role r);

struct AdamMoments {
  Matrix m;
  Matrix v;
};

struct ModelParams {
  ModelConfig config;
  Role role = Role::Policy;
  // std::map keeps element addresses stable and iteration order deterministic.
  std::map<std::string, Tensor> params;
  std::map<std::string, AdamMoments> moments;
  std::int64_t adam_step = 0;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return params.count(name) != 0; }
  void zero_grad();
  std::size_t num_parameters() const;
};

ModelParams init_policy(const ModelConfig& config, std::uint64_t seed);
// Copies the policy body; the value head's output layer starts at zero.
ModelParams init_critic(const ModelParams& policy, std::uint64_t seed);
ModelParams init_discriminator(const ModelConfig& config, std::uint64_t seed);
ModelParams init_compile_critic(const ModelParams& policy, std::uint64_t seed);
// Anchor copy: same weights, no optimizer state, role FrozenReference.
ModelParams freeze(const ModelParams& policy);

// Adds the gradients that reached `model`'s parameters on `tape`.
void accumulate_grads(const Tape& tape, ModelParams& model);

// Transformer body: final-layer-normed hidden states, one row per token.
Var encode(Tape& tape, const ModelParams& model, std::span<const Token> tokens, bool causal);

// Next-token logits for every position of `tokens` (T x V).
Var lm_logits(Tape& tape, const ModelParams& model, std::span<const Token> tokens);

// log f(y_j | x, y_<j) for each response token, as an R x 1 column.
Var sequence_log_probs(Tape& tape, const ModelParams& model, std::span<const Token> prompt,
                       std::span<const Token> response);
std::vector<double> sequence_log_probs(const ModelParams& model, std::span<const Token> prompt,
                                       std::span<const Token> response);

// v(x, y_<j) for j = 1..|response| (R x 1).
Var critic_values(Tape& tape, const ModelParams& critic, std::span<const Token> prompt,
                  std::span<const Token> response);
std::vector<double> critic_values(const ModelParams& critic, std::span<const Token> prompt,
                                  std::span<const Token> response);

// Pooled <cls> representation of prompt ∘ y (1 x d).
Var discriminator_embedding(Tape& tape, const ModelParams& disc, std::span<const Token> prompt,
                            std::span<const Token> y);
// Raw scalar score s = MLP(embedding) (1 x 1).
Var discriminator_logit(Tape& tape, const ModelParams& disc, std::span<const Token> prompt,
                        std::span<const Token> y);
// tanh(s0 - s1) (1 x 1).
Var discriminator_score(Tape& tape, const ModelParams& disc, std::span<const Token> prompt,
                        std::span<const Token> y0, std::span<const Token> y1);
double discriminator_score(const ModelParams& disc, std::span<const Token> prompt,
                           std::span<const Token> y0, std::span<const Token> y1);

// CodeRL critic outputs over the response positions.
struct CompileCriticOut {
  Var pooled_logit;  // 1 x 1, max-pool then linear
  Var token_logits;  // R x 1, the same linear head per position
};
CompileCriticOut compile_critic_forward(Tape& tape, const ModelParams& critic, std::span<const Token> prompt,
                                        std::span<const Token> response);

}  // namespace rlcf::nn

#endif  // RLCF_NN_MODEL_HPP_
