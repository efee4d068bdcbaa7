#ifndef RLCF_NN_SAMPLING_HPP_
#define RLCF_NN_SAMPLING_HPP_

#include <span>
#include <vector>

#include "rlcf/core/rng.hpp"
#include "rlcf/nn/model.hpp"

namespace rlcf::nn {

// Causal LM with a key/value cache: feed tokens one at a time and read the
// next-token logits. Computes the same function as lm_logits row by row.
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const ModelParams& model);

  // Appends a token; returns logits for the following position (1 x V).
  RowVector feed(Token t);
  RowVector feed(std::span<const Token> tokens);
  int position() const { return pos_; }

 private:
  const ModelParams& m_;
  std::vector<Matrix> keys_;
  std::vector<Matrix> values_;
  int pos_ = 0;
};

enum class Termination { Eop, Horizon };

struct SampledResponse {
  TokenSeq tokens;
  std::vector<double> logprobs;
  Termination terminated_by = Termination::Horizon;
};

struct SamplingConfig {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_len = 64;
  // Argmax decoding; logprobs are then the untempered full-distribution values.
  bool greedy = false;
};

// Draws one token from temperature-scaled, nucleus-truncated logits and
// stores its log-probability under the truncated distribution.
Token sample_token(const RowVector& logits, double temperature, double top_p, Rng& rng, double* logprob);

SampledResponse sample_response(const ModelParams& policy, std::span<const Token> prompt,
                                const SamplingConfig& config, Rng& rng);

}  // namespace rlcf::nn

#endif  // RLCF_NN_SAMPLING_HPP_
