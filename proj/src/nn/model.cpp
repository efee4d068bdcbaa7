#include "rlcf/nn/model.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "rlcf/core/rng.hpp"

namespace rlcf::nn {

namespace {

constexpr double kInitStd = 0.02;

std::string layer_key(int l, const char* name) { return "l" + std::to_string(l) + "." + name; }

class Initializer {
 public:
  Initializer(ModelParams& m, std::uint64_t seed, std::string_view stream) : m_(m), rng_(make_rng(seed, stream)) {}

  void normal(const std::string& name, int rows, int cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix v(rows, cols);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = dist(rng_);
    m_.params[name] = Tensor(std::move(v));
  }
  void constant(const std::string& name, int rows, int cols, double value) {
    m_.params[name] = Tensor(Matrix::Constant(rows, cols, value));
  }

 private:
  ModelParams& m_;
  Rng rng_;
};

void init_body(Initializer& init, const ModelConfig& c, int positions) {
  const int d = c.width;
  const int f = c.ffn_mult * d;
  const double resid_std = kInitStd / std::sqrt(2.0 * c.layers);
  init.normal("tok_emb", c.vocab_size, d, kInitStd);
  init.normal("pos_emb", positions, d, kInitStd);
  for (int l = 0; l < c.layers; ++l) {
    init.constant(layer_key(l, "ln1.g"), 1, d, 1.0);
    init.constant(layer_key(l, "ln1.b"), 1, d, 0.0);
    init.normal(layer_key(l, "attn.w"), d, 3 * d, kInitStd);
    init.constant(layer_key(l, "attn.b"), 1, 3 * d, 0.0);
    init.normal(layer_key(l, "proj.w"), d, d, resid_std);
    init.constant(layer_key(l, "proj.b"), 1, d, 0.0);
    init.constant(layer_key(l, "ln2.g"), 1, d, 1.0);
    init.constant(layer_key(l, "ln2.b"), 1, d, 0.0);
    init.normal(layer_key(l, "fc.w"), d, f, kInitStd);
    init.constant(layer_key(l, "fc.b"), 1, f, 0.0);
    init.normal(layer_key(l, "out.w"), f, d, resid_std);
    init.constant(layer_key(l, "out.b"), 1, d, 0.0);
  }
  init.constant("lnf.g", 1, d, 1.0);
  init.constant("lnf.b", 1, d, 0.0);
}

void validate(const ModelConfig& c) {
  if (c.vocab_size <= 0 || c.width <= 0 || c.layers <= 0 || c.heads <= 0 || c.max_len <= 0 || c.ffn_mult <= 0) {
    throw std::invalid_argument("model config: all sizes must be positive");
  }
  if (c.width % c.heads != 0) throw std::invalid_argument("model config: width must be divisible by heads");
}

ModelParams copy_body(const ModelParams& src, Role role) {
  ModelParams out;
  out.config = src.config;
  out.role = role;
  for (const auto& [name, t] : src.params) {
    if (name.rfind("head.", 0) == 0) continue;
    out.params[name] = Tensor(t.value);
  }
  return out;
}

Var p(Tape& tape, const ModelParams& m, const std::string& name) { return tape.param(m.at(name)); }

Var linear(Tape& tape, const ModelParams& m, Var x, const std::string& w, const std::string& b) {
  return add_row(matmul(x, p(tape, m, w)), p(tape, m, b));
}

void check_length(const ModelParams& m, std::size_t len, int extra) {
  if (len == 0) throw std::invalid_argument("empty token sequence");
  if (static_cast<long>(len) + extra > m.config.max_len + (m.role == Role::Discriminator ? 1 : 0)) {
    throw std::invalid_argument("token sequence longer than max_len");
  }
}

// prompt ∘ response[0..R-2]: every response token is predicted from the rows
// P-1 .. P+R-2 of the body output.
TokenSeq conditioning_sequence(std::span<const Token> prompt, std::span<const Token> response) {
  TokenSeq seq(prompt.begin(), prompt.end());
  seq.insert(seq.end(), response.begin(), response.end() - 1);
  return seq;
}

Var response_rows(Tape& tape, const ModelParams& m, std::span<const Token> prompt, std::span<const Token> response) {
  if (prompt.empty() || response.empty()) throw std::invalid_argument("prompt and response must be nonempty");
  const TokenSeq seq = conditioning_sequence(prompt, response);
  Var h = encode(tape, m, seq, true);
  return slice_rows(h, static_cast<Eigen::Index>(prompt.size()) - 1, static_cast<Eigen::Index>(response.size()));
}

std::vector<double> to_vector(const Matrix& col) { return std::vector<double>(col.data(), col.data() + col.size()); }

}  // namespace

const char* role_name(Role r) {
  switch (r) {
    case Role::Policy: return "policy";
    case Role::FrozenReference: return "reference";
    case Role::Critic: return "critic";
    case Role::Discriminator: return "discriminator";
    case Role::CompileCritic: return "compile-critic";
  }
  return "?";
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

void ModelParams::zero_grad() {
  for (auto& [_, t] : params) t.grad.setZero(t.value.rows(), t.value.cols());
}

std::size_t ModelParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params) n += static_cast<std::size_t>(t.value.size());
  return n;
}

ModelParams init_policy(const ModelConfig& config, std::uint64_t seed) {
  validate(config);
  ModelParams m;
  m.config = config;
  m.role = Role::Policy;
  Initializer init(m, seed, "init-policy");
  init_body(init, config, config.max_len);
  init.normal("head.w", config.width, config.vocab_size, kInitStd);
  init.constant("head.b", 1, config.vocab_size, 0.0);
  return m;
}

ModelParams init_critic(const ModelParams& policy, std::uint64_t seed) {
  ModelParams m = copy_body(policy, Role::Critic);
  const int d = m.config.width;
  Initializer init(m, seed, "init-critic");
  init.normal("value.w1", d, d, 1.0 / std::sqrt(static_cast<double>(d)));
  init.constant("value.b1", 1, d, 0.0);
  init.constant("value.w2", d, 1, 0.0);
  init.constant("value.b2", 1, 1, 0.0);
  return m;
}

ModelParams init_discriminator(const ModelConfig& config, std::uint64_t seed) {
  validate(config);
  ModelParams m;
  m.config = config;
  m.role = Role::Discriminator;
  Initializer init(m, seed, "init-discriminator");
  init_body(init, config, config.max_len + 1);  // + the <cls> slot
  const int d = config.width;
  init.normal("score.w1", d, d, 1.0 / std::sqrt(static_cast<double>(d)));
  init.constant("score.b1", 1, d, 0.0);
  init.normal("score.w2", d, 1, 1.0 / std::sqrt(static_cast<double>(d)));
  init.constant("score.b2", 1, 1, 0.0);
  return m;
}

ModelParams init_compile_critic(const ModelParams& policy, std::uint64_t seed) {
  ModelParams m = copy_body(policy, Role::CompileCritic);
  const int d = m.config.width;
  Initializer init(m, seed, "init-compile-critic");
  init.normal("cls.w", d, 1, 1.0 / std::sqrt(static_cast<double>(d)));
  init.constant("cls.b", 1, 1, 0.0);
  return m;
}

ModelParams freeze(const ModelParams& policy) {
  if (policy.role != Role::Policy && policy.role != Role::FrozenReference) {
    throw std::invalid_argument("freeze: only a policy can become the reference");
  }
  ModelParams m;
  m.config = policy.config;
  m.role = Role::FrozenReference;
  for (const auto& [name, t] : policy.params) m.params[name] = Tensor(t.value);
  return m;
}

void accumulate_grads(const Tape& tape, ModelParams& model) {
  if (model.role == Role::FrozenReference) throw std::logic_error("gradient step on the frozen reference");
  for (auto& [_, t] : model.params) {
    if (const Matrix* g = tape.param_grad(t)) t.grad += *g;
  }
}

Var encode(Tape& tape, const ModelParams& m, std::span<const Token> tokens, bool causal) {
  const ModelConfig& c = m.config;
  const int positions = static_cast<int>(m.at("pos_emb").value.rows());
  if (tokens.empty() || static_cast<int>(tokens.size()) > positions) {
    throw std::invalid_argument("encode: sequence length out of range");
  }
  std::vector<int> pos(tokens.size());
  std::iota(pos.begin(), pos.end(), 0);
  Var x = add(gather_rows(p(tape, m, "tok_emb"), tokens), gather_rows(p(tape, m, "pos_emb"), pos));
  for (int l = 0; l < c.layers; ++l) {
    Var h = layer_norm(x, p(tape, m, layer_key(l, "ln1.g")), p(tape, m, layer_key(l, "ln1.b")));
    Var qkv = linear(tape, m, h, layer_key(l, "attn.w"), layer_key(l, "attn.b"));
    Var a = attention(qkv, c.heads, causal);
    x = add(x, linear(tape, m, a, layer_key(l, "proj.w"), layer_key(l, "proj.b")));
    h = layer_norm(x, p(tape, m, layer_key(l, "ln2.g")), p(tape, m, layer_key(l, "ln2.b")));
    Var f = gelu(linear(tape, m, h, layer_key(l, "fc.w"), layer_key(l, "fc.b")));
    x = add(x, linear(tape, m, f, layer_key(l, "out.w"), layer_key(l, "out.b")));
  }
  return layer_norm(x, p(tape, m, "lnf.g"), p(tape, m, "lnf.b"));
}

Var lm_logits(Tape& tape, const ModelParams& m, std::span<const Token> tokens) {
  return linear(tape, m, encode(tape, m, tokens, true), "head.w", "head.b");
}

Var sequence_log_probs(Tape& tape, const ModelParams& m, std::span<const Token> prompt,
                       std::span<const Token> response) {
  check_length(m, prompt.size() + response.size(), -1);
  Var rows = response_rows(tape, m, prompt, response);
  Var logits = linear(tape, m, rows, "head.w", "head.b");
  return pick_log_probs(logits, response);
}

std::vector<double> sequence_log_probs(const ModelParams& m, std::span<const Token> prompt,
                                       std::span<const Token> response) {
  Tape tape(false);
  return to_vector(sequence_log_probs(tape, m, prompt, response).value());
}

Var critic_values(Tape& tape, const ModelParams& critic, std::span<const Token> prompt,
                  std::span<const Token> response) {
  check_length(critic, prompt.size() + response.size(), -1);
  Var rows = response_rows(tape, critic, prompt, response);
  Var h = tanh(linear(tape, critic, rows, "value.w1", "value.b1"));
  return linear(tape, critic, h, "value.w2", "value.b2");
}

std::vector<double> critic_values(const ModelParams& critic, std::span<const Token> prompt,
                                  std::span<const Token> response) {
  Tape tape(false);
  return to_vector(critic_values(tape, critic, prompt, response).value());
}

Var discriminator_embedding(Tape& tape, const ModelParams& disc, std::span<const Token> prompt,
                            std::span<const Token> y) {
  if (y.empty()) throw std::invalid_argument("discriminator: empty candidate");
  TokenSeq seq;
  seq.reserve(prompt.size() + y.size() + 1);
  seq.push_back(minilang::tok::kCls);
  seq.insert(seq.end(), prompt.begin(), prompt.end());
  seq.insert(seq.end(), y.begin(), y.end());
  return row(encode(tape, disc, seq, false), 0);
}

Var discriminator_logit(Tape& tape, const ModelParams& disc, std::span<const Token> prompt,
                        std::span<const Token> y) {
  Var e = discriminator_embedding(tape, disc, prompt, y);
  Var h = tanh(linear(tape, disc, e, "score.w1", "score.b1"));
  return linear(tape, disc, h, "score.w2", "score.b2");
}

Var discriminator_score(Tape& tape, const ModelParams& disc, std::span<const Token> prompt,
                        std::span<const Token> y0, std::span<const Token> y1) {
  return tanh(sub(discriminator_logit(tape, disc, prompt, y0), discriminator_logit(tape, disc, prompt, y1)));
}

double discriminator_score(const ModelParams& disc, std::span<const Token> prompt, std::span<const Token> y0,
                           std::span<const Token> y1) {
  Tape tape(false);
  return discriminator_score(tape, disc, prompt, y0, y1).item();
}

CompileCriticOut compile_critic_forward(Tape& tape, const ModelParams& critic, std::span<const Token> prompt,
                                        std::span<const Token> response) {
  check_length(critic, prompt.size() + response.size(), 0);
  if (response.empty()) throw std::invalid_argument("compile critic: empty response");
  TokenSeq seq(prompt.begin(), prompt.end());
  seq.insert(seq.end(), response.begin(), response.end());
  Var h = encode(tape, critic, seq, true);
  Var rows = slice_rows(h, static_cast<Eigen::Index>(prompt.size()), static_cast<Eigen::Index>(response.size()));
  return {linear(tape, critic, max_pool_rows(rows), "cls.w", "cls.b"), linear(tape, critic, rows, "cls.w", "cls.b")};
}

}  // namespace rlcf::nn
