#include "rlcf/nn/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rlcf::nn {

namespace {

RowVector layer_norm_row(const RowVector& x, const Matrix& g, const Matrix& b) {
  const Scalar mu = x.mean();
  const Scalar var = (x.array() - mu).square().mean();
  const Scalar inv = 1.0 / std::sqrt(var + kLayerNormEps);
  RowVector xhat = (x.array() - mu) * inv;
  return (xhat.array() * g.row(0).array() + b.row(0).array()).matrix();
}

RowVector gelu_row(const RowVector& v) {
  constexpr Scalar k = 0.7978845608028654;
  constexpr Scalar c = 0.044715;
  RowVector th = (k * (v.array() + c * v.array().cube())).tanh();
  return (0.5 * v.array() * (1.0 + th.array())).matrix();
}

std::string key(int l, const char* name) { return "l" + std::to_string(l) + "." + name; }

}  // namespace

IncrementalDecoder::IncrementalDecoder(const ModelParams& model) : m_(model) {
  if (!m_.has("head.w")) throw std::invalid_argument("IncrementalDecoder needs a model with an LM head");
  const int d = m_.config.width;
  keys_.assign(static_cast<std::size_t>(m_.config.layers), Matrix(m_.config.max_len, d));
  values_.assign(static_cast<std::size_t>(m_.config.layers), Matrix(m_.config.max_len, d));
}

RowVector IncrementalDecoder::feed(Token t) {
  const ModelConfig& c = m_.config;
  if (pos_ >= c.max_len) throw std::length_error("IncrementalDecoder: max_len exceeded");
  if (t < 0 || t >= c.vocab_size) throw std::invalid_argument("IncrementalDecoder: token out of range");
  const int d = c.width;
  const int dh = d / c.heads;
  const Scalar sc = 1.0 / std::sqrt(static_cast<Scalar>(dh));

  RowVector x = m_.at("tok_emb").value.row(t) + m_.at("pos_emb").value.row(pos_);
  for (int l = 0; l < c.layers; ++l) {
    const auto L = static_cast<std::size_t>(l);
    RowVector h = layer_norm_row(x, m_.at(key(l, "ln1.g")).value, m_.at(key(l, "ln1.b")).value);
    RowVector qkv = h * m_.at(key(l, "attn.w")).value + m_.at(key(l, "attn.b")).value.row(0);
    keys_[L].row(pos_) = qkv.segment(d, d);
    values_[L].row(pos_) = qkv.segment(2 * d, d);
    RowVector a(d);
    for (int hd = 0; hd < c.heads; ++hd) {
      const auto q = qkv.segment(hd * dh, dh);
      const auto K = keys_[L].block(0, hd * dh, pos_ + 1, dh);
      const auto V = values_[L].block(0, hd * dh, pos_ + 1, dh);
      RowVector s = (q * K.transpose()) * sc;
      const Scalar mx = s.maxCoeff();
      s = (s.array() - mx).exp().matrix();
      s /= s.sum();
      a.segment(hd * dh, dh) = s * V;
    }
    x += a * m_.at(key(l, "proj.w")).value + m_.at(key(l, "proj.b")).value.row(0);
    h = layer_norm_row(x, m_.at(key(l, "ln2.g")).value, m_.at(key(l, "ln2.b")).value);
    RowVector f = gelu_row(h * m_.at(key(l, "fc.w")).value + m_.at(key(l, "fc.b")).value.row(0));
    x += f * m_.at(key(l, "out.w")).value + m_.at(key(l, "out.b")).value.row(0);
  }
  ++pos_;
  RowVector hf = layer_norm_row(x, m_.at("lnf.g").value, m_.at("lnf.b").value);
  return hf * m_.at("head.w").value + m_.at("head.b").value.row(0);
}

RowVector IncrementalDecoder::feed(std::span<const Token> tokens) {
  if (tokens.empty()) throw std::invalid_argument("IncrementalDecoder: empty feed");
  RowVector out;
  for (Token t : tokens) out = feed(t);
  return out;
}

Token sample_token(const RowVector& logits, double temperature, double top_p, Rng& rng, double* logprob) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive; use greedy for argmax");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
  const Eigen::Index n = logits.size();
  RowVector z = logits / temperature;
  const Scalar mx = z.maxCoeff();
  RowVector prob = (z.array() - mx).exp().matrix();
  prob /= prob.sum();

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::size_t keep = order.size();
  if (top_p < 1.0) {
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return prob(a) > prob(b); });
    Scalar cum = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      cum += prob(order[i]);
      if (cum >= top_p) {
        keep = i + 1;
        break;
      }
    }
  }
  Scalar mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) mass += prob(order[i]);

  const Scalar u = uniform01(rng) * mass;
  Scalar acc = 0.0;
  int chosen = order[keep - 1];
  for (std::size_t i = 0; i < keep; ++i) {
    acc += prob(order[i]);
    if (u < acc) {
      chosen = order[i];
      break;
    }
  }
  if (logprob) {
    // Full support: log-softmax directly, which agrees with the scoring path.
    *logprob = keep == order.size() ? (z(chosen) - mx) - std::log((z.array() - mx).exp().sum())
                                    : std::log(prob(chosen) / mass);
  }
  return chosen;
}

SampledResponse sample_response(const ModelParams& policy, std::span<const Token> prompt,
                                const SamplingConfig& config, Rng& rng) {
  if (prompt.empty()) throw std::invalid_argument("sample_response: empty prompt");
  if (config.max_len <= 0) throw std::invalid_argument("sample_response: max_len must be positive");
  if (!config.greedy && !(config.temperature > 0.0)) {
    throw std::invalid_argument("temperature must be positive; use greedy for argmax");
  }
  if (!config.greedy && !(config.top_p > 0.0 && config.top_p <= 1.0)) {
    throw std::invalid_argument("top_p must be in (0, 1]");
  }
  if (static_cast<long>(prompt.size()) + config.max_len > policy.config.max_len) {
    throw std::invalid_argument("sample_response: prompt + max_len exceeds the model's max_len");
  }
  IncrementalDecoder dec(policy);
  RowVector logits = dec.feed(prompt);
  SampledResponse out;
  for (int step = 0; step < config.max_len; ++step) {
    Token t;
    double lp;
    if (config.greedy) {
      Eigen::Index arg = 0;
      const Scalar mx = logits.maxCoeff(&arg);
      t = static_cast<Token>(arg);
      lp = (logits(arg) - mx) - std::log((logits.array() - mx).exp().sum());
    } else {
      t = sample_token(logits, config.temperature, config.top_p, rng, &lp);
    }
    out.tokens.push_back(t);
    out.logprobs.push_back(lp);
    if (t == minilang::tok::kEop) {
      out.terminated_by = Termination::Eop;
      return out;
    }
    if (step + 1 < config.max_len) logits = dec.feed(t);
  }
  out.terminated_by = Termination::Horizon;
  return out;
}

}  // namespace rlcf::nn
