#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "rlcf/nn/checkpoint.hpp"
#include "rlcf/nn/model.hpp"
#include "rlcf/nn/optim.hpp"
#include "rlcf/nn/sampling.hpp"

using namespace rlcf;
using namespace rlcf::nn;
using namespace rlcf::testing;

TEST_CASE("gradcheck: embedding lookup") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int V = uniform_int(rng, 3, 9), d = uniform_int(rng, 2, 6), T = uniform_int(rng, 1, 7);
    std::vector<int> ids;
    for (int i = 0; i < T; ++i) ids.push_back(uniform_int(rng, 0, V - 1));
    const Matrix dir = randn(rng, T, d);
    double e = check_leaves({randn(rng, V, d)}, [&](Tape&, std::vector<Var>& x) { return probe(gather_rows(x[0], ids), dir); });
    CHECK(e < 1e-5);
  }
}

TEST_CASE("gradcheck: attention (causal and bidirectional)") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int H = uniform_int(rng, 1, 3), dh = uniform_int(rng, 1, 3), T = uniform_int(rng, 1, 6);
    const bool causal = trial % 2 == 0;
    const Matrix dir = randn(rng, T, H * dh);
    const Matrix w = randn(rng, H * dh, 3 * H * dh, 0.7);
    double e = check_leaves({randn(rng, T, H * dh), w}, [&](Tape&, std::vector<Var>& x) {
      return probe(attention(matmul(x[0], x[1]), H, causal), dir);
    });
    INFO("H=" << H << " dh=" << dh << " T=" << T << " causal=" << causal);
    CHECK(e < 1e-5);
  }
}

TEST_CASE("gradcheck: feed-forward (linear, bias, gelu, linear)") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int T = uniform_int(rng, 1, 5), d = uniform_int(rng, 1, 5), f = uniform_int(rng, 1, 8);
    const Matrix dir = randn(rng, T, d);
    double e = check_leaves({randn(rng, T, d), randn(rng, d, f), randn(rng, 1, f), randn(rng, f, d), randn(rng, 1, d)},
                            [&](Tape&, std::vector<Var>& x) {
                              Var h = gelu(add_row(matmul(x[0], x[1]), x[2]));
                              return probe(add_row(matmul(h, x[3]), x[4]), dir);
                            });
    CHECK(e < 1e-5);
  }
}

TEST_CASE("gradcheck: layer normalization") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int T = uniform_int(rng, 1, 5), d = uniform_int(rng, 2, 8);
    const Matrix dir = randn(rng, T, d);
    double e = check_leaves({randn(rng, T, d, 2.0), randn(rng, 1, d), randn(rng, 1, d)},
                            [&](Tape&, std::vector<Var>& x) { return probe(layer_norm(x[0], x[1], x[2]), dir); });
    CHECK(e < 1e-5);
  }
}

TEST_CASE("gradcheck: losses and pointwise ops") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int T = uniform_int(rng, 1, 5), V = uniform_int(rng, 2, 6);
    std::vector<int> tgt;
    for (int i = 0; i < T; ++i) tgt.push_back(uniform_int(rng, 0, V - 1));
    const Matrix dir = randn(rng, T, V);
    Vector old = randn(rng, T, 1, 0.3).col(0);
    Vector adv = randn(rng, T, 1).col(0);
    Vector target = randn(rng, T, 1).col(0);
    const double label = uniform01(rng);
    double e = check_leaves({randn(rng, T, V)}, [&](Tape&, std::vector<Var>& x) {
      Var lp = pick_log_probs(x[0], tgt);
      Var a = add(clipped_surrogate_loss(lp, old, adv, 0.2), squared_error(lp, target));
      Var b = add(probe(log_softmax(x[0]), dir), probe(sigmoid(tanh(x[0])), dir));
      Var c = add(squared_distance(row(x[0], 0), max_pool_rows(exp(scale(x[0], 0.5)))),
                  bce_with_logits(slice_rows(sum(x[0]), 0, 1), label));
      return add(add(a, b), add(c, mean(relu(add_scalar(x[0], 0.1)))));
    });
    CHECK(e < 1e-5);
  }
}

TEST_CASE("gradcheck: policy log-probs through the whole transformer") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParams m = init_policy(tiny_config(rng), rng());
    perturb(m, rng);
    const TokenSeq x = random_tokens(rng, uniform_int(rng, 1, 5));
    const TokenSeq y = random_tokens(rng, uniform_int(rng, 1, 5));
    double e = check_model(m, [&](Tape& t, const ModelParams& mm) { return sum(sequence_log_probs(t, mm, x, y)); }, rng);
    CHECK(e < 1e-5);
  }
}

TEST_CASE("gradcheck: value head") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParams pol = init_policy(tiny_config(rng), rng());
    ModelParams critic = init_critic(pol, rng());
    perturb(critic, rng);
    const TokenSeq x = random_tokens(rng, uniform_int(rng, 1, 4));
    const TokenSeq y = random_tokens(rng, uniform_int(rng, 1, 5));
    const Vector g = randn(rng, static_cast<Eigen::Index>(y.size()), 1).col(0);
    double e = check_model(critic, [&](Tape& t, const ModelParams& mm) { return squared_error(critic_values(t, mm, x, y), g); },
                           rng, {"value.", "lnf.", "l0."});
    CHECK(e < 1e-5);
  }
}

TEST_CASE("gradcheck: discriminator MLP and bidirectional encoder") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParams disc = init_discriminator(tiny_config(rng), rng());
    perturb(disc, rng);
    const TokenSeq x = random_tokens(rng, uniform_int(rng, 1, 4));
    const TokenSeq y0 = random_tokens(rng, uniform_int(rng, 1, 5));
    const TokenSeq y1 = random_tokens(rng, uniform_int(rng, 1, 5));
    double e = check_model(disc, [&](Tape& t, const ModelParams& mm) { return discriminator_score(t, mm, x, y0, y1); }, rng);
    CHECK(e < 1e-5);
  }
}

TEST_CASE("gradcheck: compile critic pooled and per-token heads") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParams pol = init_policy(tiny_config(rng), rng());
    ModelParams cc = init_compile_critic(pol, rng());
    perturb(cc, rng);
    const TokenSeq x = random_tokens(rng, uniform_int(rng, 1, 4));
    const TokenSeq y = random_tokens(rng, uniform_int(rng, 1, 5));
    double e = check_model(cc, [&](Tape& t, const ModelParams& mm) {
      auto out = compile_critic_forward(t, mm, x, y);
      return add(bce_with_logits(out.pooled_logit, 1.0), sum(sigmoid(out.token_logits)));
    }, rng);
    CHECK(e < 1e-5);
  }
}

TEST_CASE("probability normalization: rows of exp(log_softmax) sum to one") {
  Rng rng(10);
  ModelParams m = init_policy(ModelConfig{}, 3);
  perturb(m, rng, 0.1);
  Tape t(false);
  const TokenSeq seq = random_tokens(rng, 30);
  Matrix p = log_softmax(lm_logits(t, m, seq)).value().array().exp();
  for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);
}

TEST_CASE("incremental decoder matches the batched forward") {
  Rng rng(11);
  ModelParams m = init_policy(ModelConfig{}, 5);
  perturb(m, rng, 0.1);
  const TokenSeq seq = random_tokens(rng, 40);
  Tape t(false);
  const Matrix full = lm_logits(t, m, seq).value();
  IncrementalDecoder dec(m);
  double worst = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    RowVector r = dec.feed(seq[i]);
    worst = std::max(worst, (r - full.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("sample_token: V=4 frequencies match softmax (chi-square, alpha 0.01)") {
  RowVector logits(4);
  logits << 0.5, -1.0, 2.0, 0.1;
  Vector p = (logits.array() - logits.maxCoeff()).exp().transpose();
  p /= p.sum();
  Rng rng(12);
  const int n = 100000;
  std::array<int, 4> counts{};
  for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(sample_token(logits, 1.0, 1.0, rng, nullptr))]++;
  double chi2 = 0;
  for (int k = 0; k < 4; ++k) {
    const double e = n * p(k);
    chi2 += (counts[static_cast<std::size_t>(k)] - e) * (counts[static_cast<std::size_t>(k)] - e) / e;
  }
  CHECK(chi2 < 11.345);  // chi-square(3) quantile at 0.99
}

TEST_CASE("sample_token: nucleus keeps the smallest prefix reaching top_p") {
  RowVector logits(4);
  logits << std::log(0.5), std::log(0.3), std::log(0.15), std::log(0.05);
  Rng rng(13);
  std::array<int, 4> counts{};
  double lp = 0;
  for (int i = 0; i < 20000; ++i) {
    Token t = sample_token(logits, 1.0, 0.8, rng, &lp);
    counts[static_cast<std::size_t>(t)]++;
    CHECK(lp == doctest::Approx(std::log(t == 0 ? 0.5 / 0.8 : 0.3 / 0.8)).epsilon(1e-12));
  }
  CHECK(counts[2] == 0);
  CHECK(counts[3] == 0);
  CHECK_THROWS(sample_token(logits, 0.0, 1.0, rng, nullptr));
  CHECK_THROWS(sample_token(logits, 1.0, 0.0, rng, nullptr));
}

TEST_CASE("sample_response: greedy, nucleus collapse and logprob consistency") {
  Rng init(14);
  ModelParams m = init_policy(ModelConfig{}, 21);
  perturb(m, init, 0.15);
  const TokenSeq prompt = {minilang::tok::kDescOpen, minilang::tok::kFamilyBase, minilang::tok::kDescClose,
                           minilang::tok::kHole};
  SamplingConfig g;
  g.greedy = true;
  g.max_len = 20;
  Rng r1(1), r2(2);
  SampledResponse a = sample_response(m, prompt, g, r1);
  SampledResponse b = sample_response(m, prompt, g, r2);
  CHECK(a.tokens == b.tokens);

  SamplingConfig collapse;
  collapse.top_p = 1e-9;
  collapse.max_len = 20;
  CHECK(sample_response(m, prompt, collapse, r1).tokens == a.tokens);

  // greedy tokens attain the per-step maximum under the full distribution
  Tape t(false);
  TokenSeq seq = prompt;
  seq.insert(seq.end(), a.tokens.begin(), a.tokens.end());
  const Matrix logits = lm_logits(t, m, seq).value();
  for (std::size_t j = 0; j < a.tokens.size(); ++j) {
    Eigen::Index arg;
    logits.row(static_cast<Eigen::Index>(prompt.size() + j - 1)).maxCoeff(&arg);
    CHECK(arg == a.tokens[j]);
  }
  const auto lps = sequence_log_probs(m, prompt, a.tokens);
  for (std::size_t j = 0; j < lps.size(); ++j) CHECK(std::abs(lps[j] - a.logprobs[j]) < 1e-9);

  SamplingConfig s;
  s.max_len = 30;
  for (int k = 0; k < 10; ++k) {
    Rng rr(100 + static_cast<std::uint64_t>(k));
    SampledResponse y = sample_response(m, prompt, s, rr);
    REQUIRE(y.tokens.size() == y.logprobs.size());
    const auto re = sequence_log_probs(m, prompt, y.tokens);
    double sum_lp = 0;
    for (std::size_t j = 0; j < re.size(); ++j) {
      CHECK(std::abs(re[j] - y.logprobs[j]) < 1e-9);
      CHECK(y.logprobs[j] <= 0.0);
      sum_lp += re[j];
    }
    CHECK(y.terminated_by == (y.tokens.back() == minilang::tok::kEop ? Termination::Eop : Termination::Horizon));
    (void)sum_lp;
  }
  Rng same1(77), same2(77);
  CHECK(sample_response(m, prompt, s, same1).tokens == sample_response(m, prompt, s, same2).tokens);

  SamplingConfig bad;
  bad.temperature = 0.0;
  CHECK_THROWS_AS(sample_response(m, prompt, bad, r1), std::invalid_argument);
  SamplingConfig too_long;
  too_long.max_len = 254;
  CHECK_THROWS_AS(sample_response(m, prompt, too_long, r1), std::invalid_argument);
}

TEST_CASE("critic: zero head gives zeros, values are causal") {
  Rng rng(15);
  ModelParams pol = init_policy(ModelConfig{}, 1);
  ModelParams critic = init_critic(pol, 2);
  const TokenSeq x = random_tokens(rng, 6);
  TokenSeq y = random_tokens(rng, 10);
  auto v = critic_values(critic, x, y);
  CHECK(v.size() == y.size());
  for (double e : v) CHECK(e == 0.0);

  perturb(critic, rng, 0.2);
  auto before = critic_values(critic, x, y);
  const std::size_t j = 6;
  for (std::size_t k = j; k < y.size(); ++k) y[k] = (y[k] + 7) % minilang::kVocabSize;
  auto after = critic_values(critic, x, y);
  // value j depends on tokens strictly before j
  for (std::size_t k = 0; k <= j; ++k) CHECK(after[k] == before[k]);
  bool changed = false;
  for (std::size_t k = j + 1; k < y.size(); ++k) changed = changed || after[k] != before[k];
  CHECK(changed);
}

TEST_CASE("discriminator: antisymmetry, zero diagonal, tanh of the difference") {
  Rng rng(16);
  ModelParams disc = init_discriminator(ModelConfig{}, 4);
  perturb(disc, rng, 0.2);
  for (int trial = 0; trial < 20; ++trial) {
    const TokenSeq x = random_tokens(rng, uniform_int(rng, 1, 8));
    const TokenSeq a = random_tokens(rng, uniform_int(rng, 1, 12));
    const TokenSeq b = random_tokens(rng, uniform_int(rng, 1, 12));
    const double s = discriminator_score(disc, x, a, b);
    CHECK(s == -discriminator_score(disc, x, b, a));
    CHECK(discriminator_score(disc, x, a, a) == 0.0);
    CHECK(std::abs(s) < 1.0);
    Tape t(false);
    const double s0 = discriminator_logit(t, disc, x, a).item();
    const double s1 = discriminator_logit(t, disc, x, b).item();
    CHECK(s == std::tanh(s0 - s1));
  }
  Tape t;
  Var d = tanh(sub(t.leaf(Matrix::Constant(1, 1, 1.0)), t.leaf(Matrix::Constant(1, 1, 0.5))));
  CHECK(d.item() == doctest::Approx(0.46211715726000974).epsilon(1e-15));
}

TEST_CASE("optimizer: closed-form first step, zero gradient, schedule endpoint") {
  ModelParams m;
  m.params["w"] = Tensor(Matrix::Constant(1, 1, 1.0));
  AdamWConfig c;
  c.total_steps = 10;
  m.at("w").grad(0, 0) = 0.5;
  optimizer_step(m, 0.1, 0, c);
  // m1 = 0.05, v1 = 0.0025; hats 0.5 and 0.25
  const double expect = 1.0 * (1 - 0.1 * 0.01) - 0.1 * 0.5 / (std::sqrt(0.25) + 1e-8);
  CHECK(std::abs(m.at("w").value(0, 0) - expect) < 1e-12);
  CHECK(m.at("w").grad(0, 0) == 0.0);

  ModelParams z = init_policy(ModelConfig{.width = 8, .layers = 1, .heads = 2, .max_len = 16}, 3);
  ModelParams z0 = z;
  AdamWConfig nodecay;
  nodecay.weight_decay = 0.0;
  optimizer_step(z, 0.1, 0, nodecay);
  for (const auto& [name, t] : z.params) CHECK(t.value == z0.at(name).value);

  ModelParams e = z0;
  for (auto& [_, t] : e.params) t.grad.setConstant(0.3);
  AdamWConfig sched;
  sched.total_steps = 5;
  optimizer_step(e, 0.1, 5, sched);
  for (const auto& [name, t] : e.params) CHECK(t.value == z0.at(name).value);
  CHECK(scheduled_lr(1.0, 2, 8) == doctest::Approx(0.75));

  ModelParams bad = z0;
  bad.at("lnf.g").grad(0, 0) = std::nan("");
  CHECK_THROWS_AS(optimizer_step(bad, 0.1, 0, c), NonFiniteError);
  CHECK(bad.at("lnf.g").value == z0.at("lnf.g").value);
}

TEST_CASE("optimizer: clipping bounds the applied gradient norm") {
  ModelParams m;
  m.params["w"] = Tensor(Matrix::Zero(1, 2));
  m.at("w").grad << 30.0, 40.0;
  AdamWConfig c;
  c.weight_decay = 0.0;
  CHECK(optimizer_step(m, 1e-3, 0, c) == doctest::Approx(50.0));
  CHECK(m.moments["w"].m(0, 0) == doctest::Approx(0.1 * 0.6));
}

TEST_CASE("checkpoint: bit-exact round trip and vocabulary hash check") {
  const auto dir = std::filesystem::temp_directory_path() / "rlcf_nn_ckpt";
  std::filesystem::remove_all(dir);
  ModelParams m = init_policy(ModelConfig{.width = 8, .layers = 1, .heads = 2, .max_len = 16}, 9);
  for (auto& [_, t] : m.params) t.grad.setConstant(0.01);
  optimizer_step(m, 1e-3, 0, AdamWConfig{});
  Checkpoint c;
  c.models.emplace("policy", m);
  c.metadata = R"({"episode": 3})";
  Rng rng(5);
  rng();
  c.rng_state = rng_state(rng);
  save_checkpoint(dir / "a.ckpt", c);
  Checkpoint back = load_checkpoint(dir / "a.ckpt");
  const ModelParams& b = back.models.at("policy");
  CHECK(b.config == m.config);
  CHECK(b.adam_step == m.adam_step);
  for (const auto& [name, t] : m.params) {
    CHECK(b.at(name).value == t.value);
    CHECK(b.moments.at(name).v == m.moments.at(name).v);
  }
  CHECK(back.metadata == c.metadata);
  Rng r2;
  set_rng_state(r2, back.rng_state);
  CHECK(r2() == rng());

  // flip a byte of the stored vocabulary hash
  {
    std::fstream f(dir / "a.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(12);
    char ch = 0x5a;
    f.write(&ch, 1);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt"), CheckpointError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("seed determinism of initialization") {
  ModelParams a = init_policy(ModelConfig{}, 123);
  ModelParams b = init_policy(ModelConfig{}, 123);
  ModelParams c = init_policy(ModelConfig{}, 124);
  CHECK(a.at("l0.attn.w").value == b.at("l0.attn.w").value);
  CHECK(a.at("l0.attn.w").value != c.at("l0.attn.w").value);
  CHECK(freeze(a).role == Role::FrozenReference);
}
