// Acceptance suite: one PASS/FAIL line per criterion, exit 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "rlcf/cli/cli.hpp"
#include "rlcf/core/log.hpp"
#include "rlcf/nn/sampling.hpp"

using namespace rlcf;
using namespace rlcf::testing;
using minilang::TokenSeq;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

double seconds_since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// --- 1 ----------------------------------------------------------------------

Outcome estimator_oracle() {
  const auto t0 = clk::now();
  double worst = 0.0;
  int cases = 0;
  for (int n = 1; n <= 8; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) {
        int hits = 0, total = 0;
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
          if (__builtin_popcount(mask) != k) continue;
          ++total;
          hits += (mask & ((1u << c) - 1u)) != 0;
        }
        const double oracle = static_cast<double>(hits) / total;
        worst = std::max(worst, std::abs(eval::metric_at_k(n, c, k) - oracle));
        ++cases;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 1.0,
          std::to_string(cases) + " cases, max |diff| " + fmt("%.3g", worst) + ", " + fmt("%.3f s", secs)};
}

// --- 2 ----------------------------------------------------------------------

Outcome gae_oracle() {
  Rng rng = make_rng(2, "acceptance-gae", 0);
  const double grid[] = {0.0, 0.5, 0.95, 1.0};
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const int T = uniform_int(rng, 1, 6);
    const double g = grid[uniform_int(rng, 0, 3)], l = grid[uniform_int(rng, 0, 3)];
    std::vector<double> r(static_cast<std::size_t>(T)), v(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      r[static_cast<std::size_t>(t)] = 4.0 * uniform01(rng) - 2.0;
      v[static_cast<std::size_t>(t)] = 4.0 * uniform01(rng) - 2.0;
    }
    const train::GaeResult got = train::gae(r, v, g, l);
    for (int t = 0; t < T; ++t) {
      // A_t = sum_l (g l)^l delta_{t+l}, delta_j = r_j + g v_{j+1} - v_j, v_T = 0.
      double a = 0.0;
      for (int j = t; j < T; ++j) {
        const double next = j + 1 < T ? v[static_cast<std::size_t>(j + 1)] : 0.0;
        const double delta = r[static_cast<std::size_t>(j)] + g * next - v[static_cast<std::size_t>(j)];
        a += std::pow(g * l, j - t) * delta;
      }
      const auto ti = static_cast<std::size_t>(t);
      worst = std::max(worst, std::abs(got.advantages[ti] - a));
      worst = std::max(worst, std::abs(got.returns[ti] - (a + v[ti])));
    }
  }
  return {worst <= 1e-10, "500 trajectories, max |diff| " + fmt("%.3g", worst)};
}

// --- 3 ----------------------------------------------------------------------

Outcome gradient_checks() {
  std::map<std::string, double> worst;
  std::map<std::string, int> configs;
  auto note = [&](const std::string& block, double e) {
    worst[block] = std::max(worst[block], e);
    ++configs[block];
  };
  Rng rng = make_rng(3, "acceptance-grad", 0);
  for (int trial = 0; trial < 20; ++trial) {
    {
      const int V = uniform_int(rng, 3, 9), d = uniform_int(rng, 2, 6), T = uniform_int(rng, 1, 7);
      std::vector<int> ids;
      for (int i = 0; i < T; ++i) ids.push_back(uniform_int(rng, 0, V - 1));
      const Matrix dir = randn(rng, T, d);
      note("embedding", check_leaves({randn(rng, V, d)},
                                     [&](Tape&, std::vector<Var>& x) { return probe(gather_rows(x[0], ids), dir); }));
    }
    {
      const int H = uniform_int(rng, 1, 3), dh = uniform_int(rng, 1, 3), T = uniform_int(rng, 1, 6);
      const bool causal = trial % 2 == 0;
      const Matrix dir = randn(rng, T, H * dh);
      note("attention", check_leaves({randn(rng, T, H * dh), randn(rng, H * dh, 3 * H * dh, 0.7)},
                                     [&](Tape&, std::vector<Var>& x) {
                                       return probe(attention(matmul(x[0], x[1]), H, causal), dir);
                                     }));
    }
    {
      const int T = uniform_int(rng, 1, 5), d = uniform_int(rng, 1, 5), f = uniform_int(rng, 1, 8);
      const Matrix dir = randn(rng, T, d);
      note("feed-forward",
           check_leaves({randn(rng, T, d), randn(rng, d, f), randn(rng, 1, f), randn(rng, f, d), randn(rng, 1, d)},
                        [&](Tape&, std::vector<Var>& x) {
                          Var h = gelu(add_row(matmul(x[0], x[1]), x[2]));
                          return probe(add_row(matmul(h, x[3]), x[4]), dir);
                        }));
    }
    {
      const int T = uniform_int(rng, 1, 5), d = uniform_int(rng, 2, 8);
      const Matrix dir = randn(rng, T, d);
      note("layer-norm", check_leaves({randn(rng, T, d, 2.0), randn(rng, 1, d), randn(rng, 1, d)},
                                      [&](Tape&, std::vector<Var>& x) { return probe(layer_norm(x[0], x[1], x[2]), dir); }));
    }
    {
      const int T = uniform_int(rng, 1, 5), V = uniform_int(rng, 2, 6);
      std::vector<int> tgt;
      for (int i = 0; i < T; ++i) tgt.push_back(uniform_int(rng, 0, V - 1));
      const Matrix dir = randn(rng, T, V);
      const Vector old = randn(rng, T, 1, 0.3).col(0), adv = randn(rng, T, 1).col(0), target = randn(rng, T, 1).col(0);
      const double label = uniform01(rng);
      note("losses", check_leaves({randn(rng, T, V)}, [&](Tape&, std::vector<Var>& x) {
             Var lp = pick_log_probs(x[0], tgt);
             Var a = add(clipped_surrogate_loss(lp, old, adv, 0.2), squared_error(lp, target));
             Var b = add(probe(log_softmax(x[0]), dir), probe(sigmoid(tanh(x[0])), dir));
             Var c = add(squared_distance(row(x[0], 0), max_pool_rows(exp(scale(x[0], 0.5)))),
                         bce_with_logits(slice_rows(sum(x[0]), 0, 1), label));
             return add(add(a, b), add(c, mean(relu(add_scalar(x[0], 0.1)))));
           }));
    }
    {
      ModelParams m = init_policy(tiny_config(rng), rng());
      perturb(m, rng);
      const TokenSeq x = random_tokens(rng, uniform_int(rng, 1, 5)), y = random_tokens(rng, uniform_int(rng, 1, 5));
      note("policy", check_model(m, [&](Tape& t, const ModelParams& mm) { return sum(sequence_log_probs(t, mm, x, y)); }, rng));
    }
    {
      ModelParams critic = init_critic(init_policy(tiny_config(rng), rng()), rng());
      perturb(critic, rng);
      const TokenSeq x = random_tokens(rng, uniform_int(rng, 1, 4)), y = random_tokens(rng, uniform_int(rng, 1, 5));
      const Vector g = randn(rng, static_cast<Eigen::Index>(y.size()), 1).col(0);
      note("value-head",
           check_model(critic, [&](Tape& t, const ModelParams& mm) { return squared_error(critic_values(t, mm, x, y), g); },
                       rng));
    }
    {
      ModelParams disc = init_discriminator(tiny_config(rng), rng());
      perturb(disc, rng);
      const TokenSeq x = random_tokens(rng, uniform_int(rng, 1, 4));
      const TokenSeq y0 = random_tokens(rng, uniform_int(rng, 1, 5)), y1 = random_tokens(rng, uniform_int(rng, 1, 5));
      note("discriminator",
           check_model(disc, [&](Tape& t, const ModelParams& mm) { return discriminator_score(t, mm, x, y0, y1); }, rng));
    }
    {
      ModelParams cc = init_compile_critic(init_policy(tiny_config(rng), rng()), rng());
      perturb(cc, rng);
      const TokenSeq x = random_tokens(rng, uniform_int(rng, 1, 4)), y = random_tokens(rng, uniform_int(rng, 1, 5));
      note("compile-critic", check_model(cc, [&](Tape& t, const ModelParams& mm) {
             auto out = compile_critic_forward(t, mm, x, y);
             return add(bce_with_logits(out.pooled_logit, 1.0), sum(sigmoid(out.token_logits)));
           }, rng));
    }
  }
  bool ok = true;
  double overall = 0.0;
  std::string detail;
  for (const auto& [block, e] : worst) {
    ok = ok && e < 1e-5 && configs[block] >= 20;
    overall = std::max(overall, e);
  }
  detail = std::to_string(worst.size()) + " blocks x 20 configs, worst rel err " + fmt("%.3g", overall);
  return {ok, detail};
}

// --- shared pipeline for criteria 4 and 8-12 ------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  taskgen::Corpus corpus;
  ModelParams boot, disc;  // disc after pretraining
  std::vector<train::BatchMetrics> rlcf_metrics, disc_only_metrics;
  ModelParams rlcf_policy, rlcf_disc, mono, compiler_only;
  std::int64_t rlcf_tokens = 0;
  std::map<std::string, eval::EvalReport> reports;
};

const cli::json& config() {
  static const cli::json c = cli::default_config();
  return c;
}

cli::json config_for(std::uint64_t seed) {
  cli::json c = config();
  c["seed"] = seed;
  return c;
}

std::vector<train::BatchMetrics> run_rl(const cli::json& c, const std::string& method, const ModelParams& boot,
                                        const ModelParams& disc, const std::vector<taskgen::Example>& data,
                                        train::RlcfState* out) {
  const train::RlcfConfig rc = cli::rlcf_config(c, method);
  train::RlcfState st = train::make_rlcf_state(boot, disc, rc);
  std::vector<train::BatchMetrics> ms;
  train::train_rlcf(rc, data, st, nullptr, [&](const train::BatchMetrics& m) { ms.push_back(m); });
  if (out) *out = std::move(st);
  return ms;
}

eval::EvalReport finetune_and_eval(const cli::json& c, ModelParams policy, const taskgen::Corpus& corpus) {
  eval::finetune(policy, corpus.finetune, cli::eval_finetune_config(c));
  return eval::evaluate_model(policy, corpus.test, cli::eval_config(c));
}

std::map<std::uint64_t, std::unique_ptr<SeedRun>> g_runs;

SeedRun& seed_run(std::uint64_t seed) {
  auto& slot = g_runs[seed];
  if (slot) return *slot;
  const auto t0 = clk::now();
  slot = std::make_unique<SeedRun>();
  SeedRun& r = *slot;
  r.seed = seed;
  const cli::json c = config_for(seed);
  r.corpus = taskgen::make_corpus(seed, cli::corpus_sizes(c));
  const auto data = taskgen::training_view(r.corpus.coarse);

  r.boot = nn::init_policy(cli::model_config(c), derive_seed(seed, "init-policy"));
  train::bootstrap_supervised(r.boot, data, cli::bootstrap_config(c));
  r.disc = nn::init_discriminator(r.boot.config, derive_seed(seed, "init-disc"));
  train::pretrain_discriminator(r.disc, r.corpus.coarse, r.boot, cli::disc_config(c));

  train::RlcfState st;
  r.rlcf_metrics = run_rl(c, "rlcf", r.boot, r.disc, data, &st);
  r.rlcf_policy = st.policy;
  r.rlcf_disc = st.disc;
  for (const auto& m : r.rlcf_metrics) r.rlcf_tokens += m.tokens;

  r.disc_only_metrics = run_rl(c, "disc-only", r.boot, r.disc, data, nullptr);
  train::RlcfState co;
  run_rl(c, "compiler-only", r.boot, r.disc, data, &co);
  r.compiler_only = co.policy;

  // Mono: same sequences, same reference token budget as the RLCF run.
  baselines::BaselineConfig bc = cli::baseline_config(c);
  bc.token_budget = r.rlcf_tokens;
  r.mono = r.boot;
  baselines::train_mono(r.mono, data, bc);

  r.reports["bootstrap"] = finetune_and_eval(c, r.boot, r.corpus);
  r.reports["rlcf"] = finetune_and_eval(c, r.rlcf_policy, r.corpus);
  r.reports["mono"] = finetune_and_eval(c, r.mono, r.corpus);
  r.reports["compiler-only"] = finetune_and_eval(c, r.compiler_only, r.corpus);
  std::cout << "  [seed " << seed << " pipeline " << fmt("%.0f s", seconds_since(t0)) << "]";
  for (const auto& [name, rep] : r.reports) {
    std::cout << "  " << name << " pass@10 " << fmt("%.4f", rep.best.pass.at(10)) << " comp@10 "
              << fmt("%.4f", rep.best.comp.at(10));
  }
  std::cout << std::endl;
  return r;
}

const std::uint64_t kSeeds[] = {1, 2, 3};

// --- 4 ----------------------------------------------------------------------

Outcome disc_algebra() {
  const SeedRun& r = seed_run(1);
  const ModelParams fresh = nn::init_discriminator(r.boot.config, derive_seed(99, "init-disc"));
  Rng rng = make_rng(4, "acceptance-disc", 0);
  double diag = 0.0, anti = 0.0;
  const auto& tasks = r.corpus.test;
  for (int i = 0; i < 1000; ++i) {
    const auto& t = tasks[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(tasks.size()) - 1))];
    auto pick = [&]() -> TokenSeq {
      switch (uniform_int(rng, 0, 2)) {
        case 0: return t.reference;
        case 1: return random_tokens(rng, uniform_int(rng, 1, 40));
        default: {
          const auto v = taskgen::equivalent_variants(t, rng());
          return v.empty() ? t.reference : v[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(v.size()) - 1))];
        }
      }
    };
    const TokenSeq y0 = pick(), y1 = pick();
    for (const ModelParams* d : {&fresh, &r.rlcf_disc}) {
      diag = std::max(diag, std::abs(nn::discriminator_score(*d, t.prompt, y0, y0)));
      anti = std::max(anti, std::abs(nn::discriminator_score(*d, t.prompt, y0, y1) +
                                     nn::discriminator_score(*d, t.prompt, y1, y0)));
    }
  }
  return {diag <= 1e-12 && anti <= 1e-9,
          "1000 inputs x {init, trained}: max |D(x,y,y)| " + fmt("%.3g", diag) + ", max |D01+D10| " + fmt("%.3g", anti)};
}

// --- 5 ----------------------------------------------------------------------

TokenSeq corrupt_until_failing(const TokenSeq& prompt, TokenSeq y, Rng& rng) {
  while (minilang::compile_check(prompt, y).ok) {
    const auto at = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(y.size()) - 1));
    y[at] = static_cast<minilang::Token>(uniform_int(rng, 1, minilang::kVocabSize - 1));
  }
  return y;
}

Outcome compiler_dominance() {
  const ModelParams disc = nn::init_discriminator(nn::ModelConfig{}, 5);
  const grounding::Scorer real = grounding::discriminator_scorer(disc);
  int calls = 0;
  const grounding::Scorer counted = [&](const TokenSeq& x, const TokenSeq& a, const TokenSeq& b) {
    ++calls;
    return real(x, a, b);
  };
  Rng rng = make_rng(5, "acceptance-dominance", 0);
  int exact = 0, pairs = 0;
  for (int i = 0; i < 500; ++i) {
    const auto f = taskgen::kAllFamilies[static_cast<std::size_t>(uniform_int(rng, 0, taskgen::kNumFamilies - 1))];
    const taskgen::TaskSample s = taskgen::sample_task_pair(f, rng());
    const TokenSeq bad = corrupt_until_failing(s.prompt, s.reference, rng);
    const auto a = grounding::ground(s.prompt, s.reference, bad, counted);
    const auto b = grounding::ground(s.prompt, bad, s.reference, counted);
    exact += a.score == 1.0 && a.source == grounding::Source::CompilerRule;
    exact += b.score == -1.0 && b.source == grounding::Source::CompilerRule;
    pairs += 2;
  }
  const int dominance_calls = calls;
  // Control: a both-compile pair does reach the discriminator.
  const taskgen::TaskSample s = taskgen::sample_task_pair(taskgen::kAllFamilies[0], 7);
  grounding::ground(s.prompt, s.reference, s.reference, counted);
  return {exact == pairs && dominance_calls == 0 && calls == 1,
          std::to_string(exact) + "/" + std::to_string(pairs) + " exact +-1, discriminator calls " +
              std::to_string(dominance_calls) + " (control pair: " + std::to_string(calls - dominance_calls) + ")"};
}

// --- 6 ----------------------------------------------------------------------

Outcome truncation() {
  Rng rng = make_rng(6, "acceptance-truncation", 0);
  int calls = 0;
  const grounding::Scorer counted = [&](const TokenSeq&, const TokenSeq&, const TokenSeq&) {
    ++calls;
    return 0.0;
  };
  int good = 0, done = 0, at_end = 0;
  while (done < 1000) {
    const auto f = taskgen::kAllFamilies[static_cast<std::size_t>(uniform_int(rng, 0, taskgen::kNumFamilies - 1))];
    const taskgen::TaskSample s = taskgen::sample_task_pair(f, rng());
    TokenSeq y = s.reference;
    const int edits = uniform_int(rng, 1, 3);
    for (int e = 0; e < edits; ++e) {
      y[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(y.size()) - 1))] =
          static_cast<minilang::Token>(uniform_int(rng, 1, minilang::kVocabSize - 1));
    }
    const auto cr = minilang::compile_check(s.prompt, y);
    if (cr.ok) continue;
    ++done;
    const grounding::Sampler fixed = [&y](const TokenSeq&) {
      nn::SampledResponse r;
      r.tokens = y;
      r.logprobs.assign(y.size(), -1.0);
      return r;
    };
    const grounding::Rollout r = grounding::rollout_trajectory(s.prompt, s.reference, fixed, counted);
    const std::size_t first = *cr.first_error_index - minilang::code_portion(s.prompt).size();
    // An error blamed on end-of-input keeps the whole response.
    const std::size_t keep = std::min(first + 1, y.size());
    const bool ok = r.tokens == TokenSeq(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(keep)) &&
                    r.logprobs.size() == keep && r.reward == -1.0 && r.error_index == std::min(first, y.size() - 1);
    good += ok;
    at_end += first + 1 >= y.size();
  }
  return {good == 1000 && calls == 0, std::to_string(good) + "/1000 rollouts cut to first_error+1 tokens with R = -1 (" + std::to_string(at_end) +
                                       " blamed on the last token or end of input)"};
}

// --- 7 ----------------------------------------------------------------------

Outcome ppo_clip() {
  bool ok = true;
  for (double a : {-2.0, -1.0, 0.0, 0.5, 3.0}) ok = ok && train::ppo_clip_term(1.0, a, 0.2) == a;
  const double up = train::ppo_clip_term(1.5, 1.0, 0.2), down = train::ppo_clip_term(0.5, -1.0, 0.2);
  ok = ok && up == 1.2 && down == -0.8;
  return {ok, "rho=1 -> A; (1.5, 0.2, 1) -> " + fmt("%.17g", up) + "; (0.5, 0.2, -1) -> " + fmt("%.17g", down)};
}

// --- 8 ----------------------------------------------------------------------

Outcome end_to_end() {
  int wins = 0;
  double dcomp = 0.0, dpass = 0.0;
  std::ostringstream s;
  for (std::uint64_t seed : kSeeds) {
    const SeedRun& r = seed_run(seed);
    const auto& a = r.reports.at("rlcf").best;
    const auto& b = r.reports.at("mono").best;
    const double c = a.comp.at(10) - b.comp.at(10), p = a.pass.at(10) - b.pass.at(10);
    wins += c > 0 && p > 0;
    dcomp += c / 3.0;
    dpass += p / 3.0;
    s << "seed " << seed << " dcomp " << fmt("%+.4f", c) << " dpass " << fmt("%+.4f", p) << "; ";
  }
  s << "mean dcomp " << fmt("%+.4f", dcomp) << " dpass " << fmt("%+.4f", dpass) << ", wins " << wins << "/3";
  return {wins >= 2 && dcomp > 0 && dpass > 0, s.str()};
}

// --- 9 ----------------------------------------------------------------------

double mean_error_rate(const std::vector<train::BatchMetrics>& ms) {
  double e = 0.0;
  for (const auto& m : ms) e += 1.0 - m.compile_rate;
  return e / static_cast<double>(ms.size());
}

Outcome ablation() {
  int surge = 0, anchored = 0;
  std::ostringstream s;
  for (std::uint64_t seed : kSeeds) {
    const SeedRun& r = seed_run(seed);
    // Batches are matched one to one (same episode grid).
    const double full = mean_error_rate(r.rlcf_metrics), disc_only = mean_error_rate(r.disc_only_metrics);
    const double co = r.reports.at("compiler-only").best.pass.at(10), rl = r.reports.at("rlcf").best.pass.at(10);
    surge += r.rlcf_metrics.size() == r.disc_only_metrics.size() && disc_only >= full;
    anchored += co <= rl;
    s << "seed " << seed << " err disc-only " << fmt("%.3f", disc_only) << " vs full " << fmt("%.3f", full)
      << ", pass@10 compiler-only " << fmt("%.4f", co) << " vs full " << fmt("%.4f", rl) << "; ";
  }
  s << "surge " << surge << "/3, anchored " << anchored << "/3";
  return {surge >= 2 && anchored >= 2, s.str()};
}

// --- 10 ---------------------------------------------------------------------

Outcome freeze_disc() {
  const SeedRun& r = seed_run(1);
  const cli::json c = config_for(1);
  cli::json fc = c;
  fc["rlcf"]["episodes"] = 200;
  train::RlcfState st;
  run_rl(fc, "rlcf-fixdisc", r.boot, r.disc, taskgen::training_view(r.corpus.coarse), &st);
  bool identical = true;
  for (const auto& [name, t] : r.disc.params) identical = identical && (t.value.array() == st.disc.at(name).value.array()).all();

  // Co-trained run: moving average (5 batches) of the pre-step disc loss over episodes 1-200.
  std::vector<double> dl;
  for (const auto& m : r.rlcf_metrics) {
    if (m.episode <= 200) dl.push_back(m.disc_loss);
  }
  const std::size_t w = 5;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < w; ++i) {
    first += dl[i] / w;
    last += dl[dl.size() - w + i] / w;
  }
  return {identical && last < first, std::string("frozen disc bit-identical: ") + (identical ? "yes" : "no") +
                                         "; co-trained disc loss MA " + fmt("%.4f", first) + " -> " + fmt("%.4f", last)};
}

// --- 11 ---------------------------------------------------------------------

double policy_kl(const ModelParams& policy, const ModelParams& ref, const std::vector<taskgen::Example>& data) {
  // Monte Carlo E_{y ~ policy}[log p - log p_ref] per token, full distribution.
  nn::SamplingConfig sc;
  sc.temperature = 1.0;
  sc.top_p = 1.0;
  sc.max_len = config()["rlcf"]["horizon"].get<int>();
  double kl = 0.0;
  std::size_t tokens = 0;
  for (int i = 0; i < 400; ++i) {
    const auto& ex = data[static_cast<std::size_t>(i) % data.size()];
    Rng rng = make_rng(11, "acceptance-kl", static_cast<std::uint64_t>(i));
    const TokenSeq y = nn::sample_response(policy, ex.prompt, sc, rng).tokens;
    const auto a = nn::sequence_log_probs(policy, ex.prompt, y);
    const auto b = nn::sequence_log_probs(ref, ex.prompt, y);
    for (std::size_t j = 0; j < y.size(); ++j) kl += a[j] - b[j];
    tokens += y.size();
  }
  return kl / static_cast<double>(tokens);
}

Outcome anchor() {
  const SeedRun& r = seed_run(1);
  const auto data = taskgen::training_view(r.corpus.coarse);
  double kl[2];
  int i = 0;
  for (double beta : {10.0, 0.0}) {
    cli::json c = config_for(1);
    c["rlcf"]["episodes"] = 500;
    c["rlcf"]["beta_init"] = beta;
    c["rlcf"]["adaptive_kl"] = false;
    train::RlcfState st;
    run_rl(c, "rlcf", r.boot, r.disc, data, &st);
    kl[i++] = policy_kl(st.policy, r.boot, data);
  }
  return {kl[0] < kl[1], "per-token KL after 500 episodes: beta=10 " + fmt("%.5f", kl[0]) + ", beta=0 " + fmt("%.5f", kl[1])};
}

// --- 12 ---------------------------------------------------------------------

Outcome triplet() {
  const SeedRun& r = seed_run(1);
  train::DiscPretrainConfig dc = cli::disc_config(config_for(1));
  dc.adv_epochs = 0;  // phase 1 only
  ModelParams disc = nn::init_discriminator(r.boot.config, derive_seed(1, "init-disc"));
  train::pretrain_discriminator(disc, r.corpus.coarse, r.boot, dc);
  std::vector<taskgen::TaskSample> held = r.corpus.finetune;
  held.insert(held.end(), r.corpus.test.begin(), r.corpus.test.end());
  const auto triples = taskgen::make_triples(held, derive_seed(1, "held-out-triples"));
  const double acc = train::triplet_accuracy(disc, triples);
  return {acc >= 0.8, std::to_string(triples.size()) + " held-out triples, d(a,p) < d(a,n) on " + fmt("%.3f", acc)};
}

// --- 13 ---------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = s.str();
  }
  return files;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "rlcf_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cfg = (root / "small.json").string();
  std::ofstream(cfg) << R"({"corpus": {"coarse": 24, "finetune": 8, "test": 6},
    "model": {"width": 16, "layers": 1, "heads": 2, "max_len": 128}, "bootstrap": {"epochs": 3},
    "disc": {"triplet_epochs": 1, "adv_epochs": 1}, "rlcf": {"episodes": 48, "horizon": 32, "checkpoint_every": 2},
    "critic": {"samples": 24, "epochs": 1},
    "eval": {"n": 6, "ks": [1, 5], "temperatures": [0.2, 0.8], "horizon": 32, "finetune_epochs": 1, "profile_samples": 3}})";

  auto pipeline = [&](const fs::path& dir) {
    std::ostringstream sink;
    auto run = [&](std::vector<std::string> a) {
      a.insert(a.end(), {"--config", cfg, "--seed", "13", "--quiet"});
      return cli::run_command(a, sink, sink);
    };
    const std::string d = (dir / "data").string(), b = (dir / "boot").string(), p = (dir / "disc").string();
    int bad = 0;
    bad += run({"gen-data", "--out", d}) != 0;
    bad += run({"bootstrap", "--data", d, "--out", b}) != 0;
    bad += run({"pretrain-disc", "--data", d, "--policy", b + "/policy.ckpt", "--out", p}) != 0;
    std::vector<std::string> runs;
    for (const auto& m : cli::train_methods()) {
      const std::string out = (dir / m).string();
      bad += run({"train", "--method", m, "--data", d, "--policy", b + "/policy.ckpt", "--disc", p + "/disc.ckpt",
                  "--out", out}) != 0;
      bad += run({"eval", "--data", d, "--policy", out + "/policy.ckpt", "--out", out}) != 0;
      bad += run({"profile-errors", "--data", d, "--policy", out + "/policy.ckpt", "--out", out}) != 0;
      runs.push_back(out);
    }
    std::vector<std::string> rep = {"report", "--out", (dir / "report").string(), "--runs"};
    rep.insert(rep.end(), runs.begin(), runs.end());
    bad += cli::run_command(rep, sink, sink) != 0;
    return bad;
  };
  const int bad_a = pipeline(root / "a"), bad_b = pipeline(root / "b");
  const auto a = snapshot(root / "a"), b = snapshot(root / "b");
  int differing = 0;
  std::string first_diff;
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    // The report lists its input directories, which differ by construction.
    if (name == "report/report.json") continue;
    if (it == b.end() || it->second != bytes) {
      if (first_diff.empty()) first_diff = name;
      ++differing;
    }
  }
  fs::remove_all(root);
  const bool ok = bad_a == 0 && bad_b == 0 && differing == 0 && a.size() == b.size() && a.size() > 40;
  return {ok, std::to_string(a.size()) + " output files from every command, " + std::to_string(differing) +
                  " differ" + (first_diff.empty() ? "" : " (first: " + first_diff + ")") +
                  (bad_a + bad_b ? ", " + std::to_string(bad_a + bad_b) + " commands failed" : "")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "run a subset of criteria");
  CLI11_PARSE(app, argc, argv);
  set_log_level(LogLevel::Warn);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"estimator oracle", estimator_oracle},
      {"GAE oracle", gae_oracle},
      {"gradient checks", gradient_checks},
      {"discriminator algebra", disc_algebra},
      {"compiler dominance", compiler_dominance},
      {"truncation", truncation},
      {"PPO clip values", ppo_clip},
      {"end-to-end RLCF vs Mono", end_to_end},
      {"feedback ablations", ablation},
      {"freezeDisc", freeze_disc},
      {"anchor containment", anchor},
      {"triplet pretraining", triplet},
      {"determinism", determinism},
  };
  int failed = 0;
  const std::set<int> subset(only.begin(), only.end());
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!subset.empty() && !subset.count(id)) continue;
    const auto t0 = clk::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << "  [" << fmt("%.1f s", seconds_since(t0)) << "]" << std::endl;
  }
  std::cout << (failed == 0 ? "ALL CRITERIA PASS" : std::to_string(failed) + " CRITERIA FAILED") << std::endl;
  return failed == 0 ? 0 : 1;
}
