#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "rlcf/eval/eval.hpp"

using namespace rlcf;
using namespace rlcf::eval;

namespace {

// Average over all k-subsets of the indicator "subset holds a good sample".
double subset_oracle(int n, int c, int k) {
  int hits = 0, total = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    ++total;
    // Samples 0..c-1 are the good ones.
    hits += (mask & ((1u << c) - 1u)) != 0;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

const taskgen::Corpus& corpus() {
  static const taskgen::Corpus c = taskgen::make_corpus(21, {10, 5, 10});
  return c;
}

EvalConfig small_eval() {
  EvalConfig c;
  c.n = 6;
  c.ks = {1, 5};
  c.temperatures = {0.2, 0.8};
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("metric_at_k: worked values and argument checks") {
  CHECK(metric_at_k(5, 5, 3) == 1.0);
  CHECK(metric_at_k(5, 0, 3) == 0.0);
  CHECK(metric_at_k(4, 2, 2) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK_THROWS(metric_at_k(3, 1, 4));
  CHECK_THROWS(metric_at_k(3, 4, 1));
  CHECK_THROWS(metric_at_k(3, 1, 0));
}

TEST_CASE("metric_at_k: exhaustive subset oracle and monotonicity for n <= 8") {
  double worst = 0.0;
  for (int n = 1; n <= 8; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) {
        worst = std::max(worst, std::abs(metric_at_k(n, c, k) - subset_oracle(n, c, k)));
        if (c >= 1 && k < n) CHECK(metric_at_k(n, c, k + 1) >= metric_at_k(n, c, k));
        if (c < n) CHECK(metric_at_k(n, c + 1, k) >= metric_at_k(n, c, k));
      }
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("evaluate: a stub emitting the reference passes everything") {
  ResponseSource ref = [](const TaskSample& t, int, double, Rng&) { return t.reference; };
  EvalReport r = evaluate(corpus().test, ref, small_eval());
  for (const auto& t : r.by_temperature) {
    CHECK(t.metrics.pass.at(1) == 1.0);
    CHECK(t.metrics.comp.at(5) == 1.0);
  }
  CHECK(r.best.pass.at(1) == 1.0);
  CHECK(r.chosen_temperature.at(1) == 0.2);
  for (double m : r.errors.mean_per_response) CHECK(m == 0.0);
}

TEST_CASE("evaluate: syntactic garbage never compiles") {
  ResponseSource junk = [](const TaskSample&, int, double, Rng&) { return minilang::parse_tokens(") ) ; <eop>"); };
  EvalReport r = evaluate(corpus().test, junk, small_eval());
  for (const auto& t : r.by_temperature) {
    for (int k : {1, 5}) CHECK(t.metrics.comp.at(k) == 0.0);
  }
  CHECK(r.errors.mean_per_response[static_cast<std::size_t>(minilang::DiagKind::SyntaxError)] == 1.0);
}

TEST_CASE("evaluate: tiers nest for every task and every response") {
  nn::ModelParams pol = nn::init_policy(nn::ModelConfig{.width = 16, .layers = 1, .heads = 2, .max_len = 128}, 4);
  train::SupervisedConfig sc;
  sc.epochs = 3;
  eval::finetune(pol, corpus().coarse, sc);
  EvalConfig c = small_eval();
  c.horizon = 40;
  EvalReport r = evaluate_model(pol, corpus().test, c);
  for (const auto& t : r.by_temperature) {
    for (const auto& tc : t.per_task) {
      CHECK(tc.pass <= tc.exec);
      CHECK(tc.exec <= tc.comp);
    }
    for (int k : c.ks) {
      CHECK(t.metrics.pass.at(k) <= t.metrics.exec.at(k));
      CHECK(t.metrics.exec.at(k) <= t.metrics.comp.at(k));
    }
  }
  // Per response.
  const TaskSample& task = corpus().test[0];
  ResponseSource src = policy_source(pol, 0.95, 40);
  for (int s = 0; s < 50; ++s) {
    Rng rng = make_rng(1, "tier", static_cast<std::uint64_t>(s));
    Tier t = classify(task, src(task, s, 1.0, rng));
    CHECK((!t.pass || t.exec));
    CHECK((!t.exec || t.comp));
  }

  const nlohmann::json j = to_json(r);
  EvalReport back = report_from_json(j);
  CHECK(to_json(back) == j);
  const std::string csv = table_csv(r, "boot");
  int rows = 0;
  for (char ch : csv) rows += ch == '\n';
  CHECK(rows == 1 + 2 * 3 * 2);
}

TEST_CASE("evaluate: n must exceed every k") {
  EvalConfig c = small_eval();
  c.n = 5;
  ResponseSource ref = [](const TaskSample& t, int, double, Rng&) { return t.reference; };
  CHECK_THROWS(evaluate(corpus().test, ref, c));
}

TEST_CASE("error profile: unused declarations are counted per response") {
  const TaskSample& task = corpus().test[1];
  ResponseSource two_unused = [](const TaskSample& t, int, double, Rng&) {
    // Two fresh names not bound by the task.
    std::vector<minilang::Token> fresh;
    for (int i = 0; i < minilang::tok::kNumIdents && fresh.size() < 2; ++i) {
      const minilang::Token id = minilang::ident(i);
      if (std::find(t.names.begin(), t.names.end(), id) == t.names.end()) fresh.push_back(id);
    }
    const std::string u(minilang::lexeme(fresh[0])), v(minilang::lexeme(fresh[1]));
    minilang::TokenSeq y = minilang::parse_tokens("let " + u + " : int = 1 ; let " + v + " : int = 2 ;");
    y.insert(y.end(), t.reference.begin(), t.reference.end());
    return y;
  };
  ResponseSource ref = [](const TaskSample& t, int, double, Rng&) { return t.reference; };
  const auto unused = static_cast<std::size_t>(minilang::DiagKind::UnusedVariable);

  ErrorProfile one = error_profile({task}, two_unused, 1, 0.6, 0);
  CHECK(one.totals[unused] == 2);
  CHECK(one.mean_per_response[unused] == 2.0);

  ErrorProfile clean = error_profile(corpus().test, ref, 2, 0.6, 0);
  for (double m : clean.mean_per_response) CHECK(m == 0.0);

  // Mixed: one response with 2, three with 0.
  ErrorProfile mix;
  Rng rng;
  add_to_profile(mix, minilang::compile_check(task.prompt, two_unused(task, 0, 0.6, rng)));
  for (int i = 0; i < 3; ++i) add_to_profile(mix, minilang::compile_check(task.prompt, task.reference));
  CHECK(mix.responses == 4);
  CHECK(mix.mean_per_response[unused] == doctest::Approx(0.5));
}
