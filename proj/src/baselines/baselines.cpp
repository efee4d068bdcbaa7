#include "rlcf/baselines/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "rlcf/core/rng.hpp"
#include "rlcf/nn/sampling.hpp"

namespace rlcf::baselines {

void BaselineConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("baseline config: " + m); };
  if (episodes < 0) fail("episodes must be >= 0");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (!(lr >= 0.0)) fail("lr must be >= 0");
  if (!(temperature > 0.0)) fail("temperature must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) fail("top_p must be in (0, 1]");
  if (horizon <= 0) fail("horizon must be positive");
  if (token_budget < 0) fail("token_budget must be >= 0");
}

std::uint64_t BaselineConfig::hash(const char* method) const {
  std::ostringstream s;
  s.precision(17);
  s << "baseline-v1|" << method << '|' << episodes << '|' << batch_size << '|' << lr << '|' << temperature << '|'
    << top_p << '|' << horizon << '|' << token_budget << '|' << seed << '|' << optim.beta1 << '|' << optim.beta2 << '|' << optim.eps << '|'
    << optim.weight_decay << '|' << optim.clip_norm;
  return fnv1a64(s.str());
}

namespace {

nn::SamplingConfig sampling(const BaselineConfig& c) {
  nn::SamplingConfig sc;
  sc.temperature = c.temperature;
  sc.top_p = c.top_p;
  sc.max_len = c.horizon;
  return sc;
}

// Same task stream as the RLCF loop for a given seed.
std::size_t episode_task(std::uint64_t seed, std::int64_t episode, std::size_t n, Rng& rng) {
  rng = make_rng(seed, "episode", static_cast<std::uint64_t>(episode));
  return static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(n) - 1));
}

void apply_step(nn::Tape& tape, nn::Var loss, ModelParams& policy, double lr, std::int64_t step,
                const nn::AdamWConfig& optim, const char* what) {
  if (!std::isfinite(loss.item())) throw nn::NonFiniteError(std::string(what) + " loss is not finite");
  tape.backward(loss);
  nn::accumulate_grads(tape, policy);
  nn::optimizer_step(policy, lr, step, optim);
}

}  // namespace

// --- Mono --------------------------------------------------------------------

train::SupervisedConfig mono_config(const BaselineConfig& c, int epochs) {
  train::SupervisedConfig s;
  s.epochs = epochs;
  s.lr = c.lr;
  s.batch_size = c.batch_size;
  s.seed = c.seed;
  s.max_sequences = c.episodes;
  s.max_tokens = c.token_budget;
  s.optim = c.optim;
  return s;
}

void train_mono(ModelParams& policy, const std::vector<Example>& corpus, const BaselineConfig& c,
                train::MetricsWriter* metrics) {
  c.validate();
  if (corpus.empty()) throw std::invalid_argument("train_mono: empty corpus");
  if (c.episodes == 0) return;
  const auto n = static_cast<std::int64_t>(corpus.size());
  const int epochs = static_cast<int>((c.episodes + n - 1) / n);
  std::int64_t seen = 0;
  train::bootstrap_supervised(policy, corpus, mono_config(c, epochs), [&](const train::SupervisedStep& s) {
    seen += static_cast<std::int64_t>(s.batch->size());
    if (!metrics) return;
    train::BatchMetrics m;
    m.episode = seen;
    m.policy_loss = s.loss_before;
    for (const Example* e : *s.batch) m.tokens += static_cast<std::int64_t>(e->reference.size());
    metrics->record(m);
  });
}

// --- Bipolar RAMP -------------------------------------------------------------

std::optional<std::size_t> failure_token(const TokenSeq& prompt, const TokenSeq& response) {
  if (response.empty()) return std::nullopt;
  const minilang::CompileResult r = minilang::compile_check(prompt, response);
  if (r.ok || !r.first_error_index) return std::nullopt;
  const std::size_t code_len = minilang::code_portion(prompt).size();
  const std::size_t blamed = *r.first_error_index;
  return std::min(blamed >= code_len ? blamed - code_len : 0, response.size() - 1);
}

nn::Var ramp_loss(nn::Tape& tape, const ModelParams& policy, const std::vector<RampItem>& batch) {
  if (batch.empty()) throw std::invalid_argument("ramp_loss: empty batch");
  std::vector<const Example*> refs;
  std::size_t tokens = 0;
  for (const auto& it : batch) {
    refs.push_back(it.example);
    tokens += it.example->reference.size();
  }
  nn::Var loss = train::supervised_loss(tape, policy, refs);
  for (const auto& it : batch) {
    if (!it.fail_at) continue;
    // Only the prefix up to the blamed token is needed.
    const TokenSeq prefix(it.negative.begin(), it.negative.begin() + static_cast<std::ptrdiff_t>(*it.fail_at) + 1);
    nn::Var lp = nn::sequence_log_probs(tape, policy, it.example->prompt, prefix);
    nn::Var blamed = nn::slice_rows(lp, static_cast<int>(*it.fail_at), 1);
    loss = nn::add(loss, nn::scale(blamed, 1.0 / static_cast<double>(tokens)));
  }
  return loss;
}

void train_bipolar_ramp(ModelParams& policy, const std::vector<Example>& corpus, const BaselineConfig& c,
                        train::MetricsWriter* metrics) {
  c.validate();
  if (corpus.empty()) throw std::invalid_argument("train_bipolar_ramp: empty corpus");
  const std::int64_t steps = (c.episodes + c.batch_size - 1) / c.batch_size;
  nn::reset_optimizer(policy);
  policy.zero_grad();
  nn::AdamWConfig optim = c.optim;
  optim.total_steps = steps;
  const nn::SamplingConfig sc = sampling(c);
  std::int64_t episode = 0;
  for (std::int64_t step = 0; step < steps; ++step) {
    const int count = static_cast<int>(std::min<std::int64_t>(c.batch_size, c.episodes - episode));
    std::vector<RampItem> batch;
    train::BatchMetrics m;
    double compiled = 0;
    for (int i = 0; i < count; ++i, ++episode) {
      Rng rng;
      const Example& ex = corpus[episode_task(c.seed, episode, corpus.size(), rng)];
      RampItem it;
      it.example = &ex;
      it.negative = nn::sample_response(policy, ex.prompt, sc, rng).tokens;
      it.fail_at = failure_token(ex.prompt, it.negative);
      compiled += it.fail_at ? 0.0 : 1.0;
      if (metrics) train::count_errors(m, minilang::compile_check(ex.prompt, it.negative));
      m.tokens += static_cast<std::int64_t>(ex.reference.size() + (it.fail_at ? *it.fail_at + 1 : 0));
      batch.push_back(std::move(it));
    }
    nn::Tape tape;
    nn::Var loss = ramp_loss(tape, policy, batch);
    const double before = loss.item();
    apply_step(tape, loss, policy, c.lr, step, optim, "RAMP");
    if (metrics) {
      for (double& v : m.errors) v /= count;
      m.episode = episode;
      m.compile_rate = compiled / count;
      m.mean_reward = 2.0 * m.compile_rate - 1.0;
      m.policy_loss = before;
      metrics->record(m);
    }
  }
}

// --- CodeRL ---------------------------------------------------------------

std::vector<LabeledSample> collect_compile_samples(const ModelParams& policy, const std::vector<Example>& corpus,
                                                   const CriticTrainConfig& c) {
  if (corpus.empty()) throw std::invalid_argument("collect_compile_samples: empty corpus");
  nn::SamplingConfig sc;
  sc.temperature = c.temperature;
  sc.top_p = c.top_p;
  sc.max_len = c.horizon;
  std::vector<LabeledSample> out;
  out.reserve(static_cast<std::size_t>(c.samples));
  for (int i = 0; i < c.samples; ++i) {
    const Example& ex = corpus[static_cast<std::size_t>(i) % corpus.size()];
    Rng rng = make_rng(c.seed, "critic-sample", static_cast<std::uint64_t>(i));
    LabeledSample s{ex.prompt, nn::sample_response(policy, ex.prompt, sc, rng).tokens, false};
    s.compiles = minilang::compile_check(s.prompt, s.response).ok;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<double> train_compile_critic(ModelParams& critic, const std::vector<LabeledSample>& data,
                                         const CriticTrainConfig& c) {
  if (data.empty()) throw std::invalid_argument("train_compile_critic: no data");
  std::vector<double> losses;
  const auto bs = static_cast<std::size_t>(std::max(1, c.batch_size));
  nn::reset_optimizer(critic);
  critic.zero_grad();
  nn::AdamWConfig optim = c.optim;
  optim.total_steps = static_cast<std::int64_t>(c.epochs * ((data.size() + bs - 1) / bs));
  std::int64_t step = 0;
  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(c.seed, "critic-shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      nn::Tape tape;
      nn::Var total;
      for (std::size_t i = start; i < end; ++i) {
        const LabeledSample& s = data[order[i]];
        nn::CompileCriticOut o = nn::compile_critic_forward(tape, critic, s.prompt, s.response);
        nn::Var l = nn::bce_with_logits(o.pooled_logit, s.compiles ? 1.0 : 0.0);
        total = i == start ? l : nn::add(total, l);
      }
      nn::Var loss = nn::scale(total, 1.0 / static_cast<double>(end - start));
      losses.push_back(loss.item());
      apply_step(tape, loss, critic, c.lr, step++, optim, "compile critic");
    }
  }
  nn::reset_optimizer(critic);
  return losses;
}

double compile_probability(const ModelParams& critic, const TokenSeq& prompt, const TokenSeq& response) {
  nn::Tape tape(false);
  return nn::sigmoid(nn::compile_critic_forward(tape, critic, prompt, response).pooled_logit).item();
}

std::vector<double> token_compile_probabilities(const ModelParams& critic, const TokenSeq& prompt,
                                                const TokenSeq& response) {
  nn::Tape tape(false);
  nn::Var p = nn::sigmoid(nn::compile_critic_forward(tape, critic, prompt, response).token_logits);
  return std::vector<double>(p.value().data(), p.value().data() + p.value().size());
}

double compile_critic_accuracy(const ModelParams& critic, const std::vector<LabeledSample>& data) {
  if (data.empty()) return 0.0;
  int good = 0;
  for (const auto& s : data) good += (compile_probability(critic, s.prompt, s.response) > 0.5) == s.compiles;
  return static_cast<double>(good) / static_cast<double>(data.size());
}

std::vector<double> coderl_coefficients(const ModelParams& critic, const TokenSeq& prompt, const TokenSeq& sample,
                                        bool sample_compiles, bool baseline_compiles) {
  const double gap = compile_return(sample_compiles) - compile_return(baseline_compiles);
  if (gap == 0.0) return std::vector<double>(sample.size(), 0.0);
  std::vector<double> p = token_compile_probabilities(critic, prompt, sample);
  for (double& v : p) v = gap * (sample_compiles ? v : 1.0 - v);
  return p;
}

nn::Var coderl_loss(nn::Tape& tape, const ModelParams& policy, const std::vector<CodeRlItem>& batch) {
  if (batch.empty()) throw std::invalid_argument("coderl_loss: empty batch");
  nn::Var total;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const CodeRlItem& it = batch[i];
    if (it.coefficients.size() != it.sample.size()) throw std::invalid_argument("coderl_loss: misaligned");
    nn::Var lp = nn::sequence_log_probs(tape, policy, it.prompt, it.sample);
    const nn::Matrix coef = Eigen::Map<const nn::Matrix>(it.coefficients.data(),
                                                          static_cast<Eigen::Index>(it.coefficients.size()), 1);
    nn::Var s = nn::sum(nn::mul(lp, tape.constant(coef)));
    total = i == 0 ? s : nn::add(total, s);
    tokens += it.sample.size();
  }
  return nn::scale(total, -1.0 / static_cast<double>(std::max<std::size_t>(tokens, 1)));
}

void train_coderl(ModelParams& policy, const ModelParams& critic, const std::vector<Example>& corpus,
                  const BaselineConfig& c, train::MetricsWriter* metrics) {
  c.validate();
  if (corpus.empty()) throw std::invalid_argument("train_coderl: empty corpus");
  const std::int64_t steps = (c.episodes + c.batch_size - 1) / c.batch_size;
  nn::reset_optimizer(policy);
  policy.zero_grad();
  nn::AdamWConfig optim = c.optim;
  optim.total_steps = steps;
  const nn::SamplingConfig sc = sampling(c);
  nn::SamplingConfig greedy = sc;
  greedy.greedy = true;
  std::int64_t episode = 0;
  for (std::int64_t step = 0; step < steps; ++step) {
    const int count = static_cast<int>(std::min<std::int64_t>(c.batch_size, c.episodes - episode));
    std::map<const Example*, bool> baseline;  // greedy y_b compiles?, per prompt within the step
    std::vector<CodeRlItem> batch;
    train::BatchMetrics m;
    double compiled = 0, reward = 0;
    for (int i = 0; i < count; ++i, ++episode) {
      Rng rng;
      const Example& ex = corpus[episode_task(c.seed, episode, corpus.size(), rng)];
      CodeRlItem it;
      it.prompt = ex.prompt;
      it.sample = nn::sample_response(policy, ex.prompt, sc, rng).tokens;
      const minilang::CompileResult cr = minilang::compile_check(ex.prompt, it.sample);
      const bool ok = cr.ok;
      train::count_errors(m, cr);
      m.tokens += static_cast<std::int64_t>(it.sample.size());
      auto b = baseline.find(&ex);
      if (b == baseline.end()) {
        Rng unused = make_rng(c.seed, "greedy", 0);
        const TokenSeq yb = nn::sample_response(policy, ex.prompt, greedy, unused).tokens;
        b = baseline.emplace(&ex, minilang::compile_check(ex.prompt, yb).ok).first;
      }
      it.coefficients = coderl_coefficients(critic, ex.prompt, it.sample, ok, b->second);
      compiled += ok;
      reward += compile_return(ok);
      batch.push_back(std::move(it));
    }
    nn::Tape tape;
    nn::Var loss = coderl_loss(tape, policy, batch);
    const double before = loss.item();
    apply_step(tape, loss, policy, c.lr, step, optim, "CodeRL");
    if (metrics) {
      for (double& v : m.errors) v /= count;
      m.episode = episode;
      m.compile_rate = compiled / count;
      m.mean_reward = reward / count;
      m.policy_loss = before;
      metrics->record(m);
    }
  }
}

}  // namespace rlcf::baselines
