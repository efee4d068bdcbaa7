#include <cmath>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "rlcf/core/log.hpp"
#include "rlcf/core/rng.hpp"
#include "rlcf/nn/checkpoint.hpp"
#include "rlcf/nn/sampling.hpp"
#include "rlcf/train/train.hpp"

namespace rlcf::train {

using nlohmann::json;

void RlcfConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("rlcf config: " + m); };
  if (episodes < 0) fail("episodes must be >= 0");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must be in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda must be in [0, 1]");
  if (!(clip_eps > 0.0)) fail("clip_eps must be positive");
  if (!(beta_init >= 0.0)) fail("beta_init must be >= 0");
  if (adaptive_kl && !(beta_init > 0.0)) fail("adaptive KL needs beta_init > 0");
  if (!(kl_target > 0.0)) fail("kl_target must be positive");
  if (horizon <= 0) fail("horizon must be positive");
  if (ppo_epochs <= 0) fail("ppo_epochs must be positive");
  if (!(temperature > 0.0)) fail("temperature must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) fail("top_p must be in (0, 1]");
  if (!(lr_policy >= 0.0 && lr_critic >= 0.0 && lr_disc >= 0.0)) fail("learning rates must be >= 0");
  if (workers <= 0) fail("workers must be positive");
}

std::uint64_t RlcfConfig::hash() const {
  // workers, checkpoint cadence and paths do not change results.
  std::ostringstream s;
  s.precision(17);
  s << "rlcf-v1|" << episodes << '|' << batch_size << '|' << lr_policy << '|' << lr_critic << '|' << lr_disc << '|'
    << gamma << '|' << lambda << '|' << clip_eps << '|' << beta_init << '|' << kl_target << '|' << kl_gain << '|'
    << adaptive_kl << '|' << freeze_disc << '|' << horizon << '|' << ppo_epochs << '|' << unused_penalty << '|'
    << temperature << '|' << top_p << '|' << static_cast<int>(rollout.feedback) << '|' << rollout.localize << '|'
    << seed << '|' << optim.beta1 << '|' << optim.beta2 << '|' << optim.eps << '|' << optim.weight_decay << '|'
    << optim.clip_norm;
  return fnv1a64(s.str());
}

RlcfState make_rlcf_state(const ModelParams& policy, const ModelParams& disc, const RlcfConfig& config) {
  RlcfState st;
  st.policy = policy;
  nn::reset_optimizer(st.policy);
  st.critic = nn::init_critic(policy, derive_seed(config.seed, "init-critic"));
  st.disc = disc;
  nn::reset_optimizer(st.disc);
  st.reference = nn::freeze(policy);
  st.beta = config.beta_init;
  return st;
}

MetricsWriter::MetricsWriter(std::ostream* out, std::string method, std::uint64_t config_hash)
    : out_(out), method_(std::move(method)), hash_(config_hash) {}

void MetricsWriter::header(std::int64_t total_episodes) {
  if (!out_) return;
  *out_ << json{{"type", "header"},        {"format", "rlcf-metrics"}, {"version", 1},
                {"method", method_},       {"config_hash", hash_},     {"episodes", total_episodes}}
               .dump()
        << '\n';
  out_->flush();
}

void count_errors(BatchMetrics& m, const minilang::CompileResult& r) {
  for (const auto& d : r.diagnostics) m.errors[static_cast<std::size_t>(d.kind)] += 1.0;
}

void MetricsWriter::record(const BatchMetrics& m) {
  if (!out_) return;
  *out_ << json{{"type", "batch"},
                {"method", method_},
                {"episode", m.episode},
                {"mean_reward", m.mean_reward},
                {"compile_rate", m.compile_rate},
                {"mean_kl", m.mean_kl},
                {"beta", m.beta},
                {"policy_loss", m.policy_loss},
                {"value_loss", m.value_loss},
                {"disc_loss", m.disc_loss},
                {"truncation_rate", m.truncation_rate},
                {"tokens", m.tokens},
                {"errors_per_response", m.errors}}
               .dump()
        << '\n';
  out_->flush();
}

namespace {

struct EpisodeResult {
  std::size_t task = 0;
  grounding::Rollout rollout;
};

EpisodeResult run_episode(const RlcfConfig& c, const std::vector<Example>& corpus, const RlcfState& st,
                          std::int64_t episode) {
  Rng rng = make_rng(c.seed, "episode", static_cast<std::uint64_t>(episode));
  EpisodeResult r;
  r.task = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(corpus.size()) - 1));
  nn::SamplingConfig sc;
  sc.temperature = c.temperature;
  sc.top_p = c.top_p;
  sc.max_len = c.horizon;
  const Example& ex = corpus[r.task];
  auto sampler = [&](const minilang::TokenSeq& x) { return nn::sample_response(st.policy, x, sc, rng); };
  r.rollout = grounding::rollout_trajectory(ex.prompt, ex.reference, sampler, grounding::discriminator_scorer(st.disc),
                                            c.rollout);
  return r;
}

std::vector<EpisodeResult> run_batch(const RlcfConfig& c, const std::vector<Example>& corpus, const RlcfState& st,
                                     std::int64_t first, int count) {
  std::vector<EpisodeResult> out(static_cast<std::size_t>(count));
  const int workers = std::min(c.workers, count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = run_episode(c, corpus, st, first + i);
    return out;
  }
  // Each episode owns its RNG stream and writes its own slot, so the merge
  // is deterministic regardless of scheduling.
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < count; i += workers) out[static_cast<std::size_t>(i)] = run_episode(c, corpus, st, first + i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace

void train_rlcf(const RlcfConfig& c, const std::vector<Example>& corpus, RlcfState& st, MetricsWriter* metrics,
                const std::function<void(const BatchMetrics&)>& on_batch) {
  c.validate();
  if (corpus.empty()) throw std::invalid_argument("train_rlcf: empty corpus");
  const std::int64_t total_batches = (c.episodes + c.batch_size - 1) / c.batch_size;
  nn::AdamWConfig optim = c.optim;
  optim.total_steps = total_batches;
  const std::uint64_t hash = c.hash();

  while (st.episode < c.episodes) {
    const int count = static_cast<int>(std::min<std::int64_t>(c.batch_size, c.episodes - st.episode));
    std::vector<EpisodeResult> eps = run_batch(c, corpus, st, st.episode, count);

    BatchMetrics m;
    std::vector<Trajectory> batch;
    std::vector<const Example*> disc_examples;
    std::vector<minilang::TokenSeq> disc_samples;
    double kl_sum = 0.0;
    std::size_t kl_tokens = 0;
    for (auto& e : eps) {
      const Example& ex = corpus[e.task];
      grounding::Rollout& r = e.rollout;
      Trajectory t;
      t.prompt = ex.prompt;
      t.tokens = r.tokens;
      t.truncated = r.truncated;
      t.unused_decl_indices = r.unused_decl_indices;
      t.old_logprobs = nn::sequence_log_probs(st.policy, t.prompt, t.tokens);
      const auto ref = nn::sequence_log_probs(st.reference, t.prompt, t.tokens);
      grounding::assemble_rewards(t, r.reward, t.old_logprobs, ref, st.beta, c.unused_penalty);
      t.values = nn::critic_values(st.critic, t.prompt, t.tokens);
      GaeResult g = gae(t.rewards, t.values, c.gamma, c.lambda);
      t.advantages = std::move(g.advantages);
      t.returns = std::move(g.returns);
      for (std::size_t j = 0; j < t.tokens.size(); ++j) kl_sum += t.old_logprobs[j] - ref[j];
      kl_tokens += t.tokens.size();
      m.mean_reward += r.reward;
      m.compile_rate += r.compiled ? 1.0 : 0.0;
      m.truncation_rate += r.truncated ? 1.0 : 0.0;
      m.tokens += static_cast<std::int64_t>(r.tokens.size());
      count_errors(m, r.compile);
      disc_examples.push_back(&ex);
      disc_samples.push_back(r.full_sample);
      batch.push_back(std::move(t));
    }
    const double n = static_cast<double>(count);
    m.mean_reward /= n;
    m.compile_rate /= n;
    m.truncation_rate /= n;
    for (double& v : m.errors) v /= n;
    m.mean_kl = kl_sum / static_cast<double>(kl_tokens);

    if (!c.freeze_disc) {
      m.disc_loss = discriminator_step(st.disc, disc_examples, disc_samples, c.lr_disc, st.batch, optim);
    } else {
      for (std::size_t i = 0; i < disc_samples.size(); ++i) {
        m.disc_loss += nn::discriminator_score(st.disc, disc_examples[i]->prompt, disc_samples[i],
                                               disc_examples[i]->reference);
      }
      m.disc_loss /= n;
    }
    normalize_advantages(batch);
    m.policy_loss = ppo_policy_update(st.policy, batch, c.clip_eps, c.lr_policy, st.batch, optim, c.ppo_epochs);
    m.value_loss = critic_update(st.critic, batch, c.lr_critic, st.batch, optim);
    if (c.adaptive_kl) st.beta = adapt_kl(st.beta, m.mean_kl, c.kl_target, c.kl_gain);

    st.episode += count;
    ++st.batch;
    m.episode = st.episode;
    m.beta = st.beta;
    if (metrics) metrics->record(m);
    if (on_batch) on_batch(m);
    if (c.checkpoint_every > 0 && !c.checkpoint_path.empty() &&
        (st.batch % c.checkpoint_every == 0 || st.episode >= c.episodes)) {
      save_rlcf_checkpoint(c.checkpoint_path, st, hash);
    }
  }
}

void save_rlcf_checkpoint(const std::filesystem::path& path, const RlcfState& st, std::uint64_t config_hash) {
  nn::Checkpoint ck;
  ck.models.emplace("policy", st.policy);
  ck.models.emplace("critic", st.critic);
  ck.models.emplace("disc", st.disc);
  ck.models.emplace("reference", st.reference);
  std::ostringstream beta;
  beta.precision(17);
  beta << st.beta;
  ck.metadata = json{{"kind", "rlcf-state"},
                     {"episode", st.episode},
                     {"batch", st.batch},
                     {"beta", beta.str()},
                     {"config_hash", config_hash}}
                    .dump();
  nn::save_checkpoint(path, ck);
}

RlcfState load_rlcf_checkpoint(const std::filesystem::path& path, std::uint64_t config_hash) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  json meta = json::parse(ck.metadata);
  if (meta.value("kind", "") != "rlcf-state") throw nn::CheckpointError("not an RLCF training checkpoint");
  if (meta.at("config_hash").get<std::uint64_t>() != config_hash) {
    throw nn::CheckpointError("config hash mismatch; refusing to resume");
  }
  RlcfState st;
  st.policy = std::move(ck.models.at("policy"));
  st.critic = std::move(ck.models.at("critic"));
  st.disc = std::move(ck.models.at("disc"));
  st.reference = std::move(ck.models.at("reference"));
  st.episode = meta.at("episode").get<std::int64_t>();
  st.batch = meta.at("batch").get<std::int64_t>();
  st.beta = std::stod(meta.at("beta").get<std::string>());
  return st;
}

}  // namespace rlcf::train
