#include <algorithm>
#include <cmath>
#include <numeric>

#include "rlcf/core/rng.hpp"
#include "rlcf/train/train.hpp"

namespace rlcf::train {

nn::Var supervised_loss(nn::Tape& tape, const ModelParams& policy, const std::vector<const Example*>& batch) {
  if (batch.empty()) throw std::invalid_argument("supervised_loss: empty batch");
  nn::Var total;
  std::size_t tokens = 0;
  for (const Example* ex : batch) {
    nn::Var s = nn::sum(nn::sequence_log_probs(tape, policy, ex->prompt, ex->reference));
    total = tokens == 0 ? s : nn::add(total, s);
    tokens += ex->reference.size();
  }
  return nn::scale(total, -1.0 / static_cast<double>(tokens));
}

double supervised_loss(const ModelParams& policy, const std::vector<Example>& data) {
  std::vector<const Example*> all;
  for (const auto& e : data) all.push_back(&e);
  nn::Tape tape(false);
  return supervised_loss(tape, policy, all).item();
}

void bootstrap_supervised(ModelParams& policy, const std::vector<Example>& data, const SupervisedConfig& config,
                          const std::function<void(const SupervisedStep&)>& on_step) {
  if (data.empty()) throw std::invalid_argument("bootstrap_supervised: empty corpus");
  if (config.epochs < 0 || config.batch_size <= 0 || !(config.lr >= 0.0)) {
    throw std::invalid_argument("bootstrap_supervised: bad config");
  }
  if (config.epochs == 0) return;
  const auto n = static_cast<std::int64_t>(data.size());
  const std::int64_t bs = config.batch_size;
  const std::int64_t per_epoch = (n + bs - 1) / bs;
  std::int64_t total = per_epoch * config.epochs;
  if (config.max_sequences > 0) total = std::min(total, (config.max_sequences + bs - 1) / bs);

  nn::reset_optimizer(policy);
  policy.zero_grad();
  nn::AdamWConfig optim = config.optim;
  optim.total_steps = total;
  std::int64_t step = 0;
  std::int64_t seen = 0;
  std::int64_t tokens = 0;
  for (int epoch = 0; epoch < config.epochs && step < total; ++epoch) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(config.seed, "supervised-shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::int64_t start = 0; start < n && step < total; start += bs) {
      std::int64_t end = std::min(n, start + bs);
      if (config.max_sequences > 0) end = std::min(end, start + (config.max_sequences - seen));
      std::vector<const Example*> batch;
      for (std::int64_t i = start; i < end; ++i) batch.push_back(&data[order[static_cast<std::size_t>(i)]]);
      std::int64_t batch_tokens = 0;
      for (const Example* e : batch) batch_tokens += static_cast<std::int64_t>(e->reference.size());
      nn::Tape tape;
      nn::Var loss = supervised_loss(tape, policy, batch);
      if (!std::isfinite(loss.item())) throw nn::NonFiniteError("supervised loss is not finite");
      tape.backward(loss);
      nn::accumulate_grads(tape, policy);
      nn::optimizer_step(policy, config.lr, step, optim);
      if (on_step) on_step({step, loss.item(), &batch});
      seen += end - start;
      tokens += batch_tokens;
      ++step;
      if (config.max_tokens > 0 && tokens >= config.max_tokens) return;
    }
  }
}

}  // namespace rlcf::train
