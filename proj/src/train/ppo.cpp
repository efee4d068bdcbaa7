#include <algorithm>
#include <cmath>

#include "rlcf/train/train.hpp"

namespace rlcf::train {

GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values, double gamma, double lambda) {
  if (rewards.size() != values.size()) throw std::invalid_argument("gae: rewards and values differ in length");
  const std::size_t n = rewards.size();
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = 0.0;
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double delta = rewards[t] + gamma * next_value - values[t];
    running = delta + gamma * lambda * running;
    out.advantages[t] = running;
    out.returns[t] = running + values[t];
    next_value = values[t];
  }
  return out;
}

double ppo_clip_term(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

void normalize_advantages(std::vector<Trajectory>& batch) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& t : batch) {
    for (double a : t.advantages) {
      sum += a;
      sq += a * a;
      ++n;
    }
  }
  if (n == 0) return;
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
  const double inv = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  for (auto& t : batch) {
    for (double& a : t.advantages) a = (a - mean) * inv;
  }
}

double ppo_policy_update(ModelParams& policy, const std::vector<Trajectory>& batch, double eps, double lr,
                         std::int64_t schedule_step, const nn::AdamWConfig& optim, int epochs) {
  if (batch.empty()) throw std::invalid_argument("ppo_policy_update: empty batch");
  double first = 0.0;
  for (int e = 0; e < epochs; ++e) {
    nn::Tape tape;
    nn::Var total;
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Trajectory& t = batch[i];
      if (t.advantages.size() != t.tokens.size() || t.old_logprobs.size() != t.tokens.size()) {
        throw std::invalid_argument("ppo_policy_update: trajectory lists are not aligned");
      }
      nn::Var lp = nn::sequence_log_probs(tape, policy, t.prompt, t.tokens);
      const nn::Vector old = Eigen::Map<const nn::Vector>(t.old_logprobs.data(), static_cast<Eigen::Index>(t.old_logprobs.size()));
      const nn::Vector adv = Eigen::Map<const nn::Vector>(t.advantages.data(), static_cast<Eigen::Index>(t.advantages.size()));
      nn::Var l = nn::clipped_surrogate_loss(lp, old, adv, eps);
      total = i == 0 ? l : nn::add(total, l);
      tokens += t.tokens.size();
    }
    nn::Var loss = nn::scale(total, 1.0 / static_cast<double>(tokens));
    if (!std::isfinite(loss.item())) throw nn::NonFiniteError("PPO loss is not finite");
    if (e == 0) first = loss.item();
    tape.backward(loss);
    nn::accumulate_grads(tape, policy);
    nn::optimizer_step(policy, lr, schedule_step, optim);
  }
  return first;
}

namespace {

nn::Var critic_loss_var(nn::Tape& tape, const ModelParams& critic, const std::vector<Trajectory>& batch) {
  nn::Var total;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Trajectory& t = batch[i];
    if (t.returns.size() != t.tokens.size()) throw std::invalid_argument("critic: returns not aligned with tokens");
    nn::Var v = nn::critic_values(tape, critic, t.prompt, t.tokens);
    const nn::Vector g = Eigen::Map<const nn::Vector>(t.returns.data(), static_cast<Eigen::Index>(t.returns.size()));
    nn::Var l = nn::squared_error(v, g);
    total = i == 0 ? l : nn::add(total, l);
    tokens += t.tokens.size();
  }
  return nn::scale(total, 1.0 / static_cast<double>(tokens));
}

}  // namespace

double critic_loss(const ModelParams& critic, const std::vector<Trajectory>& batch) {
  if (batch.empty()) throw std::invalid_argument("critic_loss: empty batch");
  nn::Tape tape(false);
  return critic_loss_var(tape, critic, batch).item();
}

double critic_update(ModelParams& critic, const std::vector<Trajectory>& batch, double lr, std::int64_t schedule_step,
                     const nn::AdamWConfig& optim) {
  if (batch.empty()) throw std::invalid_argument("critic_update: empty batch");
  nn::Tape tape;
  nn::Var loss = critic_loss_var(tape, critic, batch);
  if (!std::isfinite(loss.item())) throw nn::NonFiniteError("value loss is not finite");
  tape.backward(loss);
  nn::accumulate_grads(tape, critic);
  nn::optimizer_step(critic, lr, schedule_step, optim);
  return loss.item();
}

double adapt_kl(double beta, double observed_kl, double kl_target, double kp) {
  if (!(beta > 0.0) || !(kl_target > 0.0)) throw std::invalid_argument("adapt_kl: beta and target must be positive");
  const double err = std::clamp((observed_kl - kl_target) / kl_target, -0.2, 0.2);
  return beta * (1.0 + kp * err);
}

}  // namespace rlcf::train
