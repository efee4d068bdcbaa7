#include <algorithm>
#include <cmath>
#include <numeric>

#include "rlcf/core/rng.hpp"
#include "rlcf/nn/sampling.hpp"
#include "rlcf/train/train.hpp"

namespace rlcf::train {

nn::Var triplet_loss(nn::Var anchor, nn::Var positive, nn::Var negative, double margin) {
  return nn::relu(
      nn::add_scalar(nn::sub(nn::squared_distance(anchor, positive), nn::squared_distance(anchor, negative)), margin));
}

double triplet_accuracy(const ModelParams& disc, const std::vector<taskgen::EquivalenceTriple>& triples) {
  if (triples.empty()) return 0.0;
  int good = 0;
  for (const auto& t : triples) {
    nn::Tape tape(false);
    nn::Var a = nn::discriminator_embedding(tape, disc, t.prompt, t.anchor);
    nn::Var p = nn::discriminator_embedding(tape, disc, t.prompt, t.positive);
    nn::Var n = nn::discriminator_embedding(tape, disc, t.prompt, t.negative);
    if (nn::squared_distance(a, p).item() < nn::squared_distance(a, n).item()) ++good;
  }
  return static_cast<double>(good) / static_cast<double>(triples.size());
}

double mean_disc_score(const ModelParams& disc, const std::vector<Example>& data,
                       const std::vector<minilang::TokenSeq>& samples) {
  if (data.empty() || data.size() != samples.size()) throw std::invalid_argument("mean_disc_score: misaligned");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += nn::discriminator_score(disc, data[i].prompt, samples[i], data[i].reference);
  }
  return total / static_cast<double>(data.size());
}

double discriminator_step(ModelParams& disc, const std::vector<const Example*>& examples,
                          const std::vector<minilang::TokenSeq>& samples, double lr, std::int64_t schedule_step,
                          const nn::AdamWConfig& optim) {
  if (examples.empty() || examples.size() != samples.size()) {
    throw std::invalid_argument("discriminator_step: misaligned batch");
  }
  nn::Tape tape;
  nn::Var total;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    nn::Var d = nn::discriminator_score(tape, disc, examples[i]->prompt, samples[i], examples[i]->reference);
    total = i == 0 ? d : nn::add(total, d);
  }
  nn::Var loss = nn::scale(total, 1.0 / static_cast<double>(examples.size()));
  if (!std::isfinite(loss.item())) throw nn::NonFiniteError("discriminator loss is not finite");
  tape.backward(loss);
  nn::accumulate_grads(tape, disc);
  nn::optimizer_step(disc, lr, schedule_step, optim);
  return loss.item();
}

DiscPretrainReport pretrain_discriminator(ModelParams& disc, const std::vector<taskgen::TaskSample>& corpus,
                                          const ModelParams& policy, const DiscPretrainConfig& config) {
  if (corpus.empty()) throw std::invalid_argument("pretrain_discriminator: empty corpus");
  DiscPretrainReport report;
  const auto bs = static_cast<std::size_t>(std::max(1, config.batch_size));

  // Phase 1: equivalence triples.
  const auto triples = taskgen::make_triples(corpus, derive_seed(config.seed, "triples"));
  if (config.triplet_epochs > 0 && !triples.empty()) {
    nn::reset_optimizer(disc);
    disc.zero_grad();
    nn::AdamWConfig optim = config.optim;
    optim.total_steps = static_cast<std::int64_t>(config.triplet_epochs * ((triples.size() + bs - 1) / bs));
    std::int64_t step = 0;
    for (int epoch = 0; epoch < config.triplet_epochs; ++epoch) {
      std::vector<std::size_t> order(triples.size());
      std::iota(order.begin(), order.end(), 0);
      Rng rng = make_rng(config.seed, "triplet-shuffle", static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += bs) {
        const std::size_t end = std::min(order.size(), start + bs);
        nn::Tape tape;
        nn::Var total;
        for (std::size_t i = start; i < end; ++i) {
          const auto& t = triples[order[i]];
          nn::Var a = nn::discriminator_embedding(tape, disc, t.prompt, t.anchor);
          nn::Var p = nn::discriminator_embedding(tape, disc, t.prompt, t.positive);
          nn::Var n = nn::discriminator_embedding(tape, disc, t.prompt, t.negative);
          nn::Var l = triplet_loss(a, p, n, config.margin);
          total = i == start ? l : nn::add(total, l);
        }
        nn::Var loss = nn::scale(total, 1.0 / static_cast<double>(end - start));
        if (!std::isfinite(loss.item())) throw nn::NonFiniteError("triplet loss is not finite");
        tape.backward(loss);
        nn::accumulate_grads(tape, disc);
        nn::optimizer_step(disc, config.triplet_lr, step++, optim);
        report.triplet_losses.push_back(loss.item());
      }
    }
  }

  // Phase 2: references against the policy's own samples.
  if (config.adv_epochs > 0) {
    const std::vector<Example> data = taskgen::training_view(corpus);
    nn::reset_optimizer(disc);
    disc.zero_grad();
    nn::AdamWConfig optim = config.optim;
    optim.total_steps = static_cast<std::int64_t>(config.adv_epochs * ((data.size() + bs - 1) / bs));
    nn::SamplingConfig sc;
    sc.temperature = config.temperature;
    sc.top_p = config.top_p;
    sc.max_len = config.horizon;
    std::int64_t step = 0;
    for (int epoch = 0; epoch < config.adv_epochs; ++epoch) {
      std::vector<std::size_t> order(data.size());
      std::iota(order.begin(), order.end(), 0);
      Rng shuffle = make_rng(config.seed, "adv-shuffle", static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), shuffle);
      for (std::size_t start = 0; start < order.size(); start += bs) {
        const std::size_t end = std::min(order.size(), start + bs);
        std::vector<const Example*> batch;
        std::vector<minilang::TokenSeq> samples;
        for (std::size_t i = start; i < end; ++i) {
          const Example& ex = data[order[i]];
          Rng rng = make_rng(config.seed, "adv-sample", static_cast<std::uint64_t>(epoch) * data.size() + i);
          batch.push_back(&ex);
          samples.push_back(nn::sample_response(policy, ex.prompt, sc, rng).tokens);
        }
        report.adv_losses.push_back(discriminator_step(disc, batch, samples, config.adv_lr, step++, optim));
      }
    }
  }
  nn::reset_optimizer(disc);
  return report;
}

}  // namespace rlcf::train
