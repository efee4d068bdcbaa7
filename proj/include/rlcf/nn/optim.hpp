#ifndef RLCF_NN_OPTIM_HPP_
#define RLCF_NN_OPTIM_HPP_

#include <cstdint>
#include <stdexcept>

#include "rlcf/nn/model.hpp"

namespace rlcf::nn {

struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
  std::int64_t total_steps = 0;  // linear decay horizon; <= 0 keeps lr constant
};

// lr * (1 - step / total), floored at 0.
double scheduled_lr(double lr, std::int64_t schedule_step, std::int64_t total_steps);

double grad_norm(const ModelParams& model);

// One AdamW step with global-norm clipping and linear lr decay, then clears
// the gradients. Returns the pre-clip gradient norm. Throws NonFiniteError
// on NaN/Inf gradients (parameters untouched).
double optimizer_step(ModelParams& model, double lr, std::int64_t schedule_step, const AdamWConfig& config);

// Drops moments and the bias-correction counter (a fresh optimizer).
void reset_optimizer(ModelParams& model);

}  // namespace rlcf::nn

#endif  // RLCF_NN_OPTIM_HPP_
