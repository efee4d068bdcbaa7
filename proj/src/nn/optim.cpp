#include "rlcf/nn/optim.hpp"

#include <algorithm>
#include <cmath>

namespace rlcf::nn {

double scheduled_lr(double lr, std::int64_t schedule_step, std::int64_t total_steps) {
  if (total_steps <= 0) return lr;
  const double frac = 1.0 - static_cast<double>(schedule_step) / static_cast<double>(total_steps);
  return lr * std::max(0.0, frac);
}

double grad_norm(const ModelParams& model) {
  double sq = 0.0;
  for (const auto& [_, t] : model.params) {
    if (t.grad.size()) sq += t.grad.squaredNorm();
  }
  return std::sqrt(sq);
}

double optimizer_step(ModelParams& model, double lr, std::int64_t schedule_step, const AdamWConfig& c) {
  if (model.role == Role::FrozenReference) throw std::logic_error("optimizer_step on the frozen reference");
  for (const auto& [name, t] : model.params) {
    if (t.grad.size() && !t.grad.allFinite()) throw NonFiniteError("non-finite gradient in " + name);
  }
  const double norm = grad_norm(model);
  const double lr_t = scheduled_lr(lr, schedule_step, c.total_steps);
  if (lr_t <= 0.0) {
    model.zero_grad();
    return norm;
  }
  const double clip = c.clip_norm > 0.0 && norm > c.clip_norm ? c.clip_norm / norm : 1.0;

  ++model.adam_step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(model.adam_step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(model.adam_step));
  for (auto& [name, t] : model.params) {
    AdamMoments& mo = model.moments[name];
    if (mo.m.size() == 0) {
      mo.m = Matrix::Zero(t.value.rows(), t.value.cols());
      mo.v = Matrix::Zero(t.value.rows(), t.value.cols());
    }
    if (t.grad.size() == 0) t.grad = Matrix::Zero(t.value.rows(), t.value.cols());
    const Matrix g = t.grad * clip;
    mo.m = c.beta1 * mo.m + (1.0 - c.beta1) * g;
    mo.v = c.beta2 * mo.v + (1.0 - c.beta2) * g.cwiseProduct(g);
    t.value *= 1.0 - lr_t * c.weight_decay;
    t.value.array() -= lr_t * (mo.m.array() / bc1) / ((mo.v.array() / bc2).sqrt() + c.eps);
    t.grad.setZero();
  }
  return norm;
}

void reset_optimizer(ModelParams& model) {
  model.moments.clear();
  model.adam_step = 0;
}

}  // namespace rlcf::nn
