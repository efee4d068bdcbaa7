#ifndef RLCF_NN_OPS_HPP_
#define RLCF_NN_OPS_HPP_

#include <span>
#include <vector>

#include "rlcf/nn/tape.hpp"

// Differentiable free functions over Var. Shapes are (rows x cols); sequence
// activations are one row per position.
namespace rlcf::nn {

Var matmul(Var a, Var b);                // a * b
Var add(Var a, Var b);                   // same shape
Var sub(Var a, Var b);
Var mul(Var a, Var b);                   // elementwise
Var add_row(Var x, Var row);             // broadcast a 1 x C row over every row of x
Var scale(Var x, Scalar s);
Var add_scalar(Var x, Scalar s);

Var tanh(Var x);
Var sigmoid(Var x);
Var relu(Var x);
Var exp(Var x);
Var gelu(Var x);                         // tanh approximation

// Rows of `table` selected by ids (embedding lookup).
Var gather_rows(Var table, std::span<const int> ids);
// Contiguous rows [begin, begin + count).
Var slice_rows(Var x, Eigen::Index begin, Eigen::Index count);
Var row(Var x, Eigen::Index i);
// Column-wise max over rows (1 x C); ties send the gradient to the first row.
Var max_pool_rows(Var x);

Var sum(Var x);                          // 1 x 1
Var mean(Var x);                         // 1 x 1
// Sum of squared differences, 1 x 1.
Var squared_distance(Var a, Var b);

inline constexpr Scalar kLayerNormEps = 1e-5;
// Per-row normalization with 1 x C gain and bias.
Var layer_norm(Var x, Var gain, Var bias);

// Multi-head scaled dot-product attention over packed qkv (T x 3d), returns
// T x d. `causal` masks keys after the query position.
Var attention(Var qkv, int heads, bool causal);

// Row-wise log-softmax.
Var log_softmax(Var logits);
// log softmax(logits[i])[targets[i]] for each row, as a T x 1 column.
Var pick_log_probs(Var logits, std::span<const int> targets);

// Summed PPO clipped surrogate, negated so it is minimized:
// -sum_j min(r_j A_j, clip(r_j, 1-eps, 1+eps) A_j), r_j = exp(logp_j - old_j).
Var clipped_surrogate_loss(Var logp, const Vector& old_logp, const Vector& advantages, Scalar eps);

// Sum of squared errors between a column and constant targets.
Var squared_error(Var pred, const Vector& targets);

// Binary cross-entropy on a logit with a constant label in [0, 1], 1 x 1.
Var bce_with_logits(Var logit, Scalar label);

}  // namespace rlcf::nn

#endif  // RLCF_NN_OPS_HPP_
