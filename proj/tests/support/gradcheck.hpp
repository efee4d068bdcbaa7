#ifndef RLCF_TESTS_SUPPORT_GRADCHECK_HPP_
#define RLCF_TESTS_SUPPORT_GRADCHECK_HPP_

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rlcf/core/rng.hpp"
#include "rlcf/nn/model.hpp"
#include "rlcf/nn/ops.hpp"

// Finite-difference helpers shared by the unit and acceptance suites.
namespace rlcf::testing {

using namespace rlcf::nn;

inline Matrix randn(Rng& rng, Eigen::Index r, Eigen::Index c, double s = 1.0) {
  std::normal_distribution<double> d(0.0, s);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Projects an arbitrary output onto a fixed random direction so every entry
// of the output matters for the scalar loss.
inline Var probe(Var out, const Matrix& dir) { return sum(mul(out, out.tape()->constant(dir))); }

inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nb);
  if (denom < 1e-12) return 1.0;  // a vacuous comparison is a failure
  return std::sqrt(diff) / denom;
}

// Central differences on raw leaf matrices. `f` builds the loss from leaves.
inline double check_leaves(std::vector<Matrix> inputs, const std::function<Var(Tape&, std::vector<Var>&)>& f) {
  Tape tape;
  std::vector<Var> leaves;
  for (auto& m : inputs) leaves.push_back(tape.leaf(m));
  Var loss = f(tape, leaves);
  tape.backward(loss);
  std::vector<double> analytic, numeric;
  const double h = 1e-5;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix& g = leaves[k].grad();
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      analytic.push_back(g.size() ? g.data()[i] : 0.0);
      auto eval = [&](double delta) {
        std::vector<Matrix> in = inputs;
        in[k].data()[i] += delta;
        Tape t(false);
        std::vector<Var> lv;
        for (auto& m : in) lv.push_back(t.leaf(m));
        return f(t, lv).item();
      };
      numeric.push_back((eval(h) - eval(-h)) / (2 * h));
    }
  }
  return rel_err(analytic, numeric);
}

// Same for model parameters, probing up to `per_tensor` random entries of
// each tensor whose name starts with one of `prefixes` (empty = all).
inline double check_model(ModelParams& m, const std::function<Var(Tape&, const ModelParams&)>& f, Rng& rng,
                   const std::vector<std::string>& prefixes = {}, int per_tensor = 6) {
  Tape tape;
  Var loss = f(tape, m);
  tape.backward(loss);
  std::vector<double> analytic, numeric;
  const double h = 1e-5;
  for (auto& [name, t] : m.params) {
    bool want = prefixes.empty();
    for (const auto& pre : prefixes) want = want || name.rfind(pre, 0) == 0;
    if (!want) continue;
    const Matrix* g = tape.param_grad(t);
    for (int s = 0; s < per_tensor; ++s) {
      const auto i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(t.value.size()));
      analytic.push_back(g ? g->data()[i] : 0.0);
      const double keep = t.value.data()[i];
      auto eval = [&](double v) {
        t.value.data()[i] = v;
        Tape tt(false);
        return f(tt, m).item();
      };
      numeric.push_back((eval(keep + h) - eval(keep - h)) / (2 * h));
      t.value.data()[i] = keep;
    }
  }
  return rel_err(analytic, numeric);
}

inline ModelConfig tiny_config(Rng& rng) {
  ModelConfig c;
  c.heads = uniform_int(rng, 1, 2);
  c.width = 4 * c.heads * uniform_int(rng, 1, 2);
  c.layers = uniform_int(rng, 1, 2);
  c.max_len = 24;
  c.ffn_mult = 2;
  return c;
}

inline TokenSeq random_tokens(Rng& rng, int n) {
  TokenSeq t;
  for (int i = 0; i < n; ++i) t.push_back(uniform_int(rng, 0, minilang::kVocabSize - 1));
  return t;
}

// Larger-than-default weights so the gradient check exercises nonlinear
// regimes instead of the near-linear init.
inline void perturb(ModelParams& m, Rng& rng, double s = 0.3) {
  for (auto& [_, t] : m.params) t.value += randn(rng, t.value.rows(), t.value.cols(), s);
}


}  // namespace rlcf::testing

#endif  // RLCF_TESTS_SUPPORT_GRADCHECK_HPP_
