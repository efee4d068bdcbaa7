#include "rlcf/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace rlcf::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

Tape& tape_of(Var a) {
  require(a.tape() != nullptr, "op on an unbound Var");
  return *a.tape();
}

// Adds g into the input's gradient when the input is differentiable.
template <typename Expr>
void accum(Tape& t, Var v, const Expr& g) {
  if (t.requires_grad(v)) t.grad_slot(v) += g;
}

Matrix row_logsumexp(const Matrix& x) {
  Matrix out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar m = x.row(i).maxCoeff();
    out(i, 0) = m + std::log((x.row(i).array() - m).exp().sum());
  }
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Tape& t = tape_of(a);
  return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.grad_slot(a).noalias() += g * t.value(b).transpose();
    if (t.requires_grad(b)) t.grad_slot(b).noalias() += t.value(a).transpose() * g;
  });
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return tape_of(a).record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    accum(t, a, g);
    accum(t, b, g);
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  return tape_of(a).record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    accum(t, a, g);
    accum(t, b, -g);
  });
}

Var mul(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Matrix out = a.value().cwiseProduct(b.value());
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    accum(t, a, g.cwiseProduct(t.value(b)));
    accum(t, b, g.cwiseProduct(t.value(a)));
  });
}

Var add_row(Var x, Var r) {
  require(r.rows() == 1 && r.cols() == x.cols(), "add_row: bias must be 1 x cols");
  Matrix out = x.value().rowwise() + r.value().row(0);
  return tape_of(x).record(std::move(out), {x, r}, [x, r](Tape& t, const Matrix& g) {
    accum(t, x, g);
    accum(t, r, g.colwise().sum());
  });
}

Var scale(Var x, Scalar s) {
  return tape_of(x).record(x.value() * s, {x}, [x, s](Tape& t, const Matrix& g) { accum(t, x, g * s); });
}

Var add_scalar(Var x, Scalar s) {
  Matrix out = x.value().array() + s;
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Matrix& g) { accum(t, x, g); });
}

Var tanh(Var x) {
  Matrix y = x.value().array().tanh();
  Matrix d = 1.0 - y.array().square();
  return tape_of(x).record(std::move(y), {x}, [x, d = std::move(d)](Tape& t, const Matrix& g) {
    accum(t, x, g.cwiseProduct(d));
  });
}

Var sigmoid(Var x) {
  Matrix y = x.value().unaryExpr([](Scalar v) { return 1.0 / (1.0 + std::exp(-v)); });
  Matrix d = y.array() * (1.0 - y.array());
  return tape_of(x).record(std::move(y), {x}, [x, d = std::move(d)](Tape& t, const Matrix& g) {
    accum(t, x, g.cwiseProduct(d));
  });
}

Var relu(Var x) {
  Matrix y = x.value().cwiseMax(0.0);
  return tape_of(x).record(std::move(y), {x}, [x](Tape& t, const Matrix& g) {
    accum(t, x, (t.value(x).array() > 0.0).cast<Scalar>().matrix().cwiseProduct(g));
  });
}

Var exp(Var x) {
  Matrix y = x.value().array().exp();
  Matrix d = y;
  return tape_of(x).record(std::move(y), {x}, [x, d = std::move(d)](Tape& t, const Matrix& g) {
    accum(t, x, g.cwiseProduct(d));
  });
}

Var gelu(Var x) {
  constexpr Scalar k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr Scalar c = 0.044715;
  const Matrix& v = x.value();
  Matrix th = (k * (v.array() + c * v.array().cube())).tanh();
  Matrix y = 0.5 * v.array() * (1.0 + th.array());
  Matrix d = 0.5 * (1.0 + th.array()) +
             0.5 * v.array() * (1.0 - th.array().square()) * k * (1.0 + 3.0 * c * v.array().square());
  return tape_of(x).record(std::move(y), {x}, [x, d = std::move(d)](Tape& t, const Matrix& g) {
    accum(t, x, g.cwiseProduct(d));
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < tv.rows(), "gather_rows: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return tape_of(table).record(std::move(out), {table}, [table, idv = std::move(idv)](Tape& t, const Matrix& g) {
    Matrix& gt = t.grad_slot(table);
    for (std::size_t i = 0; i < idv.size(); ++i) gt.row(idv[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var slice_rows(Var x, Eigen::Index begin, Eigen::Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= x.rows(), "slice_rows: out of range");
  Matrix out = x.value().middleRows(begin, count);
  return tape_of(x).record(std::move(out), {x}, [x, begin, count](Tape& t, const Matrix& g) {
    t.grad_slot(x).middleRows(begin, count) += g;
  });
}

Var row(Var x, Eigen::Index i) { return slice_rows(x, i, 1); }

Var max_pool_rows(Var x) {
  const Matrix& v = x.value();
  require(v.rows() > 0, "max_pool_rows: empty input");
  Matrix out(1, v.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(v.cols()));
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index r = 0;
    out(0, c) = v.col(c).maxCoeff(&r);
    arg[static_cast<std::size_t>(c)] = r;
  }
  return tape_of(x).record(std::move(out), {x}, [x, arg = std::move(arg)](Tape& t, const Matrix& g) {
    Matrix& gx = t.grad_slot(x);
    for (std::size_t c = 0; c < arg.size(); ++c) {
      gx(arg[c], static_cast<Eigen::Index>(c)) += g(0, static_cast<Eigen::Index>(c));
    }
  });
}

Var sum(Var x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    t.grad_slot(x).array() += g(0, 0);
  });
}

Var mean(Var x) {
  require(x.value().size() > 0, "mean: empty input");
  return scale(sum(x), 1.0 / static_cast<Scalar>(x.value().size()));
}

Var squared_distance(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "squared_distance: shape mismatch");
  Matrix diff = a.value() - b.value();
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm();
  return tape_of(a).record(std::move(out), {a, b}, [a, b, diff = std::move(diff)](Tape& t, const Matrix& g) {
    accum(t, a, 2.0 * g(0, 0) * diff);
    accum(t, b, -2.0 * g(0, 0) * diff);
  });
}

Var layer_norm(Var x, Var gain, Var bias) {
  const Matrix& v = x.value();
  const Eigen::Index n = v.cols();
  require(gain.rows() == 1 && gain.cols() == n && bias.rows() == 1 && bias.cols() == n,
          "layer_norm: gain/bias must be 1 x cols");
  Matrix xhat(v.rows(), n);
  Vector inv(v.rows());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const Scalar mu = v.row(i).mean();
    const Scalar var = (v.row(i).array() - mu).square().mean();
    inv(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = (v.row(i).array() - mu) * inv(i);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return tape_of(x).record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv = std::move(inv)](Tape& t, const Matrix& g) {
        accum(t, gain, g.cwiseProduct(xhat).colwise().sum());
        accum(t, bias, g.colwise().sum());
        if (!t.requires_grad(x)) return;
        const Matrix dxhat = g.array().rowwise() * t.value(gain).row(0).array();
        Matrix& gx = t.grad_slot(x);
        const Scalar n = static_cast<Scalar>(xhat.cols());
        for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
          const Scalar s1 = dxhat.row(i).sum();
          const Scalar s2 = dxhat.row(i).dot(xhat.row(i));
          gx.row(i).array() += inv(i) / n * (n * dxhat.row(i).array() - s1 - xhat.row(i).array() * s2);
        }
      });
}

Var attention(Var qkv, int heads, bool causal) {
  const Matrix& in = qkv.value();
  require(heads > 0 && in.cols() % (3 * heads) == 0, "attention: qkv width must be 3 * heads * dh");
  const Eigen::Index T = in.rows();
  const Eigen::Index d = in.cols() / 3;
  const Eigen::Index dh = d / heads;
  const Scalar sc = 1.0 / std::sqrt(static_cast<Scalar>(dh));

  auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(heads));
  Matrix out(T, d);
  for (int h = 0; h < heads; ++h) {
    const auto Q = in.middleCols(h * dh, dh);
    const auto K = in.middleCols(d + h * dh, dh);
    const auto V = in.middleCols(2 * d + h * dh, dh);
    Matrix S = (Q * K.transpose()) * sc;
    for (Eigen::Index i = 0; i < T; ++i) {
      const Eigen::Index width = causal ? i + 1 : T;
      auto r = S.row(i).head(width);
      const Scalar m = r.maxCoeff();
      r = (r.array() - m).exp().matrix();
      r /= r.sum();
      if (width < T) S.row(i).tail(T - width).setZero();
    }
    out.middleCols(h * dh, dh).noalias() = S * V;
    (*probs)[static_cast<std::size_t>(h)] = std::move(S);
  }
  return tape_of(qkv).record(std::move(out), {qkv}, [qkv, heads, d, dh, sc, probs](Tape& t, const Matrix& g) {
    const Matrix& in = t.value(qkv);
    Matrix& gin = t.grad_slot(qkv);
    for (int h = 0; h < heads; ++h) {
      const Matrix& P = (*probs)[static_cast<std::size_t>(h)];
      const auto Q = in.middleCols(h * dh, dh);
      const auto K = in.middleCols(d + h * dh, dh);
      const auto V = in.middleCols(2 * d + h * dh, dh);
      const auto dO = g.middleCols(h * dh, dh);
      Matrix dP = dO * V.transpose();
      gin.middleCols(2 * d + h * dh, dh).noalias() += P.transpose() * dO;
      // softmax backward; masked entries have P = 0 so they drop out
      const Vector rowdot = P.cwiseProduct(dP).rowwise().sum();
      Matrix dS = P.cwiseProduct(dP.colwise() - rowdot) * sc;
      gin.middleCols(h * dh, dh).noalias() += dS * K;
      gin.middleCols(d + h * dh, dh).noalias() += dS.transpose() * Q;
    }
  });
}

Var log_softmax(Var logits) {
  const Matrix& v = logits.value();
  Matrix out = v.colwise() - row_logsumexp(v).col(0);
  Matrix p = out.array().exp();
  return tape_of(logits).record(std::move(out), {logits}, [logits, p = std::move(p)](Tape& t, const Matrix& g) {
    const Vector gs = g.rowwise().sum();
    t.grad_slot(logits) += g - (p.array().colwise() * gs.array()).matrix();
  });
}

Var pick_log_probs(Var logits, std::span<const int> targets) {
  const Matrix& v = logits.value();
  require(static_cast<Eigen::Index>(targets.size()) == v.rows(), "pick_log_probs: one target per row");
  const Matrix lse = row_logsumexp(v);
  Matrix out(v.rows(), 1);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    require(y >= 0 && y < v.cols(), "pick_log_probs: target out of range");
    out(i, 0) = v(i, y) - lse(i, 0);
  }
  std::vector<int> tv(targets.begin(), targets.end());
  return tape_of(logits).record(std::move(out), {logits},
                                [logits, lse, tv = std::move(tv)](Tape& t, const Matrix& g) {
                                  const Matrix& v = t.value(logits);
                                  Matrix& gl = t.grad_slot(logits);
                                  for (Eigen::Index i = 0; i < v.rows(); ++i) {
                                    const Scalar gi = g(i, 0);
                                    if (gi == 0.0) continue;
                                    gl.row(i).array() -= gi * (v.row(i).array() - lse(i, 0)).exp();
                                    gl(i, tv[static_cast<std::size_t>(i)]) += gi;
                                  }
                                });
}

Var clipped_surrogate_loss(Var logp, const Vector& old_logp, const Vector& adv, Scalar eps) {
  const Matrix& l = logp.value();
  require(l.cols() == 1 && l.rows() == old_logp.size() && l.rows() == adv.size(),
          "clipped_surrogate_loss: misaligned inputs");
  Vector dl(l.rows());
  Scalar obj = 0.0;
  for (Eigen::Index j = 0; j < l.rows(); ++j) {
    const Scalar r = std::exp(l(j, 0) - old_logp(j));
    const Scalar unclipped = r * adv(j);
    const Scalar clipped = std::clamp(r, 1.0 - eps, 1.0 + eps) * adv(j);
    if (unclipped <= clipped) {
      obj += unclipped;
      dl(j) = -adv(j) * r;
    } else {
      obj += clipped;
      dl(j) = 0.0;  // clipped branch is flat in r
    }
  }
  Matrix out(1, 1);
  out(0, 0) = -obj;
  return tape_of(logp).record(std::move(out), {logp}, [logp, dl = std::move(dl)](Tape& t, const Matrix& g) {
    t.grad_slot(logp).col(0) += g(0, 0) * dl;
  });
}

Var squared_error(Var pred, const Vector& targets) {
  const Matrix& p = pred.value();
  require(p.cols() == 1 && p.rows() == targets.size(), "squared_error: misaligned inputs");
  Vector diff = p.col(0) - targets;
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm();
  return tape_of(pred).record(std::move(out), {pred}, [pred, diff = std::move(diff)](Tape& t, const Matrix& g) {
    t.grad_slot(pred).col(0) += 2.0 * g(0, 0) * diff;
  });
}

Var bce_with_logits(Var logit, Scalar label) {
  require(logit.value().size() == 1, "bce_with_logits: scalar logit expected");
  const Scalar z = logit.item();
  Matrix out(1, 1);
  out(0, 0) = std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
  const Scalar dz = 1.0 / (1.0 + std::exp(-z)) - label;
  return tape_of(logit).record(std::move(out), {logit}, [logit, dz](Tape& t, const Matrix& g) {
    t.grad_slot(logit)(0, 0) += g(0, 0) * dz;
  });
}

}  // namespace rlcf::nn
