#ifndef RLCF_NN_TAPE_HPP_
#define RLCF_NN_TAPE_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace rlcf::nn {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// A named trainable array: values plus a same-shape gradient slot.
struct Tensor {
  Matrix value;
  Matrix grad;

  Tensor() = default;
  explicit Tensor(Matrix v) : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  std::vector<Eigen::Index> shape() const { return {value.rows(), value.cols()}; }
  Eigen::Index size() const { return value.size(); }
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  // Gradient accumulated by the last Tape::backward (zero-sized if none).
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar item() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Wengert list for reverse-mode differentiation. Nodes are appended in
// evaluation order, which is already a topological order, so backward() is a
// single reverse sweep.
class Tape {
 public:
  // Receives the node's output gradient; accumulates into its inputs.
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value);
  // A differentiable input that is not a model parameter (gradient checks).
  Var leaf(Matrix value);
  // Parameter leaf. Repeated calls with the same tensor return the same node.
  Var param(const Tensor& t);

  // Appends an op output. `inputs` decides whether the node needs a
  // gradient; `fn` is dropped when none of them does.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward fn);

  bool requires_grad(Var v) const { return nodes_[idx(v)].requires_grad; }
  const Matrix& value(Var v) const { return nodes_[idx(v)].value; }
  const Matrix& grad(Var v) const { return nodes_[idx(v)].grad; }

  // Gradient slot of an input, zero-initialised on first use. Only call from
  // a Backward for inputs with requires_grad.
  Matrix& grad_slot(Var v);

  // Seeds d(loss)/d(loss) = 1 for a 1x1 loss and sweeps backwards.
  void backward(Var loss);

  // Gradient that reached a parameter leaf, or nullptr.
  const Matrix* param_grad(const Tensor& t) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  std::size_t idx(Var v) const {
    if (v.tape_ != this || v.id_ < 0) throw std::logic_error("Var used with a different tape");
    return static_cast<std::size_t>(v.id_);
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> params_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }
inline const Matrix& Var::grad() const { return tape_->grad(*this); }
inline Scalar Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw std::logic_error("item() on a non-scalar");
  return v(0, 0);
}

}  // namespace rlcf::nn

#endif  // RLCF_NN_TAPE_HPP_
