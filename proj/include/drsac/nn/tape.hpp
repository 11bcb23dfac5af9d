#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records one computation. Leaves are constants, differentiable
// inputs or parameters from a ParameterStore; every op appends a node. After
// backward() on a 1x1 result, parameter gradients are accumulated into
// Parameter::grad and input gradients are available through gradient().
// A tape runs backward once; reset() starts a new recording and invalidates
// every Var issued before.

#include <cstdint>
#include <functional>
#include <vector>

#include "drsac/linalg.hpp"
#include "drsac/nn/parameter_store.hpp"

namespace drsac::nn {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  Tape& tape() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
  std::uint64_t generation_ = 0;
};

class Tape {
 public:
  // Receives the gradient w.r.t. the node output and the output value.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad, const Matrix& out)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Differentiable leaf; read its gradient with gradient() after backward().
  Var input(Matrix value);
  /// Leaf bound to a parameter. With trainable = false it acts as a constant.
  Var parameter(Parameter& p, bool trainable = true);

  /// Records a node. `parents` decide whether the node needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Matrix value, const std::vector<Var>& parents, BackwardFn backward);

  /// Adds `contribution` to the gradient of `v` (no-op for constants).
  template <typename Expr>
  void accumulate(const Var& v, const Expr& contribution) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = contribution;
    else n.grad += contribution;
  }

  void backward(const Var& loss);
  /// Gradient of the last backward() w.r.t. `v` (zeros if unreached).
  Matrix gradient(const Var& v) const;

  void reset();
  std::size_t size() const { return nodes_.size(); }
  const Matrix& value_of(const Var& v) const { return node(v).value; }
  bool requires_grad(const Var& v) const { return node(v).requires_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  void check(const Var& v) const;
  Node& node(const Var& v);
  const Node& node(const Var& v) const;
  Var push(Node n);

  std::vector<Node> nodes_;
  std::uint64_t generation_;
  bool backward_done_ = false;
};

// ---- ops ------------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
/// x (n x k) + b (1 x k) broadcast over rows.
Var add_bias(const Var& x, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
/// s (1 x 1) times every entry of x.
Var mul_scalar(const Var& s, const Var& x);
/// x (n x k) times c (n x 1), broadcast over columns.
Var mul_col(const Var& x, const Var& c);
/// x (n x k) divided by c (n x 1), broadcast over columns.
Var div_col(const Var& x, const Var& c);

Var tanh(const Var& x);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var softplus(const Var& x);
Var square(const Var& x);
/// Elementwise min; ties send the gradient to `a`.
Var minimum(const Var& a, const Var& b);
/// Gradient passes where lo <= x <= hi.
Var clamp(const Var& x, double lo, double hi);

Var sum(const Var& x);       // 1 x 1
Var mean(const Var& x);      // 1 x 1
Var row_sum(const Var& x);   // n x 1
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count);

/// Row-wise log sum_j w_ij exp(x_ij) with constant non-negative weights w.
Var log_expectation_rows(const Var& x, const Matrix& weights);
/// Row-wise log (1/k) sum_j exp(x_ij).
Var logmeanexp_rows(const Var& x);

/// Constant copy of x's value (gradient stops here).
Var detach(const Var& x);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator+(const Var& a, double c) { return add_scalar(a, c); }
inline Var operator-(const Var& a) { return scale(a, -1.0); }

}  // namespace drsac::nn
