#include "drsac/nn/tape.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace drsac::nn {

namespace {

std::atomic<std::uint64_t> next_generation{1};

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

void require_column(const Var& x, const Var& c, const char* op) {
  if (c.cols() != 1 || c.rows() != x.rows()) {
    throw std::invalid_argument(std::string(op) + ": expected an n x 1 column");
  }
}

Tape& common_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("operands recorded on different tapes");
  return a.tape();
}

}  // namespace

// ---- Var --------------------------------------------------------------------

Tape& Var::tape() const {
  if (tape_ == nullptr) throw std::logic_error("use of an empty Var");
  return *tape_;
}

const Matrix& Var::value() const { return tape().value_of(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw std::logic_error("scalar() on a non-scalar Var");
  return v(0, 0);
}

bool Var::requires_grad() const { return tape().requires_grad(*this); }

// ---- Tape -------------------------------------------------------------------

Tape::Tape() : generation_(next_generation.fetch_add(1)) {}

void Tape::check(const Var& v) const {
  if (v.tape_ != this) throw std::logic_error("Var belongs to a different tape");
  if (v.generation_ != generation_) throw std::logic_error("stale Var from before Tape::reset()");
  if (v.id_ >= nodes_.size()) throw std::logic_error("Var id out of range");
}

Tape::Node& Tape::node(const Var& v) {
  check(v);
  return nodes_[v.id_];
}

const Tape::Node& Tape::node(const Var& v) const {
  check(v);
  return nodes_[v.id_];
}

Var Tape::push(Node n) {
  if (backward_done_) throw std::logic_error("recording on a tape after backward(); reset() first");
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1), generation_);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::input(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p, bool trainable) {
  Node n;
  n.value = p.value;
  if (trainable) {
    n.param = &p;
    n.requires_grad = true;
  }
  return push(std::move(n));
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (node(p).requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::backward(const Var& loss) {
  Node& root = node(loss);
  if (root.value.size() != 1) throw std::logic_error("backward() needs a 1x1 loss");
  if (backward_done_) throw std::logic_error("backward() called twice on the same tape");
  backward_done_ = true;
  if (!root.requires_grad) return;
  root.grad = Matrix::Ones(1, 1);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad, n.value);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

Matrix Tape::gradient(const Var& v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::reset() {
  nodes_.clear();
  generation_ = next_generation.fetch_add(1);
  backward_done_ = false;
}

// ---- ops --------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var add_bias(const Var& x, const Var& b) {
  Tape& t = common_tape(x, b);
  if (b.rows() != 1 || b.cols() != x.cols()) throw std::invalid_argument("add_bias: bad bias shape");
  Matrix out = x.value().rowwise() + b.value().row(0);
  return t.record(std::move(out), {x, b}, [x, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, g);
    if (t.requires_grad(b)) t.accumulate(b, g.colwise().sum());
  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "add");
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "sub");
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(const Var& a, double c) {
  return a.tape().record(a.value() * c, {a},
                         [a, c](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g * c); });
}

Var add_scalar(const Var& a, double c) {
  Matrix out = a.value().array() + c;
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g); });
}

Var mul_scalar(const Var& s, const Var& x) {
  Tape& t = common_tape(s, x);
  if (s.value().size() != 1) throw std::invalid_argument("mul_scalar: s must be 1x1");
  Matrix out = x.value() * s.value()(0, 0);
  return t.record(std::move(out), {s, x}, [s, x](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(s)) t.accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(x.value()).sum()));
    if (t.requires_grad(x)) t.accumulate(x, g * s.value()(0, 0));
  });
}

Var mul_col(const Var& x, const Var& c) {
  Tape& t = common_tape(x, c);
  require_column(x, c, "mul_col");
  Matrix out = x.value().array().colwise() * c.value().col(0).array();
  return t.record(std::move(out), {x, c}, [x, c](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(x)) {
      Matrix gx = g.array().colwise() * c.value().col(0).array();
      t.accumulate(x, gx);
    }
    if (t.requires_grad(c)) t.accumulate(c, g.cwiseProduct(x.value()).rowwise().sum());
  });
}

Var div_col(const Var& x, const Var& c) {
  Tape& t = common_tape(x, c);
  require_column(x, c, "div_col");
  Matrix out = x.value().array().colwise() / c.value().col(0).array();
  return t.record(std::move(out), {x, c}, [x, c](Tape& t, const Matrix& g, const Matrix&) {
    const auto cc = c.value().col(0).array();
    if (t.requires_grad(x)) {
      Matrix gx = g.array().colwise() / cc;
      t.accumulate(x, gx);
    }
    if (t.requires_grad(c)) {
      Matrix gc = -(g.cwiseProduct(x.value()).rowwise().sum().array() / cc.square()).matrix();
      t.accumulate(c, gc);
    }
  });
}

Var tanh(const Var& x) {
  Matrix out = x.value().array().tanh();
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(x, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var relu(const Var& x) {
  Matrix out = x.value().cwiseMax(0.0);
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, (x.value().array() > 0.0).select(g, 0.0));
  });
}

Var sigmoid(const Var& x) {
  Matrix out = (1.0 + (-x.value().array()).exp()).inverse();
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(x, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var exp(const Var& x) {
  Matrix out = x.value().array().exp();
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(x, g.cwiseProduct(y));
  });
}

Var log(const Var& x) {
  Matrix out = x.value().array().log();
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, g.cwiseQuotient(x.value()));
  });
}

Var softplus(const Var& x) {
  // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
  const auto xa = x.value().array();
  Matrix out = xa.max(0.0) + (-xa.abs()).exp().log1p();
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix&) {
    const auto s = (1.0 + (-x.value().array()).exp()).inverse();
    t.accumulate(x, (g.array() * s).matrix());
  });
}

Var square(const Var& x) {
  Matrix out = x.value().array().square();
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, 2.0 * g.cwiseProduct(x.value()));
  });
}

Var minimum(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "minimum");
  Matrix out = a.value().cwiseMin(b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    const auto take_a = a.value().array() <= b.value().array();
    if (t.requires_grad(a)) t.accumulate(a, take_a.select(g, 0.0));
    if (t.requires_grad(b)) t.accumulate(b, take_a.select(0.0, g));
  });
}

Var clamp(const Var& x, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  Matrix out = x.value().cwiseMax(lo).cwiseMin(hi);
  return x.tape().record(std::move(out), {x}, [x, lo, hi](Tape& t, const Matrix& g, const Matrix&) {
    const auto inside = x.value().array() >= lo && x.value().array() <= hi;
    t.accumulate(x, inside.select(g, 0.0));
  });
}

Var sum(const Var& x) {
  Matrix out = Matrix::Constant(1, 1, x.value().sum());
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw std::invalid_argument("mean of an empty matrix");
  Matrix out = Matrix::Constant(1, 1, x.value().sum() / n);
  return x.tape().record(std::move(out), {x}, [x, n](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0) / n));
  });
}

Var row_sum(const Var& x) {
  Matrix out = x.value().rowwise().sum();
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix&) {
    Matrix gx = g.col(0).replicate(1, x.cols());
    t.accumulate(x, gx);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  Tape& t = parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &t) throw std::logic_error("operands recorded on different tapes");
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return t.record(std::move(out), parts, [parts](Tape& t, const Matrix& g, const Matrix&) {
    Eigen::Index at = 0;
    for (const Var& p : parts) {
      if (t.requires_grad(p)) t.accumulate(p, g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  Matrix out = x.value().middleCols(start, count);
  return x.tape().record(std::move(out), {x}, [x, start, count](Tape& t, const Matrix& g, const Matrix&) {
    Matrix gx = Matrix::Zero(x.rows(), x.cols());
    gx.middleCols(start, count) = g;
    t.accumulate(x, gx);
  });
}

Var log_expectation_rows(const Var& x, const Matrix& weights) {
  if (weights.rows() != x.rows() || weights.cols() != x.cols()) {
    throw std::invalid_argument("log_expectation_rows: weight shape mismatch");
  }
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.rows();
  Matrix out(n, 1);
  // Normalized posterior weights w_ij exp(x_ij - out_i), kept for backward.
  Matrix post = Matrix::Zero(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < xv.cols(); ++j) {
      if (weights(i, j) > 0.0) top = std::max(top, xv(i, j));
    }
    if (!std::isfinite(top)) throw std::invalid_argument("log_expectation_rows: row has no mass");
    double s = 0.0;
    for (Eigen::Index j = 0; j < xv.cols(); ++j) {
      if (weights(i, j) > 0.0) {
        post(i, j) = weights(i, j) * std::exp(xv(i, j) - top);
        s += post(i, j);
      }
    }
    post.row(i) /= s;
    out(i, 0) = top + std::log(s);
  }
  Tape& t = x.tape();
  const Var p = t.constant(std::move(post));
  return t.record(std::move(out), {x}, [x, p](Tape& t, const Matrix& g, const Matrix&) {
    Matrix gx = p.value().array().colwise() * g.col(0).array();
    t.accumulate(x, gx);
  });
}

Var logmeanexp_rows(const Var& x) {
  if (x.cols() == 0) throw std::invalid_argument("logmeanexp_rows: no columns");
  return log_expectation_rows(x, Matrix::Constant(x.rows(), x.cols(), 1.0 / x.cols()));
}

Var detach(const Var& x) { return x.tape().constant(x.value()); }

}  // namespace drsac::nn
