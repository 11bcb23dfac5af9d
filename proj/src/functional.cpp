#include "drsac/functional.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "drsac/errors.hpp"
#include "drsac/kl_dual.hpp"
#include "drsac/nn/adam.hpp"

namespace drsac::functional {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFloorFraction = 1e-4;
constexpr double kRowFloorFraction = 1e-8;  // matches the dual solver's search floor

using RowRef = Eigen::Ref<const Eigen::RowVectorXd>;

double essinf(const RowRef& values, const RowRef& weights) {
  double lo = kInf;
  for (Eigen::Index j = 0; j < values.size(); ++j) {
    if (weights[j] > 0.0) lo = std::min(lo, values[j]);
  }
  return lo;
}

// Tilted moments of u = V - essinf at g: log E_w[exp(-u/g)], E_q[u], Var_q[u]
// with q ∝ w exp(-u/g).
struct Tilt {
  double log_mean = 0.0;
  double mean_u = 0.0;
  double var_u = 0.0;
};

Tilt tilt(const RowRef& values, const RowRef& weights, double vmin, double g) {
  // u >= 0, so exp(-u/g) <= 1 and the sum cannot overflow; the essinf atoms
  // contribute exp(0) so it cannot underflow to zero either.
  double s = 0.0, s1 = 0.0, s2 = 0.0;
  for (Eigen::Index j = 0; j < values.size(); ++j) {
    if (weights[j] <= 0.0) continue;
    const double u = values[j] - vmin;
    const double e = weights[j] * std::exp(-u / g);
    s += e;
    s1 += e * u;
    s2 += e * u * u;
  }
  Tilt t;
  t.log_mean = std::log(s);
  t.mean_u = s1 / s;
  t.var_u = std::max(0.0, s2 / s - t.mean_u * t.mean_u);
  return t;
}

void check_measures(const ValueMeasures& m) {
  if (m.values.rows() != m.weights.rows() || m.values.cols() != m.weights.cols()) {
    throw std::invalid_argument("value measures: values/weights shape mismatch");
  }
  if (m.values.cols() == 0) throw std::invalid_argument("value measures: no atoms");
}

// Exact-mode solve of one row over [lo, high] plus the beta -> 0 limit.
// lo is the smaller of the global floor and kRowFloorFraction times the
// row's value spread: when a row's atoms are close together relative to the
// global value bound its optimal beta can sit far below the global floor.
void solve_row(const RowRef& values, const RowRef& weights, double delta, const GBounds& bounds,
               double tol, double& g, char& boundary, double& value) {
  const double vmin = essinf(values, weights);
  double vmax = vmin;
  for (Eigen::Index j = 0; j < values.size(); ++j) {
    if (weights[j] > 0.0) vmax = std::max(vmax, values[j]);
  }
  GBounds b = bounds;
  if (vmax > vmin) b.floor = std::min(b.floor, kRowFloorFraction * (vmax - vmin));
  auto slope = [&](double x, Tilt& t) {
    t = tilt(values, weights, vmin, x);
    return -t.log_mean - delta - t.mean_u / x;
  };
  auto f = [&](double x) { return vmin - x * tilt(values, weights, vmin, x).log_mean - x * delta; };

  Tilt t;
  double x;
  if (slope(b.floor, t) <= 0.0) {
    x = b.floor;
  } else if (slope(b.high, t) >= 0.0) {
    x = b.high;
  } else {
    double lo = b.floor, hi = b.high;
    x = std::clamp(g, lo, hi);
    if (!(x > lo && x < hi)) x = std::sqrt(lo * hi);
    for (int it = 0; it < 200; ++it) {
      const double d1 = slope(x, t);
      if (d1 > 0.0) lo = x;
      else hi = x;
      const double d2 = -t.var_u / (x * x * x);
      double next = d2 < 0.0 ? x - d1 / d2 : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      const bool done = std::abs(next - x) <= tol * x || hi - lo <= tol * lo;
      x = next;
      if (done) break;
    }
  }
  const double fx = f(x);
  if (!std::isfinite(fx)) throw NumericalError("optimize_g: non-finite row objective");
  if (vmin >= fx) {
    g = bounds.floor;
    boundary = 1;
    value = vmin;
  } else {
    g = x;
    boundary = 0;
    value = fx;
  }
}

}  // namespace

Matrix TransitionBatch::inputs() const {
  Matrix x(states.rows(), states.cols() + actions.cols());
  x << states, actions;
  return x;
}

void TransitionBatch::validate(double r_max) const {
  const Eigen::Index n = states.rows();
  if (actions.rows() != n || rewards.rows() != n || rewards.cols() != 1 ||
      (next_states.size() > 0 && next_states.rows() != n)) {
    throw std::invalid_argument("transition batch: misaligned arrays");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(rewards(i, 0) >= 0.0 && rewards(i, 0) <= r_max)) {
      throw std::invalid_argument("transition batch: reward outside [0, r_max]");
    }
  }
  if (m > 0) {
    if (atoms.rows() != n * m || atoms.cols() != states.cols()) {
      throw std::invalid_argument("transition batch: atoms must be (n*m) x state_dim");
    }
    if (atom_weights.size() > 0) {
      if (atom_weights.rows() != n || atom_weights.cols() != m) {
        throw std::invalid_argument("transition batch: atom_weights must be n x m");
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        if ((atom_weights.row(i).array() < 0.0).any() ||
            std::abs(atom_weights.row(i).sum() - 1.0) > 1e-12) {
          throw std::invalid_argument("transition batch: atom weights are not a distribution");
        }
      }
    }
  }
}

ValueMeasures value_measures(const Matrix& atom_values, int m) {
  if (m <= 0 || atom_values.size() % m != 0) {
    throw std::invalid_argument("value_measures: atom count is not a multiple of m");
  }
  ValueMeasures out;
  const Eigen::Index n = atom_values.size() / m;
  out.values = Eigen::Map<const Matrix>(atom_values.data(), n, m);
  out.weights = Matrix::Constant(n, m, 1.0 / m);
  return out;
}

ValueMeasures value_measures(const TransitionBatch& batch, const ValueFn& v_of) {
  if (!batch.has_atoms()) throw std::invalid_argument("value_measures: batch has no atoms");
  const Vector v = v_of(batch.atoms);
  if (v.size() != batch.atoms.rows()) {
    throw std::invalid_argument("value_measures: value function returned wrong length");
  }
  ValueMeasures out = value_measures(Matrix(v.transpose()), batch.m);
  if (batch.atom_weights.size() > 0) out.weights = batch.atom_weights;
  return out;
}

std::vector<double> per_sample_sup(const ValueMeasures& measures, double delta) {
  check_measures(measures);
  std::vector<double> out(static_cast<std::size_t>(measures.values.rows()));
  for (Eigen::Index i = 0; i < measures.values.rows(); ++i) {
    const Eigen::RowVectorXd v = measures.values.row(i);
    const Eigen::RowVectorXd w = measures.weights.row(i);
    out[static_cast<std::size_t>(i)] =
        kl::detail::solve_dual_unchecked({v.data(), static_cast<std::size_t>(v.size())},
                                         {w.data(), static_cast<std::size_t>(w.size())}, delta)
            .value;
  }
  return out;
}

std::vector<double> per_sample_sup(const TransitionBatch& batch, const ValueFn& v_of,
                                   double delta) {
  return per_sample_sup(value_measures(batch, v_of), delta);
}

GBounds GBounds::from_value_bound(double v_max, double delta) {
  if (!(delta > 0.0) || !(v_max > 0.0) || !std::isfinite(v_max)) {
    throw std::invalid_argument("GBounds: need delta > 0 and a finite positive value bound");
  }
  GBounds b;
  b.high = v_max / delta;
  b.floor = kFloorFraction * b.high;
  return b;
}

double row_objective(const RowRef& values, const RowRef& weights, double g, double delta) {
  if (delta == 0.0) return values.dot(weights);
  if (!(g > 0.0)) throw std::invalid_argument("row_objective: g must be positive");
  const double vmin = essinf(values, weights);
  return vmin - g * tilt(values, weights, vmin, g).log_mean - g * delta;
}

GFunction GFunction::exact(Eigen::Index rows, GBounds bounds) {
  GFunction g;
  g.mode_ = Mode::kExact;
  g.bounds_ = bounds;
  g.table_.assign(static_cast<std::size_t>(rows), 0.5 * (bounds.floor + bounds.high));
  g.boundary_.assign(static_cast<std::size_t>(rows), 0);
  return g;
}

GFunction GFunction::learned(nn::MlpSpec spec, GBounds bounds, Rng& rng) {
  spec.output_dim = 1;
  spec.output_activation = nn::Activation::kIdentity;
  GFunction g;
  g.mode_ = Mode::kLearned;
  g.bounds_ = bounds;
  g.store_ = std::make_unique<nn::ParameterStore>();
  g.net_ = nn::Mlp(*g.store_, "g", spec);
  g.net_.initialize(rng, /*zero_last_layer=*/true);
  return g;
}

nn::Var GFunction::forward(nn::Tape& tape, const Matrix& inputs, bool trainable) const {
  if (mode_ != Mode::kLearned) throw std::logic_error("GFunction::forward: exact mode");
  // g = floor * (high / floor)^sigmoid(net): the ratio high/floor is 1e4, so
  // a log-scale squash keeps every decade reachable at small step sizes.
  const nn::Var s = nn::sigmoid(net_.forward(tape, tape.constant(inputs), trainable));
  return nn::exp(s * std::log(bounds_.high / bounds_.floor)) * bounds_.floor;
}

std::vector<double> GFunction::values(const Matrix& inputs) const {
  if (mode_ == Mode::kExact) {
    if (static_cast<std::size_t>(inputs.rows()) != table_.size()) {
      throw std::invalid_argument("GFunction: exact table size does not match the batch");
    }
    return table_;
  }
  Matrix out = net_.predict(inputs);
  nn::activate_in_place(out, nn::Activation::kSigmoid);
  std::vector<double> g(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    g[static_cast<std::size_t>(i)] =
        std::clamp(bounds_.floor * std::exp(out(i, 0) * std::log(bounds_.high / bounds_.floor)),
                   bounds_.floor, bounds_.high);
  }
  return g;
}

std::vector<double> objective_rows(const ValueMeasures& measures, const Matrix& inputs,
                                   const GFunction& g, double delta) {
  check_measures(measures);
  const std::vector<double> gv = g.values(inputs);
  if (static_cast<Eigen::Index>(gv.size()) != measures.values.rows()) {
    throw std::invalid_argument("objective_rows: g and measures disagree on batch size");
  }
  std::vector<double> out(gv.size());
  for (std::size_t i = 0; i < gv.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (delta > 0.0 && g.mode() == GFunction::Mode::kExact && g.boundary()[i]) {
      out[i] = essinf(measures.values.row(r), measures.weights.row(r));
    } else {
      out[i] = row_objective(measures.values.row(r), measures.weights.row(r), gv[i], delta);
    }
  }
  return out;
}

double objective(const ValueMeasures& measures, const Matrix& inputs, const GFunction& g,
                 double delta) {
  const auto rows = objective_rows(measures, inputs, g, delta);
  double s = 0.0;
  for (double r : rows) s += r;
  return s / static_cast<double>(rows.size());
}

nn::Var objective_var(nn::Tape& tape, const ValueMeasures& measures, const Matrix& inputs,
                      const GFunction& g, double delta, bool trainable) {
  check_measures(measures);
  const Eigen::Index n = measures.values.rows();
  Matrix vmin(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    vmin(i, 0) = essinf(measures.values.row(i), measures.weights.row(i));
  }
  const Matrix neg_u = -(measures.values.colwise() - vmin.col(0));
  const nn::Var gv = g.forward(tape, inputs, trainable);
  const nn::Var lme = nn::log_expectation_rows(nn::div_col(tape.constant(neg_u), gv),
                                               measures.weights);
  const nn::Var rows = tape.constant(vmin) - gv * lme - delta * gv;
  return nn::mean(rows);
}

GResult optimize_g(const ValueMeasures& measures, const Matrix& inputs, double delta,
                   GFunction& g, const GOptions& options) {
  check_measures(measures);
  GResult result;
  if (options.steps < 1) throw std::invalid_argument("optimize_g: steps must be >= 1");
  if (delta == 0.0) {
    // The objective no longer depends on g.
    result.objective = objective(measures, inputs, g, delta);
    result.history.assign(2, result.objective);
    return result;
  }

  if (g.mode() == GFunction::Mode::kExact) {
    const Eigen::Index n = measures.values.rows();
    if (static_cast<Eigen::Index>(g.table().size()) != n) {
      throw std::invalid_argument("optimize_g: exact table size does not match the batch");
    }
    result.history.push_back(objective(measures, inputs, g, delta));
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      double value = 0.0;
      solve_row(measures.values.row(i), measures.weights.row(i), delta, g.bounds(), options.tol,
                g.table()[k], g.boundary()[k], value);
      total += value;
    }
    result.objective = total / static_cast<double>(n);
    result.history.push_back(result.objective);
    return result;
  }

  nn::ParameterStore& store = g.store();
  for (int step = 0; step <= options.steps; ++step) {
    nn::Tape tape;
    const nn::Var obj = objective_var(tape, measures, inputs, g, delta, step < options.steps);
    const double value = obj.scalar();
    if (!std::isfinite(value)) {
      throw NumericalError("optimize_g: non-finite objective at step " + std::to_string(step));
    }
    result.history.push_back(value);
    if (step == options.steps) break;
    tape.backward(-obj);
    nn::adam_step(store, {options.lr});
  }
  result.objective = result.history.back();
  return result;
}

GResult optimize_g(const TransitionBatch& batch, const ValueFn& v_of, double delta,
                   GFunction& g, const GOptions& options) {
  return optimize_g(value_measures(batch, v_of), batch.inputs(), delta, g, options);
}

std::vector<double> functional_bellman_target(const Matrix& rewards,
                                              const ValueMeasures& measures,
                                              const std::vector<double>& objective_rows,
                                              double gamma) {
  if (rewards.rows() != static_cast<Eigen::Index>(objective_rows.size()) ||
      measures.values.rows() != rewards.rows()) {
    throw std::invalid_argument("functional_bellman_target: batch size mismatch");
  }
  std::vector<double> out(objective_rows.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = rewards(static_cast<Eigen::Index>(i), 0) + gamma * objective_rows[i];
  }
  return out;
}

std::vector<double> functional_bellman_target(const TransitionBatch& batch,
                                              const ValueFn& v_of, const GFunction& g,
                                              double delta, double gamma) {
  const ValueMeasures m = value_measures(batch, v_of);
  return functional_bellman_target(batch.rewards, m, objective_rows(m, batch.inputs(), g, delta),
                                   gamma);
}

}  // namespace drsac::functional
