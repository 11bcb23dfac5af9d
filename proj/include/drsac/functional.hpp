#pragma once

// Functional form of the inner dual problem: one bounded function g(s,a)
// shared across a batch in place of a per-row scalar beta.

#include <functional>
#include <memory>
#include <vector>

#include "drsac/linalg.hpp"
#include "drsac/nn/mlp.hpp"
#include "drsac/nn/parameter_store.hpp"
#include "drsac/nn/tape.hpp"
#include "drsac/rng.hpp"

namespace drsac::functional {

/// Aligned transitions. Row i may carry m next-state atoms stored at rows
/// i*m .. i*m+m-1 of `atoms`; `atom_weights` (n x m) holds their
/// probabilities, or is empty for the uniform empirical measure.
struct TransitionBatch {
  Matrix states;
  Matrix actions;
  Matrix rewards;  // n x 1
  Matrix next_states;
  Matrix atoms;
  Matrix atom_weights;
  int m = 0;

  Eigen::Index size() const { return states.rows(); }
  bool has_atoms() const { return m > 0; }
  /// [states | actions], the input of a learned g.
  Matrix inputs() const;
  /// Throws std::invalid_argument on misaligned arrays, bad weights or
  /// rewards outside [0, r_max].
  void validate(double r_max) const;
};

/// Maps a block of states (one per row) to their values.
using ValueFn = std::function<Vector(const Matrix& states)>;

/// Next-state values and their probabilities, n x k each.
struct ValueMeasures {
  Matrix values;
  Matrix weights;
};

/// Evaluates `v_of` at every atom of every row. Throws if the batch has no atoms.
ValueMeasures value_measures(const TransitionBatch& batch, const ValueFn& v_of);
ValueMeasures value_measures(const Matrix& atom_values, int m);

/// Per-row sup over beta >= 0 of the dual objective (production dual solver).
std::vector<double> per_sample_sup(const ValueMeasures& measures, double delta);
std::vector<double> per_sample_sup(const TransitionBatch& batch, const ValueFn& v_of,
                                   double delta);

struct GBounds {
  double floor = 0.0;
  double high = 0.0;

  /// high = v_max / delta with v_max = (R_max + alpha log|A|) / (1 - gamma),
  /// floor = 1e-4 * high. Requires delta > 0.
  static GBounds from_value_bound(double v_max, double delta);
};

/// Row objective -g log E_w[exp(-V/g)] - g delta, stabilized by the row's
/// essential infimum. delta = 0 gives E_w[V].
double row_objective(const Eigen::Ref<const Eigen::RowVectorXd>& values,
                     const Eigen::Ref<const Eigen::RowVectorXd>& weights, double g, double delta);

class GFunction {
 public:
  enum class Mode { kExact, kLearned };

  /// Per-row table, initialized at mid-range.
  static GFunction exact(Eigen::Index rows, GBounds bounds);
  /// Network on [s | a] squashed log-uniformly into [floor, high]:
  /// g = floor (high / floor)^sigmoid(net). The last layer starts at zero so
  /// the initial output is the geometric mid-point sqrt(floor * high).
  static GFunction learned(nn::MlpSpec spec, GBounds bounds, Rng& rng);

  Mode mode() const { return mode_; }
  const GBounds& bounds() const { return bounds_; }
  void set_bounds(GBounds bounds) { bounds_ = bounds; }

  /// g for every row of the batch inputs.
  std::vector<double> values(const Matrix& inputs) const;

  // Exact mode. boundary[i] marks rows whose supremum is the beta -> 0
  // limit; their objective is the essential infimum and table[i] = floor.
  // Other entries lie in [min(floor, 1e-8 * row value spread), high]: the
  // table stands in for a per-row beta, so it may go below the global floor
  // when a row's atoms are tightly clustered.
  std::vector<double>& table() { return table_; }
  const std::vector<double>& table() const { return table_; }
  std::vector<char>& boundary() { return boundary_; }
  const std::vector<char>& boundary() const { return boundary_; }

  // Learned mode.
  nn::ParameterStore& store() { return *store_; }
  const nn::ParameterStore& store() const { return *store_; }
  nn::Mlp& net() { return net_; }
  const nn::Mlp& net() const { return net_; }
  nn::Var forward(nn::Tape& tape, const Matrix& inputs, bool trainable = true) const;

 private:
  Mode mode_ = Mode::kExact;
  GBounds bounds_;
  std::vector<double> table_;
  std::vector<char> boundary_;
  std::unique_ptr<nn::ParameterStore> store_;
  nn::Mlp net_;
};

/// Per-row objective at the current g (boundary rows of an exact g use the
/// beta -> 0 limit).
std::vector<double> objective_rows(const ValueMeasures& measures, const Matrix& inputs,
                                   const GFunction& g, double delta);
double objective(const ValueMeasures& measures, const Matrix& inputs, const GFunction& g,
                 double delta);

/// Batch-mean objective of a learned g, recorded on `tape`.
nn::Var objective_var(nn::Tape& tape, const ValueMeasures& measures, const Matrix& inputs,
                      const GFunction& g, double delta, bool trainable = true);

struct GOptions {
  int steps = 5;       // ascent steps (learned mode)
  double lr = 5e-5;    // Adam step size (learned mode)
  double tol = 1e-13;  // relative stationarity tolerance (exact mode)
};

struct GResult {
  double objective = 0.0;
  std::vector<double> history;  // objective before each step and after the last
};

/// Maximizes the batch-mean objective over g. Exact mode runs a projected
/// Newton iteration per row (the objective is separable and concave) and
/// compares with the beta -> 0 limit; learned mode takes `steps` Adam ascent
/// steps. Throws NumericalError on a non-finite objective.
GResult optimize_g(const ValueMeasures& measures, const Matrix& inputs, double delta,
                   GFunction& g, const GOptions& options = {});
GResult optimize_g(const TransitionBatch& batch, const ValueFn& v_of, double delta,
                   GFunction& g, const GOptions& options = {});

/// r + gamma * f((s,a), g(s,a)) per row.
std::vector<double> functional_bellman_target(const TransitionBatch& batch,
                                              const ValueFn& v_of, const GFunction& g,
                                              double delta, double gamma);
std::vector<double> functional_bellman_target(const Matrix& rewards,
                                              const ValueMeasures& measures,
                                              const std::vector<double>& objective_rows,
                                              double gamma);

}  // namespace drsac::functional
