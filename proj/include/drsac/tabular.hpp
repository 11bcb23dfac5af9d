#pragma once

// Exact distributionally robust soft dynamic programming on finite RMDPs.

#include <optional>
#include <span>
#include <vector>

#include "drsac/kl_dual.hpp"
#include "drsac/linalg.hpp"

namespace drsac::tabular {

/// Finite robust MDP with (s,a)-rectangular KL ambiguity sets around the
/// nominal transitions.
struct TabularRmdp {
  int n_states = 0;
  int n_actions = 0;
  Matrix reward;  // [s][a], in [0, r_max]
  // transitions[s * n_actions + a] is the nominal next-state distribution.
  std::vector<std::vector<double>> transitions;
  double gamma = 0.9;
  double delta = 0.0;
  double alpha = 0.0;
  double r_max = 1.0;

  const std::vector<double>& next(int s, int a) const {
    return transitions[static_cast<std::size_t>(s) * n_actions + a];
  }
  std::vector<double>& next(int s, int a) {
    return transitions[static_cast<std::size_t>(s) * n_actions + a];
  }

  /// (R_max + alpha log|A|) / (1 - gamma): bound on every soft value.
  double value_bound() const;

  /// Throws std::invalid_argument on any broken invariant.
  void validate() const;
};

struct SoftQTable {
  Matrix q;  // [s][a]
};

struct SoftVTable {
  std::vector<double> v;  // [s]
};

struct StochasticPolicy {
  Matrix pi;  // [s][a], rows on the simplex

  static StochasticPolicy uniform(int n_states, int n_actions);
  void validate() const;
};

/// -sum_a pi(a|s) log pi(a|s), with 0 log 0 = 0.
double policy_entropy(const StochasticPolicy& policy, int s);

/// v[s] = sum_a pi(a|s) (q[s][a] - alpha log pi(a|s)).
SoftVTable soft_value_from_q(const SoftQTable& q, const StochasticPolicy& policy, double alpha);

/// Robust soft Bellman backup through the KL dual, one dual solve per (s,a).
SoftQTable dr_soft_bellman(const SoftQTable& q, const StochasticPolicy& policy,
                           const TabularRmdp& rmdp);

/// Same backup with the nominal expectation (delta ignored).
SoftQTable nonrobust_soft_bellman(const SoftQTable& q, const StochasticPolicy& policy,
                                  const TabularRmdp& rmdp);

/// Dual solutions of every (s,a) backup, row-major in (s,a).
std::vector<kl::DualSolution> dr_dual_solutions(const SoftQTable& q,
                                                const StochasticPolicy& policy,
                                                const TabularRmdp& rmdp);

/// max |a - b| over all entries.
double sup_norm_distance(const SoftQTable& a, const SoftQTable& b);

struct EvaluationOptions {
  double tol = 1e-8;
  long max_iterations = 100000;
  std::optional<SoftQTable> initial;  // defaults to the zero table
};

/// Iterates the robust backup until ||Q - T Q||_inf < tol.
/// Throws ConvergenceError past max_iterations.
SoftQTable dr_soft_policy_evaluation(const StochasticPolicy& policy, const TabularRmdp& rmdp,
                                     const EvaluationOptions& options = {});

/// pi(a|s) ∝ exp(q[s][a] / alpha). Throws std::invalid_argument if alpha == 0.
StochasticPolicy dr_soft_policy_improvement(const SoftQTable& q, const TabularRmdp& rmdp);

struct PolicyIterationResult {
  StochasticPolicy policy;
  SoftQTable q;  // robust soft Q of `policy`
  int iterations = 0;
  // min over entries of (Q_{k+1} - Q_k) for each improvement round.
  std::vector<double> min_increments;
  bool monotone = true;  // every increment >= -tol
  bool bounded = true;   // every Q within [0, value_bound] (up to tol)
};

struct PolicyIterationOptions {
  double tol = 1e-8;
  int max_iterations = 1000;
  double evaluation_tol = 0.0;  // 0: use tol * 1e-2
};

PolicyIterationResult dr_soft_policy_iteration(const TabularRmdp& rmdp,
                                               const PolicyIterationOptions& options = {});

struct RegretReport {
  double kl_max = 0.0;     // max_{s,a} KL(p0 || p_hat)
  double eps1 = 0.0;
  double value_max = 0.0;  // (R_max + alpha log|A|) / (1 - gamma)
  double beta_low = 0.0;
  double eps2 = 0.0;
  double q_gap = 0.0;      // max over checked policies of ||Q_hat^pi - Q^pi||_inf
  double q_bound = 0.0;    // eps2 / (1 - gamma)
  double regret = 0.0;     // ||V* - V^{pi_hat*}||_inf under the nominal RMDP
  double regret_bound = 0.0;  // 2 eps2 / (1 - gamma)
  bool q_gap_holds = false;
  bool regret_holds = false;

  double q_slack() const { return q_bound - q_gap; }
  double regret_slack() const { return regret_bound - regret; }
};

/// Checks the plug-in estimation bounds for an RMDP whose nominal
/// transitions were replaced by estimates with the same supports.
/// Throws std::invalid_argument on mismatched supports/shapes or when
/// max KL(p0 || p_hat) exceeds eps1^2.
RegretReport regret_bound_check(const TabularRmdp& rmdp, const TabularRmdp& estimated,
                                double eps1);

}  // namespace drsac::tabular
