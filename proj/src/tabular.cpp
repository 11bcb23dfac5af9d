#include "drsac/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "drsac/errors.hpp"

namespace drsac::tabular {

namespace {

void require_same_shape(const Matrix& a, int rows, int cols, const char* what) {
  if (a.rows() != rows || a.cols() != cols) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

template <typename Expectation>
SoftQTable backup(const SoftQTable& q, const StochasticPolicy& policy, const TabularRmdp& rmdp,
                  Expectation&& next_value) {
  require_same_shape(q.q, rmdp.n_states, rmdp.n_actions, "backup(q)");
  require_same_shape(policy.pi, rmdp.n_states, rmdp.n_actions, "backup(policy)");
  const SoftVTable v = soft_value_from_q(q, policy, rmdp.alpha);
  SoftQTable out{Matrix(rmdp.n_states, rmdp.n_actions)};
  for (int s = 0; s < rmdp.n_states; ++s) {
    for (int a = 0; a < rmdp.n_actions; ++a) {
      out.q(s, a) = rmdp.reward(s, a) + rmdp.gamma * next_value(v.v, rmdp.next(s, a));
    }
  }
  return out;
}

}  // namespace

double TabularRmdp::value_bound() const {
  return (r_max + alpha * std::log(static_cast<double>(n_actions))) / (1.0 - gamma);
}

void TabularRmdp::validate() const {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("rmdp: empty state/action set");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("rmdp: gamma must be in [0,1)");
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw std::invalid_argument("rmdp: delta < 0");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("rmdp: alpha < 0");
  if (!(r_max >= 0.0) || !std::isfinite(r_max)) throw std::invalid_argument("rmdp: bad r_max");
  require_same_shape(reward, n_states, n_actions, "rmdp reward");
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      const double r = reward(s, a);
      if (!(r >= 0.0 && r <= r_max)) {
        throw std::invalid_argument("rmdp: reward outside [0, r_max] at (" + std::to_string(s) +
                                    "," + std::to_string(a) + ")");
      }
    }
  }
  if (transitions.size() != static_cast<std::size_t>(n_states) * n_actions) {
    throw std::invalid_argument("rmdp: wrong number of transition rows");
  }
  for (const auto& row : transitions) {
    if (row.size() != static_cast<std::size_t>(n_states)) {
      throw std::invalid_argument("rmdp: transition row over the wrong number of states");
    }
    // Reuses the distribution invariants (non-negative, sums to one).
    kl::DiscreteDistribution(std::vector<double>(row.size(), 0.0), row);
  }
}

StochasticPolicy StochasticPolicy::uniform(int n_states, int n_actions) {
  return {Matrix::Constant(n_states, n_actions, 1.0 / n_actions)};
}

void StochasticPolicy::validate() const {
  for (Eigen::Index s = 0; s < pi.rows(); ++s) {
    double total = 0.0;
    for (Eigen::Index a = 0; a < pi.cols(); ++a) {
      if (!(pi(s, a) >= 0.0)) throw std::invalid_argument("policy: negative probability");
      total += pi(s, a);
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("policy: row does not sum to 1");
  }
}

double policy_entropy(const StochasticPolicy& policy, int s) {
  double h = 0.0;
  for (Eigen::Index a = 0; a < policy.pi.cols(); ++a) {
    const double p = policy.pi(s, a);
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

SoftVTable soft_value_from_q(const SoftQTable& q, const StochasticPolicy& policy, double alpha) {
  if (q.q.rows() != policy.pi.rows() || q.q.cols() != policy.pi.cols()) {
    throw std::invalid_argument("soft_value_from_q: shape mismatch");
  }
  SoftVTable v{std::vector<double>(static_cast<std::size_t>(q.q.rows()), 0.0)};
  for (Eigen::Index s = 0; s < q.q.rows(); ++s) {
    double acc = 0.0;
    for (Eigen::Index a = 0; a < q.q.cols(); ++a) {
      const double p = policy.pi(s, a);
      if (p > 0.0) acc += p * (q.q(s, a) - alpha * std::log(p));
    }
    v.v[static_cast<std::size_t>(s)] = acc;
  }
  return v;
}

SoftQTable dr_soft_bellman(const SoftQTable& q, const StochasticPolicy& policy,
                           const TabularRmdp& rmdp) {
  return backup(q, policy, rmdp, [&](const std::vector<double>& v, const std::vector<double>& p) {
    return kl::detail::solve_dual_unchecked(v, p, rmdp.delta).value;
  });
}

SoftQTable nonrobust_soft_bellman(const SoftQTable& q, const StochasticPolicy& policy,
                                  const TabularRmdp& rmdp) {
  return backup(q, policy, rmdp, [](const std::vector<double>& v, const std::vector<double>& p) {
    double e = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) e += p[i] * v[i];
    return e;
  });
}

std::vector<kl::DualSolution> dr_dual_solutions(const SoftQTable& q,
                                                const StochasticPolicy& policy,
                                                const TabularRmdp& rmdp) {
  const SoftVTable v = soft_value_from_q(q, policy, rmdp.alpha);
  std::vector<kl::DualSolution> out;
  out.reserve(rmdp.transitions.size());
  for (int s = 0; s < rmdp.n_states; ++s) {
    for (int a = 0; a < rmdp.n_actions; ++a) {
      out.push_back(kl::detail::solve_dual_unchecked(v.v, rmdp.next(s, a), rmdp.delta));
    }
  }
  return out;
}

double sup_norm_distance(const SoftQTable& a, const SoftQTable& b) {
  if (a.q.rows() != b.q.rows() || a.q.cols() != b.q.cols()) {
    throw std::invalid_argument("sup_norm_distance: shape mismatch");
  }
  return (a.q - b.q).cwiseAbs().maxCoeff();
}

SoftQTable dr_soft_policy_evaluation(const StochasticPolicy& policy, const TabularRmdp& rmdp,
                                     const EvaluationOptions& options) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("policy evaluation: tol must be positive");
  SoftQTable q = options.initial ? *options.initial
                                 : SoftQTable{Matrix::Zero(rmdp.n_states, rmdp.n_actions)};
  if (rmdp.gamma == 0.0) return dr_soft_bellman(q, policy, rmdp);

  // ||Q_{k+1} - Q_k|| < tol (1-gamma)/gamma implies ||Q_{k+1} - T Q_{k+1}|| < tol.
  const double threshold = options.tol * (1.0 - rmdp.gamma) / rmdp.gamma;
  double change = std::numeric_limits<double>::infinity();
  for (long it = 0; it < options.max_iterations; ++it) {
    SoftQTable next = dr_soft_bellman(q, policy, rmdp);
    change = sup_norm_distance(next, q);
    q = std::move(next);
    if (change < threshold) return q;
  }
  throw ConvergenceError("dr_soft_policy_evaluation did not converge (last change " +
                             std::to_string(change) + ")",
                         change, options.max_iterations);
}

StochasticPolicy dr_soft_policy_improvement(const SoftQTable& q, const TabularRmdp& rmdp) {
  if (!(rmdp.alpha > 0.0)) {
    throw std::invalid_argument("soft policy improvement needs alpha > 0");
  }
  StochasticPolicy out{Matrix(q.q.rows(), q.q.cols())};
  for (Eigen::Index s = 0; s < q.q.rows(); ++s) {
    const double top = q.q.row(s).maxCoeff();
    double total = 0.0;
    for (Eigen::Index a = 0; a < q.q.cols(); ++a) {
      out.pi(s, a) = std::exp((q.q(s, a) - top) / rmdp.alpha);
      total += out.pi(s, a);
    }
    out.pi.row(s) /= total;
  }
  return out;
}

PolicyIterationResult dr_soft_policy_iteration(const TabularRmdp& rmdp,
                                               const PolicyIterationOptions& options) {
  if (!(rmdp.alpha > 0.0)) throw std::invalid_argument("policy iteration needs alpha > 0");
  if (!(options.tol > 0.0)) throw std::invalid_argument("policy iteration: tol must be positive");

  EvaluationOptions eval;
  eval.tol = options.evaluation_tol > 0.0 ? options.evaluation_tol : options.tol * 1e-2;
  const double bound = rmdp.value_bound();

  PolicyIterationResult result;
  result.policy = StochasticPolicy::uniform(rmdp.n_states, rmdp.n_actions);
  result.q = dr_soft_policy_evaluation(result.policy, rmdp, eval);

  auto check_bounds = [&](const SoftQTable& q) {
    if (q.q.minCoeff() < -options.tol || q.q.maxCoeff() > bound + options.tol) {
      result.bounded = false;
    }
  };
  check_bounds(result.q);

  for (int it = 1; it <= options.max_iterations; ++it) {
    StochasticPolicy next_policy = dr_soft_policy_improvement(result.q, rmdp);
    eval.initial = result.q;
    SoftQTable next_q = dr_soft_policy_evaluation(next_policy, rmdp, eval);

    const double min_increment = (next_q.q - result.q.q).minCoeff();
    result.min_increments.push_back(min_increment);
    if (min_increment < -options.tol) result.monotone = false;
    check_bounds(next_q);

    const double change = sup_norm_distance(next_q, result.q);
    result.policy = std::move(next_policy);
    result.q = std::move(next_q);
    result.iterations = it;
    if (change < options.tol) return result;
  }
  throw ConvergenceError("dr_soft_policy_iteration did not converge", 0.0,
                         options.max_iterations);
}

RegretReport regret_bound_check(const TabularRmdp& rmdp, const TabularRmdp& estimated,
                                double eps1) {
  rmdp.validate();
  estimated.validate();
  if (rmdp.n_states != estimated.n_states || rmdp.n_actions != estimated.n_actions ||
      rmdp.gamma != estimated.gamma || rmdp.delta != estimated.delta ||
      rmdp.alpha != estimated.alpha || rmdp.reward != estimated.reward) {
    throw std::invalid_argument("regret_bound_check: RMDPs may differ only in transitions");
  }
  if (!(rmdp.delta > 0.0)) throw std::invalid_argument("regret_bound_check: delta must be > 0");
  if (!(eps1 >= 0.0)) throw std::invalid_argument("regret_bound_check: eps1 must be >= 0");

  RegretReport report;
  report.eps1 = eps1;
  for (std::size_t i = 0; i < rmdp.transitions.size(); ++i) {
    const auto& p = rmdp.transitions[i];
    const auto& p_hat = estimated.transitions[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      if ((p[j] > 0.0) != (p_hat[j] > 0.0)) {
        throw std::invalid_argument("regret_bound_check: supports differ");
      }
    }
    report.kl_max = std::max(report.kl_max, kl::kl_divergence(p, p_hat));
  }
  if (report.kl_max > eps1 * eps1 * (1.0 + 1e-12)) {
    throw std::invalid_argument("regret_bound_check: KL(p0 || p_hat) exceeds eps1^2");
  }

  PolicyIterationOptions pi_options;
  pi_options.tol = 1e-10;
  const PolicyIterationResult optimal = dr_soft_policy_iteration(rmdp, pi_options);
  const PolicyIterationResult optimal_hat = dr_soft_policy_iteration(estimated, pi_options);

  EvaluationOptions eval;
  eval.tol = 1e-11;
  report.value_max = rmdp.value_bound();
  double beta_low = 0.5;
  report.q_gap = 0.0;
  for (const StochasticPolicy* pi : {&optimal_hat.policy, &optimal.policy}) {
    const SoftQTable q = dr_soft_policy_evaluation(*pi, rmdp, eval);
    const SoftQTable q_hat = dr_soft_policy_evaluation(*pi, estimated, eval);
    report.q_gap = std::max(report.q_gap, sup_norm_distance(q, q_hat));
    // Dual optima of both kernels at both fixed points. beta* = 0 solutions
    // agree across kernels (same supports, same essinf) and do not enter.
    for (const SoftQTable* table : {&q, &q_hat}) {
      for (const TabularRmdp* kernel : {&rmdp, &estimated}) {
        for (const auto& sol : dr_dual_solutions(*table, *pi, *kernel)) {
          if (sol.beta_star > 0.0) beta_low = std::min(beta_low, sol.beta_star / 2.0);
        }
      }
    }
  }
  report.beta_low = beta_low;
  report.eps2 = eps1 == 0.0 ? 0.0
                            : rmdp.gamma * eps1 * report.value_max / rmdp.delta *
                                  std::exp(report.value_max / beta_low);
  report.q_bound = report.eps2 / (1.0 - rmdp.gamma);
  report.regret_bound = 2.0 * report.eps2 / (1.0 - rmdp.gamma);

  const SoftQTable q_star = dr_soft_policy_evaluation(optimal.policy, rmdp, eval);
  const SoftVTable v_star = soft_value_from_q(q_star, optimal.policy, rmdp.alpha);
  const SoftQTable q_hat_policy = dr_soft_policy_evaluation(optimal_hat.policy, rmdp, eval);
  const SoftVTable v_hat_policy = soft_value_from_q(q_hat_policy, optimal_hat.policy, rmdp.alpha);
  report.regret = 0.0;
  for (std::size_t s = 0; s < v_star.v.size(); ++s) {
    report.regret = std::max(report.regret, std::abs(v_star.v[s] - v_hat_policy.v[s]));
  }

  report.q_gap_holds = report.q_gap <= report.q_bound;
  report.regret_holds = report.regret <= report.regret_bound;
  return report;
}

}  // namespace drsac::tabular
