#include <doctest.h>

#include <cmath>
#include <vector>

#include "drsac/errors.hpp"
#include "drsac/instances.hpp"
#include "drsac/tabular.hpp"

namespace tab = drsac::tabular;
namespace inst = drsac::instances;
using drsac::Matrix;

namespace {

tab::TabularRmdp single_state(double reward, double gamma, double delta, double alpha) {
  tab::TabularRmdp m;
  m.n_states = 1;
  m.n_actions = 1;
  m.reward = Matrix::Constant(1, 1, reward);
  m.transitions = {{1.0}};
  m.gamma = gamma;
  m.delta = delta;
  m.alpha = alpha;
  m.r_max = 1.0;
  return m;
}

// Re-applies the robust backup using the primal oracle for every entry.
tab::SoftQTable primal_backup(const tab::SoftQTable& q, const tab::StochasticPolicy& pi,
                              const tab::TabularRmdp& m) {
  const auto v = tab::soft_value_from_q(q, pi, m.alpha);
  tab::SoftQTable out{Matrix(m.n_states, m.n_actions)};
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      const drsac::kl::DiscreteDistribution d(v.v, m.next(s, a));
      out.q(s, a) = m.reward(s, a) + m.gamma * drsac::kl::solve_primal_bruteforce(d, m.delta);
    }
  }
  return out;
}

// Non-robust soft policy iteration, written out independently.
tab::StochasticPolicy nonrobust_soft_policy_iteration(const tab::TabularRmdp& m) {
  tab::StochasticPolicy pi = tab::StochasticPolicy::uniform(m.n_states, m.n_actions);
  tab::SoftQTable q{Matrix::Zero(m.n_states, m.n_actions)};
  for (int round = 0; round < 200; ++round) {
    for (int k = 0; k < 5000; ++k) q = tab::nonrobust_soft_bellman(q, pi, m);
    for (int s = 0; s < m.n_states; ++s) {
      double total = 0.0;
      for (int a = 0; a < m.n_actions; ++a) total += std::exp(q.q(s, a) / m.alpha);
      for (int a = 0; a < m.n_actions; ++a) pi.pi(s, a) = std::exp(q.q(s, a) / m.alpha) / total;
    }
  }
  return pi;
}

}  // namespace

TEST_CASE("policy entropy") {
  auto uniform4 = tab::StochasticPolicy::uniform(1, 4);
  CHECK(tab::policy_entropy(uniform4, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  tab::StochasticPolicy det{Matrix(1, 3)};
  det.pi << 1.0, 0.0, 0.0;
  CHECK(tab::policy_entropy(det, 0) == 0.0);
  tab::StochasticPolicy two{Matrix(1, 2)};
  two.pi << 0.25, 0.75;
  const long double expected = -0.25L * std::log(0.25L) - 0.75L * std::log(0.75L);
  CHECK(std::abs(tab::policy_entropy(two, 0) - static_cast<double>(expected)) < 1e-15);
}

TEST_CASE("soft value from q") {
  tab::SoftQTable q{Matrix(2, 2)};
  q.q << 1.0, 3.0, -2.0, 5.0;
  tab::StochasticPolicy pi{Matrix(2, 2)};
  pi.pi << 0.25, 0.75, 1.0, 0.0;
  const auto v0 = tab::soft_value_from_q(q, pi, 0.0);
  CHECK(v0.v[0] == doctest::Approx(2.5));
  CHECK(v0.v[1] == -2.0);
  const auto v1 = tab::soft_value_from_q(q, pi, 0.7);
  CHECK(v1.v[1] == -2.0);

  tab::SoftQTable c{Matrix::Constant(1, 2, 4.0)};
  const auto vu = tab::soft_value_from_q(c, tab::StochasticPolicy::uniform(1, 2), 0.3);
  CHECK(vu.v[0] == doctest::Approx(4.0 + 0.3 * std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("robust bellman backup") {
  inst::Rng rng(1);
  SUBCASE("zero radius equals the non-robust backup") {
    auto m = inst::random_rmdp(rng, {4, 3, 0.9, 0.0, 0.2});
    const auto q = inst::random_q(rng, m);
    const auto pi = inst::random_policy(rng, 4, 3);
    CHECK(tab::sup_norm_distance(tab::dr_soft_bellman(q, pi, m),
                                 tab::nonrobust_soft_bellman(q, pi, m)) <= 1e-12);
  }
  SUBCASE("gamma zero returns the reward") {
    auto m = inst::random_rmdp(rng, {3, 2, 0.0, 0.5, 0.2});
    const auto q = inst::random_q(rng, m);
    const auto pi = inst::random_policy(rng, 3, 2);
    CHECK(tab::dr_soft_bellman(q, pi, m).q == m.reward);
    CHECK(tab::nonrobust_soft_bellman(q, pi, m).q == m.reward);
  }
  SUBCASE("2x2 robust backup is dominated and matches the primal oracle") {
    for (int trial = 0; trial < 20; ++trial) {
      auto m = inst::random_rmdp(rng, {2, 2, 0.9, 0.2, 0.1});
      const auto q = inst::random_q(rng, m);
      const auto pi = inst::random_policy(rng, 2, 2);
      const auto robust = tab::dr_soft_bellman(q, pi, m);
      auto nominal_m = m;
      nominal_m.delta = 0.0;
      const auto nominal = tab::dr_soft_bellman(q, pi, nominal_m);
      CHECK((robust.q.array() <= nominal.q.array() + 1e-12).all());
      CHECK(tab::sup_norm_distance(robust, primal_backup(q, pi, m)) <= 1e-5);
    }
  }
}

TEST_CASE("contraction of both operators") {
  inst::Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = inst::random_rmdp(rng, {4, 3, 0.95, 0.05 * (trial % 10), 0.3, 1.0, 0.2});
    const auto pi = inst::random_policy(rng, 4, 3);
    const auto q1 = inst::random_q(rng, m);
    const auto q2 = inst::random_q(rng, m);
    const double before = tab::sup_norm_distance(q1, q2);
    CHECK(tab::sup_norm_distance(tab::dr_soft_bellman(q1, pi, m), tab::dr_soft_bellman(q2, pi, m)) <=
          m.gamma * before + 1e-9);
    CHECK(tab::sup_norm_distance(tab::nonrobust_soft_bellman(q1, pi, m),
                                 tab::nonrobust_soft_bellman(q2, pi, m)) <= m.gamma * before + 1e-9);
  }
}

TEST_CASE("policy evaluation") {
  SUBCASE("self loop") {
    const auto m = single_state(0.7, 0.9, 0.3, 0.0);
    const auto q = tab::dr_soft_policy_evaluation(tab::StochasticPolicy::uniform(1, 1), m);
    CHECK(q.q(0, 0) == doctest::Approx(7.0).epsilon(1e-8));
  }
  SUBCASE("gamma zero") {
    inst::Rng rng(3);
    const auto m = inst::random_rmdp(rng, {3, 2, 0.0, 0.3, 0.1});
    const auto q = tab::dr_soft_policy_evaluation(inst::random_policy(rng, 3, 2), m);
    CHECK(q.q == m.reward);
  }
  SUBCASE("fixed point residual and primal recomputation") {
    inst::Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
      const auto m = inst::random_rmdp(rng, {4, 3, 0.9, 0.3, 0.2});
      const auto pi = inst::random_policy(rng, 4, 3);
      const auto q = tab::dr_soft_policy_evaluation(pi, m, {1e-9});
      CHECK(tab::sup_norm_distance(q, tab::dr_soft_bellman(q, pi, m)) < 1e-9);
      CHECK(tab::sup_norm_distance(q, primal_backup(q, pi, m)) < 1e-5);
    }
  }
  SUBCASE("robust value is dominated by the nominal value") {
    inst::Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      auto m = inst::random_rmdp(rng, {3, 2, 0.8, 0.4, 0.2});
      const auto pi = inst::random_policy(rng, 3, 2);
      const auto robust = tab::dr_soft_policy_evaluation(pi, m);
      m.delta = 0.0;
      const auto nominal = tab::dr_soft_policy_evaluation(pi, m);
      CHECK((robust.q.array() <= nominal.q.array() + 1e-8).all());
    }
  }
  SUBCASE("iteration cap is reported") {
    const auto m = single_state(1.0, 0.99, 0.1, 0.0);
    tab::EvaluationOptions opts;
    opts.max_iterations = 3;
    CHECK_THROWS_AS(tab::dr_soft_policy_evaluation(tab::StochasticPolicy::uniform(1, 1), m, opts),
                    drsac::ConvergenceError);
  }
}

TEST_CASE("policy improvement") {
  tab::TabularRmdp m = single_state(0.0, 0.5, 0.1, 0.5);
  m.n_actions = 2;
  m.reward = Matrix::Zero(1, 2);
  m.transitions = {{1.0}, {1.0}};
  tab::SoftQTable flat{Matrix::Constant(1, 2, 3.0)};
  const auto u = tab::dr_soft_policy_improvement(flat, m);
  CHECK(u.pi(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

  tab::SoftQTable q{Matrix(1, 2)};
  q.q << 0.0, 0.5 * std::log(2.0);
  const auto p = tab::dr_soft_policy_improvement(q, m);
  CHECK(p.pi(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(p.pi(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));

  m.alpha = 0.0;
  CHECK_THROWS(tab::dr_soft_policy_improvement(q, m));
}

TEST_CASE("improvement is monotone after re-evaluation") {
  inst::Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = inst::random_rmdp(rng, {5, 3, 0.9, 0.1 + 0.1 * (trial % 5), 0.2});
    auto pi = inst::random_policy(rng, 5, 3);
    auto q = tab::dr_soft_policy_evaluation(pi, m, {1e-11});
    for (int round = 0; round < 5; ++round) {
      pi = tab::dr_soft_policy_improvement(q, m);
      const auto next = tab::dr_soft_policy_evaluation(pi, m, {1e-11});
      CHECK((next.q - q.q).minCoeff() >= -1e-8);
      q = next;
    }
  }
}

TEST_CASE("softmax attains the projection objective") {
  inst::Rng rng(7);
  const auto m = inst::random_rmdp(rng, {2, 3, 0.9, 0.2, 0.3});
  const auto q = inst::random_q(rng, m);
  const auto pi = tab::dr_soft_policy_improvement(q, m);
  // KL(row || exp(Q/alpha)/Z) up to the constant log Z:
  //   sum_a row_a (log row_a - Q_a / alpha).
  auto objective = [&](int s, const double* row) {
    double j = 0.0;
    for (int a = 0; a < 3; ++a) {
      if (row[a] > 0.0) j += row[a] * (std::log(row[a]) - q.q(s, a) / m.alpha);
    }
    return j;
  };
  for (int s = 0; s < 2; ++s) {
    const double best[3] = {pi.pi(s, 0), pi.pi(s, 1), pi.pi(s, 2)};
    const double attained = objective(s, best);
    bool ok = true;
    for (int k = 0; k < 1'000'000 && ok; ++k) {
      const auto row = inst::random_simplex(rng, 3, k % 4 == 0 ? 0.5 : 0.0);
      ok = objective(s, row.data()) >= attained - 1e-12;
    }
    CHECK(ok);
  }
}

TEST_CASE("policy iteration") {
  SUBCASE("single state converges to the softmax of immediate rewards") {
    tab::TabularRmdp m = single_state(0.0, 0.8, 0.3, 0.4);
    m.n_actions = 3;
    m.reward = Matrix(1, 3);
    m.reward << 0.2, 0.9, 0.5;
    m.transitions = {{1.0}, {1.0}, {1.0}};
    const auto result = tab::dr_soft_policy_iteration(m);
    CHECK(result.iterations <= 2);
    double z = 0.0;
    for (int a = 0; a < 3; ++a) z += std::exp(m.reward(0, a) / m.alpha);
    for (int a = 0; a < 3; ++a) {
      CHECK(result.policy.pi(0, a) == doctest::Approx(std::exp(m.reward(0, a) / m.alpha) / z));
    }
  }
  SUBCASE("zero radius matches non-robust soft policy iteration") {
    inst::Rng rng(8);
    const auto m = inst::random_rmdp(rng, {3, 2, 0.7, 0.0, 0.3});
    const auto result = tab::dr_soft_policy_iteration(m);
    const auto reference = nonrobust_soft_policy_iteration(m);
    CHECK((result.policy.pi - reference.pi).cwiseAbs().maxCoeff() <= 1e-7);
  }
  SUBCASE("monotone and bounded sequences") {
    inst::Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
      const auto m = inst::random_rmdp(rng, {4, 3, 0.9, 0.3, 0.2, 1.0, 0.3});
      const auto result = tab::dr_soft_policy_iteration(m);
      CHECK(result.monotone);
      CHECK(result.bounded);
      CHECK(result.iterations >= 1);
    }
  }
}

TEST_CASE("policy iteration beats a 0.01 policy grid on a 2x2 RMDP") {
  inst::Rng rng(10);
  const auto m = inst::random_rmdp(rng, {2, 2, 0.6, 0.3, 0.2});
  const auto result = tab::dr_soft_policy_iteration(m);
  const auto v_star = tab::soft_value_from_q(result.q, result.policy, m.alpha);

  std::vector<double> best(2, -1e300);
  tab::EvaluationOptions opts{1e-10};
  for (int i = 0; i <= 100; ++i) {
    opts.initial.reset();
    for (int j = 0; j <= 100; ++j) {
      tab::StochasticPolicy pi{Matrix(2, 2)};
      pi.pi << i / 100.0, 1.0 - i / 100.0, j / 100.0, 1.0 - j / 100.0;
      const auto q = tab::dr_soft_policy_evaluation(pi, m, opts);
      opts.initial = q;
      const auto v = tab::soft_value_from_q(q, pi, m.alpha);
      for (int s = 0; s < 2; ++s) best[s] = std::max(best[s], v.v[s]);
    }
  }
  for (int s = 0; s < 2; ++s) {
    CHECK(v_star.v[s] >= best[s] - 1e-3);
    // The grid cannot beat the optimum by more than the evaluation tolerance.
    CHECK(best[s] <= v_star.v[s] + 1e-6);
  }
}

TEST_CASE("regret bound") {
  inst::Rng rng(12);
  SUBCASE("identical kernels") {
    const auto m = inst::random_rmdp(rng, {3, 2, 0.8, 0.3, 0.2});
    const auto r = tab::regret_bound_check(m, m, 0.0);
    CHECK(r.eps2 == 0.0);
    CHECK(r.regret == 0.0);
    CHECK(r.q_gap == 0.0);
    CHECK(r.regret_holds);
    CHECK(r.q_gap_holds);
  }
  SUBCASE("tiny perturbation") {
    const auto m = inst::random_rmdp(rng, {3, 2, 0.8, 0.3, 0.2});
    const auto est = inst::perturb_transitions(rng, m, 0.5 * 1e-6);
    const auto r = tab::regret_bound_check(m, est, 1e-3);
    CHECK(r.q_gap_holds);
    CHECK(r.regret_holds);
    CHECK(r.q_slack() > 0.0);
    CHECK(r.regret_slack() > 0.0);
  }
  SUBCASE("perturbation at the KL budget") {
    const auto m = inst::random_rmdp(rng, {3, 2, 0.8, 0.3, 0.2});
    const auto est = inst::perturb_transitions(rng, m, 1e-4);
    const auto r = tab::regret_bound_check(m, est, 1e-2);
    CHECK(r.kl_max <= 1e-4 * (1 + 1e-12));
    CHECK(r.q_gap_holds);
    CHECK(r.regret_holds);
  }
  SUBCASE("support mismatch and budget violations are rejected") {
    auto m = inst::random_rmdp(rng, {3, 2, 0.8, 0.3, 0.2});
    auto est = m;
    est.transitions[0] = {1.0, 0.0, 0.0};
    m.transitions[0] = {0.5, 0.5, 0.0};
    CHECK_THROWS(tab::regret_bound_check(m, est, 10.0));
    const auto far = inst::perturb_transitions(rng, m, 0.1);
    CHECK_THROWS(tab::regret_bound_check(m, far, 1e-3));
  }
}
