#pragma once

// Random problem instances shared by the verification suite, the tests and
// the Python bindings.

#include <vector>

#include "drsac/kl_dual.hpp"
#include "drsac/rng.hpp"
#include "drsac/tabular.hpp"

namespace drsac::instances {

using drsac::Rng;

/// Random probability vector of the given size. With zero_prob > 0 some
/// entries are set to zero (at least one entry is always positive).
std::vector<double> random_simplex(Rng& rng, std::size_t size, double zero_prob = 0.0);

/// Support values uniform in [lo, hi] over a random simplex.
kl::DiscreteDistribution random_distribution(Rng& rng, std::size_t size, double lo = 0.0,
                                             double hi = 10.0, double zero_prob = 0.0);

struct RmdpShape {
  int n_states = 3;
  int n_actions = 2;
  double gamma = 0.9;
  double delta = 0.1;
  double alpha = 0.1;
  double r_max = 1.0;
  double zero_prob = 0.0;  // sparsity of the nominal transition rows
};

tabular::TabularRmdp random_rmdp(Rng& rng, const RmdpShape& shape);

/// Random table with entries uniform in [0, rmdp.value_bound()].
tabular::SoftQTable random_q(Rng& rng, const tabular::TabularRmdp& rmdp);

/// Random row-stochastic policy with full support.
tabular::StochasticPolicy random_policy(Rng& rng, int n_states, int n_actions);

/// Copy of `rmdp` whose transition rows are multiplicatively perturbed on
/// their supports so that max_{s,a} KL(p || p_hat) = kl_target (found by
/// bisection on the perturbation scale).
tabular::TabularRmdp perturb_transitions(Rng& rng, const tabular::TabularRmdp& rmdp,
                                         double kl_target);

}  // namespace drsac::instances
