#include "drsac/instances.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drsac::instances {

std::vector<double> random_simplex(Rng& rng, std::size_t size, double zero_prob) {
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, size - 1);
  std::vector<double> w(size);
  for (double& x : w) x = expo(rng);
  if (zero_prob > 0.0) {
    const std::size_t keep = pick(rng);
    for (std::size_t i = 0; i < size; ++i) {
      if (i != keep && unit(rng) < zero_prob) w[i] = 0.0;
    }
  }
  double total = 0.0;
  for (double x : w) total += x;
  for (double& x : w) x /= total;
  return w;
}

kl::DiscreteDistribution random_distribution(Rng& rng, std::size_t size, double lo, double hi,
                                             double zero_prob) {
  std::uniform_real_distribution<double> value(lo, hi);
  std::vector<double> v(size);
  for (double& x : v) x = value(rng);
  return {std::move(v), random_simplex(rng, size, zero_prob)};
}

tabular::TabularRmdp random_rmdp(Rng& rng, const RmdpShape& shape) {
  tabular::TabularRmdp m;
  m.n_states = shape.n_states;
  m.n_actions = shape.n_actions;
  m.gamma = shape.gamma;
  m.delta = shape.delta;
  m.alpha = shape.alpha;
  m.r_max = shape.r_max;
  std::uniform_real_distribution<double> reward(0.0, shape.r_max);
  m.reward = Matrix(shape.n_states, shape.n_actions);
  for (int s = 0; s < shape.n_states; ++s) {
    for (int a = 0; a < shape.n_actions; ++a) m.reward(s, a) = reward(rng);
  }
  m.transitions.clear();
  for (int i = 0; i < shape.n_states * shape.n_actions; ++i) {
    m.transitions.push_back(
        random_simplex(rng, static_cast<std::size_t>(shape.n_states), shape.zero_prob));
  }
  m.validate();
  return m;
}

tabular::SoftQTable random_q(Rng& rng, const tabular::TabularRmdp& rmdp) {
  std::uniform_real_distribution<double> value(0.0, rmdp.value_bound());
  tabular::SoftQTable q{Matrix(rmdp.n_states, rmdp.n_actions)};
  for (int s = 0; s < rmdp.n_states; ++s) {
    for (int a = 0; a < rmdp.n_actions; ++a) q.q(s, a) = value(rng);
  }
  return q;
}

tabular::StochasticPolicy random_policy(Rng& rng, int n_states, int n_actions) {
  tabular::StochasticPolicy pi{Matrix(n_states, n_actions)};
  for (int s = 0; s < n_states; ++s) {
    const auto row = random_simplex(rng, static_cast<std::size_t>(n_actions));
    for (int a = 0; a < n_actions; ++a) pi.pi(s, a) = row[static_cast<std::size_t>(a)];
  }
  return pi;
}

tabular::TabularRmdp perturb_transitions(Rng& rng, const tabular::TabularRmdp& rmdp,
                                         double kl_target) {
  if (!(kl_target >= 0.0)) throw std::invalid_argument("perturb_transitions: kl_target < 0");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> noise;
  for (const auto& row : rmdp.transitions) {
    std::vector<double> n(row.size());
    for (double& x : n) x = normal(rng);
    noise.push_back(std::move(n));
  }

  auto build = [&](double scale) {
    tabular::TabularRmdp out = rmdp;
    for (std::size_t i = 0; i < out.transitions.size(); ++i) {
      auto& row = out.transitions[i];
      double total = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (row[j] > 0.0) row[j] *= std::exp(scale * noise[i][j]);
        total += row[j];
      }
      for (double& p : row) p /= total;
    }
    return out;
  };
  auto max_kl = [&](const tabular::TabularRmdp& est) {
    double worst = 0.0;
    for (std::size_t i = 0; i < rmdp.transitions.size(); ++i) {
      worst = std::max(worst, kl::kl_divergence(rmdp.transitions[i], est.transitions[i]));
    }
    return worst;
  };

  if (kl_target == 0.0) return rmdp;
  double lo = 0.0;
  double hi = 1.0;
  while (max_kl(build(hi)) < kl_target && hi < 1e6) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (max_kl(build(mid)) <= kl_target) lo = mid;
    else hi = mid;
  }
  return build(lo);
}

}  // namespace drsac::instances
