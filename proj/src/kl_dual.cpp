#include "drsac/kl_dual.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace drsac::kl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSumTolerance = 1e-12;
constexpr double kBetaFloorFraction = 1e-8;
constexpr double kGoldenWidthFraction = 1e-12;
constexpr int kGoldenMaxIterations = 200;

std::atomic<bool> g_sign_flip{false};

double penalty(double beta, double delta) {
  return g_sign_flip.load(std::memory_order_relaxed) ? beta * delta : -beta * delta;
}

struct PositiveSupport {
  double min = kInf;
  double max = -kInf;
};

PositiveSupport positive_support(std::span<const double> values, std::span<const double> probs) {
  PositiveSupport s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (probs[i] > 0.0) {
      s.min = std::min(s.min, values[i]);
      s.max = std::max(s.max, values[i]);
    }
  }
  return s;
}

double expectation(std::span<const double> values, std::span<const double> probs) {
  double e = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (probs[i] > 0.0) e += probs[i] * values[i];
  }
  return e;
}

void require_delta(double delta) {
  if (!(delta >= 0.0) || !std::isfinite(delta)) {
    throw std::invalid_argument("delta must be a finite non-negative number");
  }
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(std::vector<double> support_values,
                                           std::vector<double> probs)
    : values_(std::move(support_values)), probs_(std::move(probs)) {
  if (values_.empty()) throw std::invalid_argument("distribution needs at least one atom");
  if (values_.size() != probs_.size()) {
    throw std::invalid_argument("support_values and probs differ in length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (!(probs_[i] >= 0.0) || !std::isfinite(probs_[i])) {
      throw std::invalid_argument("probability " + std::to_string(i) + " is negative or non-finite");
    }
    if (!std::isfinite(values_[i])) {
      throw std::invalid_argument("support value " + std::to_string(i) + " is non-finite");
    }
    total += probs_[i];
  }
  if (std::abs(total - 1.0) > kSumTolerance) {
    throw std::invalid_argument("probabilities sum to " + std::to_string(total) + ", not 1");
  }
}

double DiscreteDistribution::expectation() const noexcept {
  return kl::expectation(values_, probs_);
}

double DiscreteDistribution::essential_infimum() const noexcept {
  return positive_support(values_, probs_).min;
}

double DiscreteDistribution::infimum_mass() const noexcept {
  const double inf = essential_infimum();
  double mass = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (probs_[i] > 0.0 && values_[i] == inf) mass += probs_[i];
  }
  return mass;
}

double kl_divergence(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] <= 0.0) continue;
    if (p[i] <= 0.0) return kInf;
    kl += q[i] * std::log(q[i] / p[i]);
  }
  return std::max(kl, 0.0);
}

namespace detail {

double log_expect_exp_neg(std::span<const double> values, std::span<const double> probs,
                          double beta, double shift) {
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (probs[i] > 0.0) sum += probs[i] * std::exp(-(values[i] - shift) / beta);
  }
  return std::log(sum);
}

double dual_objective_unchecked(std::span<const double> values, std::span<const double> probs,
                                double beta, double delta) {
  const double shift = positive_support(values, probs).min;
  return shift - beta * log_expect_exp_neg(values, probs, beta, shift) + penalty(beta, delta);
}

DualSolution solve_dual_unchecked(std::span<const double> values, std::span<const double> probs,
                                  double delta) {
  if (delta == 0.0) return {kInf, expectation(values, probs), false};

  const PositiveSupport support = positive_support(values, probs);
  const double range = support.max - support.min;
  if (range == 0.0) return {0.0, support.min, true};

  // Work on V - essinf(V) >= 0: the objective shifts by a constant, the
  // beta -> 0 limit becomes 0 and beta* is bounded by range / delta.
  auto objective = [&](double beta) {
    return -beta * log_expect_exp_neg(values, probs, beta, support.min) + penalty(beta, delta);
  };

  double lo = kBetaFloorFraction * range;
  double hi = range / delta;
  double best_beta = lo;
  double best_value = objective(lo);

  if (hi > lo) {
    const double width_tol = kGoldenWidthFraction * range / delta;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - inv_phi * (hi - lo);
    double d = lo + inv_phi * (hi - lo);
    double fc = objective(c);
    double fd = objective(d);
    for (int it = 0; it < kGoldenMaxIterations && (hi - lo) > width_tol; ++it) {
      if (fc >= fd) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - inv_phi * (hi - lo);
        fc = objective(c);
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + inv_phi * (hi - lo);
        fd = objective(d);
      }
    }
    for (auto [beta, value] : {std::pair{c, fc}, std::pair{d, fd}}) {
      if (value > best_value) {
        best_value = value;
        best_beta = beta;
      }
    }
  }

  // The beta -> 0 limit of the shifted objective is 0 (the essential infimum).
  if (!(best_value > 0.0)) return {0.0, support.min, true};

  // The objective is flat at its maximum, so golden section pins beta* only
  // to about sqrt(machine epsilon). Polish it on the stationarity condition
  // f'(beta) = KL(q_beta || p) - delta = 0, which is decreasing in beta.
  auto stationarity = [&](double beta) {
    const double log_z = log_expect_exp_neg(values, probs, beta, support.min);
    double mean = 0.0;
    double second = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      const double u = values[i] - support.min;
      const double q = probs[i] * std::exp(-u / beta - log_z);
      mean += q * u;
      second += q * u * u;
    }
    const double var = std::max(second - mean * mean, 0.0);
    return std::pair{-mean / beta - log_z - delta, -var / (beta * beta * beta)};
  };
  double a = kBetaFloorFraction * range;
  double b = range / delta;
  double beta = best_beta;
  for (int it = 0; it < 100; ++it) {
    const auto [g, dg] = stationarity(beta);
    if (g > 0.0) a = beta;
    else b = beta;
    double next = dg < 0.0 ? beta - g / dg : 0.5 * (a + b);
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    const bool done = std::abs(next - beta) <= 4e-16 * beta;
    beta = next;
    if (done || b - a <= 4e-16 * b) break;
  }
  const double polished = objective(beta);
  if (polished >= best_value - 1e-15 * (1.0 + best_value)) {
    return {beta, support.min + std::max(polished, best_value), false};
  }
  return {best_beta, support.min + best_value, false};
}

void set_sign_flip_fault(bool on) { g_sign_flip.store(on); }
bool sign_flip_fault() { return g_sign_flip.load(); }

}  // namespace detail

double dual_objective(const DiscreteDistribution& dist, double beta, double delta) {
  if (!(beta > 0.0)) throw std::invalid_argument("dual_objective: beta must be positive");
  if (!(delta > 0.0)) throw std::invalid_argument("dual_objective: delta must be positive");
  return detail::dual_objective_unchecked(dist.support_values(), dist.probs(), beta, delta);
}

DualSolution solve_dual(const DiscreteDistribution& dist, double delta) {
  require_delta(delta);
  return detail::solve_dual_unchecked(dist.support_values(), dist.probs(), delta);
}

double solve_primal_bruteforce(const DiscreteDistribution& dist, double delta) {
  require_delta(delta);
  if (dist.size() > kPrimalOracleMaxSupport) {
    throw std::invalid_argument("primal oracle supports at most " +
                                std::to_string(kPrimalOracleMaxSupport) + " atoms");
  }
  const auto& v = dist.support_values();
  const auto& p = dist.probs();
  const double nominal = dist.expectation();
  if (delta == 0.0) return nominal;

  const double vmin = dist.essential_infimum();
  double vmax = -kInf;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (p[i] > 0.0) vmax = std::max(vmax, v[i]);
  }
  const double range = vmax - vmin;
  if (range == 0.0) return vmin;

  // Face of the simplex on the minimizing atoms: KL = -log(kappa).
  const double kappa = dist.infimum_mass();
  if (-std::log(kappa) <= delta) return vmin;

  double best = nominal;
  // Simplex vertices inside the ball.
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (p[i] > 0.0 && -std::log(p[i]) <= delta) best = std::min(best, v[i]);
  }

  // Exponential tilting q_lambda ∝ p exp(-V / lambda). KL(q_lambda || p)
  // decreases in lambda while E_q[V] increases, so the optimum sits where
  // the constraint becomes active.
  struct Tilt {
    double kl;
    double mean;
  };
  auto tilt = [&](double lambda) {
    double log_norm = 0.0;
    {
      double s = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (p[i] > 0.0) s += p[i] * std::exp(-(v[i] - vmin) / lambda);
      }
      log_norm = std::log(s);
    }
    double kl = 0.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (p[i] <= 0.0) continue;
      const double log_ratio = -(v[i] - vmin) / lambda - log_norm;  // log(q_i / p_i)
      const double qi = p[i] * std::exp(log_ratio);
      if (qi > 0.0) kl += qi * log_ratio;
      mean += qi * v[i];
    }
    return Tilt{std::max(kl, 0.0), mean};
  };

  double feasible_lambda = kInf;
  double infeasible_lambda = 0.0;
  for (int k = -1000; k <= 1000; ++k) {
    const double lambda = range * std::pow(10.0, k / 100.0);
    const Tilt t = tilt(lambda);
    if (t.kl <= delta) {
      best = std::min(best, t.mean);
      feasible_lambda = std::min(feasible_lambda, lambda);
    } else if (lambda < feasible_lambda) {
      infeasible_lambda = std::max(infeasible_lambda, lambda);
    }
  }

  if (std::isfinite(feasible_lambda) && infeasible_lambda > 0.0) {
    double lo = std::log(infeasible_lambda);
    double hi = std::log(feasible_lambda);
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      const Tilt t = tilt(std::exp(mid));
      if (t.kl <= delta) {
        hi = mid;
        best = std::min(best, t.mean);
      } else {
        lo = mid;
      }
    }
  }
  return best;
}

WorstCaseDistribution worst_case_distribution(const DiscreteDistribution& dist,
                                              const DualSolution& solution) {
  const auto& v = dist.support_values();
  const auto& p = dist.probs();
  WorstCaseDistribution out;
  out.probs.assign(v.size(), 0.0);

  if (std::isinf(solution.beta_star)) {
    out.probs = p;
    return out;
  }
  const double vmin = dist.essential_infimum();
  if (solution.at_boundary || solution.beta_star <= 0.0) {
    const double kappa = dist.infimum_mass();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (p[i] > 0.0 && v[i] == vmin) out.probs[i] = p[i] / kappa;
    }
    out.concentrated = true;
    return out;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (p[i] > 0.0) {
      out.probs[i] = p[i] * std::exp(-(v[i] - vmin) / solution.beta_star);
      total += out.probs[i];
    }
  }
  for (double& q : out.probs) q /= total;
  return out;
}

}  // namespace drsac::kl
