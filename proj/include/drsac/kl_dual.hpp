#pragma once

// Worst-case expectations over a KL ball around a discrete nominal
// distribution.
//
//   inf_{q : KL(q||p) <= delta} E_q[V]
//     = sup_{beta >= 0} { -beta * log E_p[exp(-V / beta)] - beta * delta }
//
// solve_dual() is the production path (1-D concave search over beta).
// solve_primal_bruteforce() works directly on the primal problem and is
// meant for verification at small support sizes.

#include <cstddef>
#include <span>
#include <vector>

namespace drsac::kl {

/// A probability vector over a finite set of atoms, together with the value
/// of the integrand at each atom.
class DiscreteDistribution {
 public:
  /// Throws std::invalid_argument unless sizes match, size >= 1, probs are
  /// non-negative and sum to one within 1e-12.
  DiscreteDistribution(std::vector<double> support_values, std::vector<double> probs);

  const std::vector<double>& support_values() const noexcept { return values_; }
  const std::vector<double>& probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return values_.size(); }

  double expectation() const noexcept;
  /// Smallest support value among atoms with positive mass.
  double essential_infimum() const noexcept;
  /// Nominal mass sitting on the essential infimum.
  double infimum_mass() const noexcept;

 private:
  std::vector<double> values_;
  std::vector<double> probs_;
};

struct DualSolution {
  double beta_star = 0.0;   // +inf when delta == 0
  double value = 0.0;       // worst-case expectation
  bool at_boundary = false; // optimum is the beta -> 0 limit (essinf)
};

struct WorstCaseDistribution {
  std::vector<double> probs;
  // True when beta* = 0 and the tilted form is unavailable; probs is then
  // the nominal mass restricted to the essential-infimum atoms.
  bool concentrated = false;
};

inline constexpr std::size_t kPrimalOracleMaxSupport = 16;

/// -beta log E_p[exp(-V/beta)] - beta delta, stabilized by log-sum-exp.
/// Throws std::invalid_argument when beta <= 0 or delta <= 0.
double dual_objective(const DiscreteDistribution& dist, double beta, double delta);

/// Maximizes dual_objective over beta and compares against the beta -> 0
/// limit. delta == 0 returns the nominal expectation with beta_star = inf.
DualSolution solve_dual(const DiscreteDistribution& dist, double delta);

/// Direct minimization of E_q[V] over the KL ball by exponential tilting.
/// Support size is limited to kPrimalOracleMaxSupport.
double solve_primal_bruteforce(const DiscreteDistribution& dist, double delta);

/// The distribution attaining the infimum for a solution of solve_dual().
WorstCaseDistribution worst_case_distribution(const DiscreteDistribution& dist,
                                              const DualSolution& solution);

/// KL(q || p) with 0 log 0 := 0. Returns +inf when q is not absolutely
/// continuous w.r.t. p.
double kl_divergence(std::span<const double> q, std::span<const double> p);

namespace detail {

// Unchecked variants used in hot loops where the caller has already
// validated the distribution.
double log_expect_exp_neg(std::span<const double> values, std::span<const double> probs,
                          double beta, double shift);
double dual_objective_unchecked(std::span<const double> values,
                                std::span<const double> probs, double beta, double delta);
DualSolution solve_dual_unchecked(std::span<const double> values,
                                  std::span<const double> probs, double delta);

// Mutation hook for the verification suite: flips the sign of the
// -beta * delta penalty in the dual objective, process-wide.
void set_sign_flip_fault(bool on);
bool sign_flip_fault();

}  // namespace detail

}  // namespace drsac::kl
