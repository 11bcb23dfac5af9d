#include "drsac/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>

#include "drsac/agent/agent.hpp"
#include "drsac/errors.hpp"
#include "drsac/functional.hpp"
#include "drsac/generative/vae.hpp"
#include "drsac/instances.hpp"
#include "drsac/kl_dual.hpp"
#include "drsac/nn/gradcheck.hpp"
#include "drsac/tabular.hpp"

namespace drsac::verify {

namespace {

namespace tab = tabular;
namespace fn = functional;
using Clock = std::chrono::steady_clock;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr const char* kSchema = "drsac.verification/1";

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

long scaled(long n, double scale) {
  return std::max(1L, std::lround(static_cast<double>(n) * scale));
}

// Restores the fault flag on scope exit so a throwing property cannot leak it.
class FaultGuard {
 public:
  explicit FaultGuard(bool on) : previous_(kl::detail::sign_flip_fault()) {
    kl::detail::set_sign_flip_fault(on);
  }
  ~FaultGuard() { kl::detail::set_sign_flip_fault(previous_); }
  FaultGuard(const FaultGuard&) = delete;
  FaultGuard& operator=(const FaultGuard&) = delete;

 private:
  bool previous_;
};

struct Context {
  Rng rng;
  double scale;
};

// Tracks the worst error and how many instances exceeded the tolerance.
struct Worst {
  double value = 0.0;
  long violations = 0;
  void add(double err, double tol) {
    if (!(err <= tol)) ++violations;
    if (std::isnan(err)) err = kInf;
    value = std::max(value, err);
  }
};

std::string violations_text(long violations, long checked) {
  std::ostringstream s;
  s << violations << " of " << checked << " checks out of tolerance";
  return s.str();
}

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

tab::TabularRmdp random_small_rmdp(Rng& rng, int max_states, int max_actions, double delta) {
  instances::RmdpShape shape;
  shape.n_states = uniform_int(rng, 2, max_states);
  shape.n_actions = uniform_int(rng, 2, max_actions);
  shape.gamma = uniform_real(rng, 0.5, 0.95);
  shape.delta = delta;
  shape.alpha = uniform_real(rng, 0.05, 0.5);
  shape.zero_prob = uniform_int(rng, 0, 2) == 0 ? 0.3 : 0.0;
  return instances::random_rmdp(rng, shape);
}

tab::EvaluationOptions evaluation(double tol, std::optional<tab::SoftQTable> initial = {}) {
  tab::EvaluationOptions o;
  o.tol = tol;
  o.initial = std::move(initial);
  return o;
}

// ---- 1. dual vs primal ----------------------------------------------------

PropertyResult dual_primal(Context& ctx) {
  PropertyResult r;
  r.tolerance = 1e-5;
  const double time_limit = 30.0;
  const auto t0 = Clock::now();
  Worst w;
  const long n = scaled(200, ctx.scale);
  for (long i = 0; i < n; ++i) {
    const auto size = static_cast<std::size_t>(uniform_int(ctx.rng, 1, 8));
    const auto d =
        instances::random_distribution(ctx.rng, size, 0.0, 10.0, i % 3 == 0 ? 0.3 : 0.0);
    for (double delta : {0.01, 0.1, 0.5, 1.0, 5.0}) {
      w.add(std::abs(kl::solve_dual(d, delta).value - kl::solve_primal_bruteforce(d, delta)),
            r.tolerance);
    }
  }
  r.instances = n * 5;
  r.measured = w.value;
  const double elapsed = seconds_since(t0);
  r.pass = w.violations == 0 && elapsed <= time_limit;
  r.detail = violations_text(w.violations, r.instances) + "; runtime limit 30 s";
  return r;
}

// ---- 2. beta* = 0 boundary --------------------------------------------------

// Distribution whose smallest atom carries mass kappa.
kl::DiscreteDistribution with_infimum_mass(Rng& rng, double kappa) {
  const auto size = static_cast<std::size_t>(uniform_int(rng, 2, 8));
  std::vector<double> values(size), probs = instances::random_simplex(rng, size - 1);
  const double vmin = uniform_real(rng, -5.0, 5.0);
  values[0] = vmin;
  for (std::size_t k = 1; k < size; ++k) values[k] = vmin + uniform_real(rng, 0.01, 10.0);
  for (double& p : probs) p *= 1.0 - kappa;
  probs.insert(probs.begin(), kappa);
  double total = 0.0;
  for (double p : probs) total += p;
  for (double& p : probs) p /= total;
  return {values, probs};
}

PropertyResult boundary(Context& ctx) {
  PropertyResult r;
  r.tolerance = 1e-9;
  Worst w;
  long missing_flag = 0, interior_failures = 0;
  const long n = scaled(100, ctx.scale);
  for (long i = 0; i < n; ++i) {
    const double kappa = uniform_real(ctx.rng, 0.02, 0.98);
    const auto d = with_infimum_mass(ctx.rng, kappa);
    // log kappa + delta >= 0
    const double delta = -std::log(d.infimum_mass()) + uniform_real(ctx.rng, 0.0, 2.0);
    const auto s = kl::solve_dual(d, delta);
    w.add(std::abs(s.value - d.essential_infimum()), r.tolerance);
    if (!s.at_boundary) ++missing_flag;
  }
  for (long i = 0; i < n; ++i) {
    const double kappa = uniform_real(ctx.rng, 0.02, 0.98);
    const auto d = with_infimum_mass(ctx.rng, kappa);
    // 0 < delta < -log kappa
    const double delta = -std::log(d.infimum_mass()) * uniform_real(ctx.rng, 0.05, 0.95);
    const auto s = kl::solve_dual(d, delta);
    if (!(s.beta_star > 0.0) || s.at_boundary || !std::isfinite(s.value)) ++interior_failures;
  }
  r.instances = 2 * n;
  r.measured = w.value;
  r.pass = w.violations == 0 && missing_flag == 0 && interior_failures == 0;
  std::ostringstream s;
  s << "boundary side: " << w.violations << " value errors, " << missing_flag
    << " missing at_boundary flags; interior side: " << interior_failures
    << " instances without beta* > 0";
  r.detail = s.str();
  return r;
}

// ---- 3. contraction ---------------------------------------------------------

PropertyResult contraction(Context& ctx) {
  PropertyResult r;
  r.tolerance = 1e-9;
  Worst w;
  const long n = scaled(100, ctx.scale);
  for (long i = 0; i < n; ++i) {
    const auto m = random_small_rmdp(ctx.rng, 6, 4, uniform_real(ctx.rng, 0.0, 2.0));
    const auto pi = instances::random_policy(ctx.rng, m.n_states, m.n_actions);
    const auto q1 = instances::random_q(ctx.rng, m);
    const auto q2 = instances::random_q(ctx.rng, m);
    const double lhs =
        tab::sup_norm_distance(tab::dr_soft_bellman(q1, pi, m), tab::dr_soft_bellman(q2, pi, m));
    w.add(std::max(0.0, lhs - m.gamma * tab::sup_norm_distance(q1, q2)), r.tolerance);
  }
  r.instances = n;
  r.measured = w.value;
  r.pass = w.violations == 0;
  r.detail = "measured: max excess of ||TQ1 - TQ2|| over gamma ||Q1 - Q2||; " +
             violations_text(w.violations, n);
  return r;
}

// ---- 4. policy-evaluation fixed point ---------------------------------------

PropertyResult fixed_point(Context& ctx) {
  PropertyResult r;
  r.tolerance = 1e-8;
  double worst = 0.0;
  long violations = 0;
  const long n = scaled(50, ctx.scale);
  for (long i = 0; i < n; ++i) {
    const auto m = random_small_rmdp(ctx.rng, 6, 4, uniform_real(ctx.rng, 0.0, 2.0));
    const auto pi = instances::random_policy(ctx.rng, m.n_states, m.n_actions);
    const auto q = tab::dr_soft_policy_evaluation(pi, m, evaluation(1e-10));
    const double residual = tab::sup_norm_distance(q, tab::dr_soft_bellman(q, pi, m));
    if (!(residual < r.tolerance)) ++violations;
    worst = std::max(worst, std::isnan(residual) ? kInf : residual);
  }
  r.instances = n;
  r.measured = worst;
  r.pass = violations == 0;
  r.detail = "strict bound ||Q - TQ|| < tolerance; " + violations_text(violations, n);
  return r;
}

// ---- 5. monotone improvement ------------------------------------------------

PropertyResult monotone_improvement(Context& ctx) {
  PropertyResult r;
  r.tolerance = 1e-8;
  Worst w;
  const long n = scaled(50, ctx.scale);
  const int rounds = 5;
  for (long i = 0; i < n; ++i) {
    const auto m = random_small_rmdp(ctx.rng, 6, 4, uniform_real(ctx.rng, 0.0, 2.0));
    auto pi = instances::random_policy(ctx.rng, m.n_states, m.n_actions);
    auto q = tab::dr_soft_policy_evaluation(pi, m, evaluation(1e-11));
    for (int k = 0; k < rounds; ++k) {
      pi = tab::dr_soft_policy_improvement(q, m);
      auto next = tab::dr_soft_policy_evaluation(pi, m, evaluation(1e-11, q));
      w.add(std::max(0.0, -(next.q - q.q).minCoeff()), r.tolerance);
      q = std::move(next);
    }
  }
  r.instances = n * rounds;
  r.measured = w.value;
  r.pass = w.violations == 0;
  r.detail = "measured: largest decrease of any Q entry across one round; " +
             violations_text(w.violations, r.instances);
  return r;
}

// ---- 6. policy iteration vs a policy grid -----------------------------------

PropertyResult policy_iteration_grid(Context& ctx) {
  PropertyResult r;
  r.tolerance = 1e-3;
  const double time_limit = 300.0;
  const auto t0 = Clock::now();
  Worst w;
  const long n = scaled(20, ctx.scale);
  const int grid = 100;
  for (long i = 0; i < n; ++i) {
    instances::RmdpShape shape{2, 2};
    shape.gamma = uniform_real(ctx.rng, 0.5, 0.9);
    shape.delta = uniform_real(ctx.rng, 0.05, 1.0);
    shape.alpha = uniform_real(ctx.rng, 0.05, 0.5);
    const auto m = instances::random_rmdp(ctx.rng, shape);
    const auto result = tab::dr_soft_policy_iteration(m);
    const auto v_star = tab::soft_value_from_q(result.q, result.policy, m.alpha);

    std::vector<double> best(2, -kInf);
    auto opts = evaluation(1e-10);
    for (int a = 0; a <= grid; ++a) {
      opts.initial.reset();
      for (int b = 0; b <= grid; ++b) {
        tab::StochasticPolicy pi{Matrix(2, 2)};
        pi.pi << a / double(grid), 1.0 - a / double(grid), b / double(grid), 1.0 - b / double(grid);
        const auto q = tab::dr_soft_policy_evaluation(pi, m, opts);
        opts.initial = q;
        const auto v = tab::soft_value_from_q(q, pi, m.alpha);
        for (int s = 0; s < 2; ++s) best[static_cast<std::size_t>(s)] =
            std::max(best[static_cast<std::size_t>(s)], v.v[static_cast<std::size_t>(s)]);
      }
    }
    for (std::size_t s = 0; s < 2; ++s) w.add(std::max(0.0, best[s] - v_star.v[s]), r.tolerance);
  }
  r.instances = n;
  r.measured = w.value;
  const double elapsed = seconds_since(t0);
  r.pass = w.violations == 0 && elapsed <= time_limit;
  r.detail = "measured: largest shortfall of the converged policy below the best 0.01-grid "
             "policy; runtime limit 300 s";
  return r;
}

// ---- 7. interchange ---------------------------------------------------------

// Batch of (s,a) rows of a tabular RMDP; every row carries all states as
// atoms weighted by the nominal transition row.
fn::TransitionBatch tabular_batch(Rng& rng, const tab::TabularRmdp& m, int rows) {
  fn::TransitionBatch b;
  b.m = m.n_states;
  b.states.resize(rows, 1);
  b.actions.resize(rows, 1);
  b.rewards.resize(rows, 1);
  b.atoms.resize(static_cast<Eigen::Index>(rows) * b.m, 1);
  b.atom_weights.resize(rows, b.m);
  for (int i = 0; i < rows; ++i) {
    const int s = uniform_int(rng, 0, m.n_states - 1), a = uniform_int(rng, 0, m.n_actions - 1);
    b.states(i, 0) = s;
    b.actions(i, 0) = a;
    b.rewards(i, 0) = m.reward(s, a);
    for (int j = 0; j < b.m; ++j) {
      b.atoms(i * b.m + j, 0) = j;
      b.atom_weights(i, j) = m.next(s, a)[static_cast<std::size_t>(j)];
    }
  }
  b.validate(m.r_max);
  return b;
}

fn::ValueFn table_value(const std::vector<double>& v) {
  return [v](const Matrix& states) {
    Vector out(states.rows());
    for (Eigen::Index i = 0; i < states.rows(); ++i) {
      out[i] = v.at(static_cast<std::size_t>(states(i, 0)));
    }
    return out;
  };
}

PropertyResult interchange(Context& ctx) {
  PropertyResult r;
  r.tolerance = 1e-6;
  Worst w;
  const long n = scaled(50, ctx.scale);
  const double deltas[] = {0.01, 0.1, 0.5, 1.0, 5.0};
  for (long i = 0; i < n; ++i) {
    const double delta = deltas[i % 5];
    const auto m = random_small_rmdp(ctx.rng, 6, 4, delta);
    const auto q = instances::random_q(ctx.rng, m);
    const auto pi = instances::random_policy(ctx.rng, m.n_states, m.n_actions);
    const auto v_of = table_value(tab::soft_value_from_q(q, pi, m.alpha).v);
    const auto batch = tabular_batch(ctx.rng, m, 64);
    auto g = fn::GFunction::exact(batch.size(), fn::GBounds::from_value_bound(m.value_bound(), delta));
    const double objective = fn::optimize_g(batch, v_of, delta, g).objective;
    double sup = 0.0;
    for (double x : fn::per_sample_sup(batch, v_of, delta)) sup += x;
    w.add(std::abs(objective - sup / static_cast<double>(batch.size())), r.tolerance);
  }
  r.instances = n;
  r.measured = w.value;
  r.pass = w.violations == 0;
  r.detail = "64-row batches; " + violations_text(w.violations, n);
  return r;
}

// ---- 8. delta -> 0 reduction ------------------------------------------------

agent::AgentConfig small_agent_config(std::uint64_t seed, double delta) {
  agent::AgentConfig c;
  c.hidden = {8};
  c.activation = nn::Activation::kTanh;
  c.batch_size = 6;
  c.m = 3;
  c.delta = delta;
  c.seed = seed;
  return c;
}

// The exact gap between the two operators at small delta is
// gamma * sqrt(2 delta Var_p V) to first order, so the 1e-4 entrywise check
// is run on unit-range value tables (rewards scaled into [0, 1]). On
// full-range tables the gap is checked against the distribution-free bound
// gamma * sqrt(2 delta) * span_p(V) / 2 (Hoeffding's lemma plus
// Donsker-Varadhan).
PropertyResult delta_zero(Context& ctx) {
  PropertyResult r;
  const double delta = 1e-8, tab_tol = 1e-4, agent_tol = 1e-6;
  r.tolerance = agent_tol;
  Worst tab_worst, agent_worst;
  long hoeffding_violations = 0;
  const long n = scaled(50, ctx.scale);
  for (long i = 0; i < n; ++i) {
    const auto m = random_small_rmdp(ctx.rng, 6, 4, delta);
    const auto pi = instances::random_policy(ctx.rng, m.n_states, m.n_actions);
    const tab::SoftQTable unit{uniform(ctx.rng, m.n_states, m.n_actions, 0.0, 1.0)};
    tab_worst.add(tab::sup_norm_distance(tab::dr_soft_bellman(unit, pi, m),
                                         tab::nonrobust_soft_bellman(unit, pi, m)),
                  tab_tol);

    const auto full = instances::random_q(ctx.rng, m);
    const Matrix gap = (tab::dr_soft_bellman(full, pi, m).q - tab::nonrobust_soft_bellman(full, pi, m).q)
                           .cwiseAbs();
    const auto v = tab::soft_value_from_q(full, pi, m.alpha).v;
    for (int s = 0; s < m.n_states; ++s) {
      for (int a = 0; a < m.n_actions; ++a) {
        double lo = kInf, hi = -kInf;
        const auto& p = m.next(s, a);
        for (std::size_t j = 0; j < p.size(); ++j) {
          if (p[j] > 0.0) {
            lo = std::min(lo, v[j]);
            hi = std::max(hi, v[j]);
          }
        }
        const double bound = m.gamma * std::sqrt(2.0 * delta) * 0.5 * (hi - lo);
        if (!(gap(s, a) <= bound + 1e-12)) ++hoeffding_violations;
      }
    }
  }
  const long n_agent = scaled(20, ctx.scale);
  for (long i = 0; i < n_agent; ++i) {
    auto c = small_agent_config(ctx.rng(), 0.0);
    c.algorithm = agent::Algorithm::kRobust;
    agent::Agent a(c, 3, 1, 1.0);
    fn::TransitionBatch b =
        agent::to_batch(uniform(ctx.rng, 16, 3, -1, 1), uniform(ctx.rng, 16, 1, -2, 2),
                        uniform(ctx.rng, 16, 1, 0, 1), uniform(ctx.rng, 16, 3, -1, 1));
    b.atoms = b.next_states;
    b.m = 1;
    const Matrix sac = a.sac_targets(b.rewards, b.next_states);
    const Matrix robust = a.robust_targets(b).targets;
    agent_worst.add((robust - sac).cwiseAbs().maxCoeff(), agent_tol);
  }
  r.instances = n + n_agent;
  r.measured = agent_worst.value;
  r.pass = tab_worst.violations == 0 && agent_worst.violations == 0 && hoeffding_violations == 0;
  std::ostringstream s;
  s << "tabular delta=1e-8 vs non-robust on unit-range tables: worst " << tab_worst.value
    << " (tol 1e-4, " << tab_worst.violations << " violations over " << n
    << "); full-range tables above the span bound: " << hoeffding_violations
    << "); agent delta=0 robust vs SAC target: worst " << agent_worst.value << " (tol 1e-6, "
    << agent_worst.violations << " violations over " << n_agent << ")";
  r.detail = s.str();
  if (tab_worst.value / tab_tol > agent_worst.value / agent_tol) {
    // Report the tighter-relative side so measured <= tolerance tracks pass.
    r.measured = tab_worst.value;
    r.tolerance = tab_tol;
  }
  return r;
}

// ---- 9. regret bound ----------------------------------------------------------

PropertyResult regret(Context& ctx) {
  PropertyResult r;
  r.tolerance = 0.0;
  long q_fail = 0, regret_fail = 0;
  double worst_ratio = 0.0;  // max over instances of gap / bound
  const long n = scaled(30, ctx.scale);
  for (long i = 0; i < n; ++i) {
    const double eps1 = i % 2 == 0 ? 1e-3 : 1e-2;
    const auto m = random_small_rmdp(ctx.rng, 4, 3, uniform_real(ctx.rng, 0.05, 1.0));
    const auto est = instances::perturb_transitions(
        ctx.rng, m, eps1 * eps1 * uniform_real(ctx.rng, 0.1, 0.99));
    const auto rep = tab::regret_bound_check(m, est, eps1);
    if (!rep.q_gap_holds) ++q_fail;
    if (!rep.regret_holds) ++regret_fail;
    if (rep.q_bound > 0.0) worst_ratio = std::max(worst_ratio, rep.q_gap / rep.q_bound);
    if (rep.regret_bound > 0.0) worst_ratio = std::max(worst_ratio, rep.regret / rep.regret_bound);
  }
  r.instances = n;
  r.measured = static_cast<double>(q_fail + regret_fail);
  r.pass = q_fail == 0 && regret_fail == 0;
  std::ostringstream s;
  s << "measured: bound violations; Q-gap bound failed " << q_fail << ", regret bound failed "
    << regret_fail << "; worst gap/bound ratio " << worst_ratio;
  r.detail = s.str();
  return r;
}

// ---- 10. gradient integrity -------------------------------------------------

PropertyResult gradients(Context& ctx) {
  PropertyResult r;
  r.tolerance = 1e-4;
  const long n = scaled(20, ctx.scale);
  const char* names[] = {"J_V", "J_Q", "J_pi", "J_alpha", "J_VAE", "g"};
  double worst[6] = {0, 0, 0, 0, 0, 0};
  long violations = 0;
  auto record = [&](int k, const nn::GradCheckResult& g) {
    double e = g.max_rel_error;
    if (!(e <= r.tolerance)) ++violations;
    if (std::isnan(e)) e = kInf;
    worst[k] = std::max(worst[k], e);
  };
  for (long i = 0; i < n; ++i) {
    agent::Agent a(small_agent_config(ctx.rng(), 0.5), 3, 1, 1.0);
    const Matrix s = uniform(ctx.rng, 5, 3, -1, 1);
    const Matrix act = uniform(ctx.rng, 5, 1, -1.5, 1.5);
    const Matrix eps = standard_normal(ctx.rng, 5, 1);
    const Matrix y = uniform(ctx.rng, 5, 1, 0, 2);
    const Matrix logp = uniform(ctx.rng, 5, 1, -2, 1);
    record(0, nn::check_parameter_gradients([&](nn::Tape& t) { return a.v_loss(t, s, eps); },
                                            *a.v().online));
    record(1, nn::check_parameter_gradients(
                  [&](nn::Tape& t) { return a.q_loss(t, 0, s, act, y); }, *a.q(0).online));
    record(2, nn::check_parameter_gradients(
                  [&](nn::Tape& t) { return a.policy_loss(t, s, eps); }, a.policy_store()));
    record(3, nn::check_parameter_gradients(
                  [&](nn::Tape& t) { return a.temperature_loss(t, logp); }, a.alpha_store()));

    generative::TransitionVae vae({3, 1, 2, {8}, nn::Activation::kTanh}, ctx.rng);
    const Matrix next = uniform(ctx.rng, 5, 3, -1, 1);
    const Matrix z_eps = standard_normal(ctx.rng, 5, 2);
    record(4, nn::check_parameter_gradients(
                  [&](nn::Tape& t) {
                    return generative::elbo_loss(t, vae, s, act, next, z_eps).loss;
                  },
                  vae.store()));

    const Matrix values = uniform(ctx.rng, 5, 4, 0, 5);
    const auto measures = fn::value_measures(values, 4);
    auto g = fn::GFunction::learned({4, {8}, 1}, fn::GBounds::from_value_bound(5.0, 0.5), ctx.rng);
    g.net().initialize(ctx.rng);  // non-zero last layer
    Matrix inputs(5, 4);
    inputs << s, act;
    record(5, nn::check_parameter_gradients(
                  [&](nn::Tape& t) { return fn::objective_var(t, measures, inputs, g, 0.5); },
                  g.store()));
  }
  r.instances = n * 6;
  r.measured = *std::max_element(std::begin(worst), std::end(worst));
  r.pass = violations == 0;
  std::ostringstream s;
  s << "worst relative error per loss:";
  for (int k = 0; k < 6; ++k) s << " " << names[k] << "=" << worst[k];
  r.detail = s.str();
  return r;
}

using PropertyFn = std::function<PropertyResult(Context&)>;

const std::vector<std::pair<std::string, PropertyFn>>& registry() {
  static const std::vector<std::pair<std::string, PropertyFn>> props = {
      {"dual_primal", dual_primal},
      {"boundary", boundary},
      {"contraction", contraction},
      {"fixed_point", fixed_point},
      {"monotone_improvement", monotone_improvement},
      {"policy_iteration_grid", policy_iteration_grid},
      {"interchange", interchange},
      {"delta_zero", delta_zero},
      {"regret", regret},
      {"gradients", gradients},
  };
  return props;
}

nlohmann::json number_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

}  // namespace

const std::vector<std::string>& property_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, f] : registry()) out.push_back(name);
    return out;
  }();
  return names;
}

bool VerificationReport::pass() const {
  return !properties.empty() &&
         std::all_of(properties.begin(), properties.end(), [](const auto& p) { return p.pass; });
}

nlohmann::json VerificationReport::to_json() const {
  nlohmann::json props = nlohmann::json::array();
  for (const auto& p : properties) {
    props.push_back({{"name", p.name},
                     {"pass", p.pass},
                     {"measured", number_or_null(p.measured)},
                     {"tolerance", p.tolerance},
                     {"instances", p.instances},
                     {"wall_time_s", p.wall_time_s},
                     {"detail", p.detail}});
  }
  return {{"schema", kSchema},
          {"seed", seed},
          {"sign_flip_fault", sign_flip_fault},
          {"pass", pass()},
          {"wall_time_s", wall_time_s},
          {"properties", props}};
}

VerificationReport run_verification(const VerifyOptions& options) {
  if (!(options.scale > 0.0) || !std::isfinite(options.scale)) {
    throw ConfigError("verify: scale must be positive");
  }
  for (const auto& name : options.only) {
    const auto& names = property_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw ConfigError("verify: unknown property '" + name + "'");
    }
  }
  FaultGuard fault(options.sign_flip_fault);
  VerificationReport report;
  report.seed = options.seed;
  report.sign_flip_fault = options.sign_flip_fault;
  const auto t0 = Clock::now();
  const auto& props = registry();
  for (std::size_t idx = 0; idx < props.size(); ++idx) {
    const auto& [name, run] = props[idx];
    if (!options.only.empty() && !options.only.contains(name)) continue;
    // Streams are keyed by position in the full list, so --only does not
    // change the instances a property sees.
    Context ctx{stream_rng(options.seed, idx), options.scale};
    const auto p0 = Clock::now();
    PropertyResult result;
    try {
      result = run(ctx);
    } catch (const std::exception& e) {
      result = {};
      result.pass = false;
      result.measured = kInf;
      result.detail = std::string("aborted: ") + e.what();
    }
    result.name = name;
    result.wall_time_s = seconds_since(p0);
    report.properties.push_back(std::move(result));
  }
  report.wall_time_s = seconds_since(t0);
  return report;
}

void validate_report_json(const nlohmann::json& j) {
  auto fail = [](const std::string& what) { throw ConfigError("verification report: " + what); };
  auto require = [&](const nlohmann::json& obj, const char* key, auto check, const char* type) {
    if (!obj.contains(key) || !check(obj.at(key))) {
      fail(std::string("field '") + key + "' missing or not " + type);
    }
  };
  const auto is_bool = [](const nlohmann::json& v) { return v.is_boolean(); };
  const auto is_number = [](const nlohmann::json& v) { return v.is_number(); };
  const auto is_count = [](const nlohmann::json& v) {
    return v.is_number_integer() && v.template get<long long>() >= 0;
  };
  const auto is_string = [](const nlohmann::json& v) { return v.is_string(); };

  if (!j.is_object()) fail("not an object");
  require(j, "schema", is_string, "a string");
  if (j.at("schema") != kSchema) fail("unknown schema " + j.at("schema").dump());
  require(j, "seed", is_count, "a non-negative integer");
  require(j, "sign_flip_fault", is_bool, "a boolean");
  require(j, "pass", is_bool, "a boolean");
  require(j, "wall_time_s", is_number, "a number");
  require(j, "properties", [](const nlohmann::json& v) { return v.is_array() && !v.empty(); },
          "a non-empty array");
  if (j.size() != 6) fail("unexpected top-level fields");

  bool all = true;
  std::set<std::string> seen;
  for (const auto& p : j.at("properties")) {
    if (!p.is_object() || p.size() != 7) fail("property entry is not a 7-field object");
    require(p, "name", is_string, "a string");
    require(p, "pass", is_bool, "a boolean");
    require(p, "measured", [](const nlohmann::json& v) { return v.is_number() || v.is_null(); },
            "a number or null");
    require(p, "tolerance", is_number, "a number");
    require(p, "instances", is_count, "a non-negative integer");
    require(p, "wall_time_s", is_number, "a number");
    require(p, "detail", is_string, "a string");
    const auto name = p.at("name").get<std::string>();
    const auto& names = property_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      fail("unknown property '" + name + "'");
    }
    if (!seen.insert(name).second) fail("duplicate property '" + name + "'");
    all = all && p.at("pass").get<bool>();
  }
  if (j.at("pass").get<bool>() != all) fail("overall verdict disagrees with property verdicts");
}

}  // namespace drsac::verify
