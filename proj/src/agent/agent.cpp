#include "drsac/agent/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "drsac/errors.hpp"
#include "drsac/nn/adam.hpp"

namespace drsac::agent {

namespace {

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Matrix gather(const Matrix& src, const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(idx[i]);
  return out;
}

void apply_adam(nn::ParameterStore& store, double lr, const char* what, long step) {
  const auto report = nn::adam_step(store, {lr});
  if (!report.applied) {
    throw NumericalError(std::string("watchdog: non-finite gradient in ") + what + " (" +
                         report.non_finite.front() + ") at step " + std::to_string(step));
  }
}

}  // namespace

Agent::Agent(AgentConfig config, int state_dim, int action_dim, double r_max)
    : config_(std::move(config)),
      state_dim_(state_dim),
      action_dim_(action_dim),
      r_max_(r_max),
      rng_(stream_rng(config_.seed, 1)) {
  config_.validate();
  if (state_dim < 1 || action_dim < 1) throw ConfigError("agent: dimensions must be positive");
  if (!(r_max > 0.0) || !std::isfinite(r_max)) throw ConfigError("agent: r_max must be positive");

  // Initialization draws come from their own stream so that robust and
  // baseline agents with one seed start from identical V, Q and policy nets
  // and share the training stream.
  Rng init = stream_rng(config_.seed, 0);
  const int sa = state_dim + action_dim;
  const auto act = config_.activation;
  v_ = make_tracked("v", {state_dim, config_.hidden, 1, act}, init);
  for (int i = 0; i < config_.n_critics; ++i) {
    q_.push_back(make_tracked("q" + std::to_string(i), {sa, config_.hidden, 1, act}, init));
  }
  pi_store_ = std::make_unique<nn::ParameterStore>();
  pi_ = nn::Mlp(*pi_store_, "pi", {state_dim, config_.hidden, 2 * action_dim, act});
  pi_.initialize(init);
  head_.action_dim = action_dim;
  head_.action_scale = config_.action_scale;

  alpha_store_ = std::make_unique<nn::ParameterStore>();
  alpha_store_->add("alpha", 1, 1).value(0, 0) = config_.alpha_init;

  if (robust()) {
    // The g bound needs delta > 0; at delta = 0 g is never used.
    const double d = config_.delta > 0.0 ? config_.delta : 1.0;
    g_ = std::make_unique<functional::GFunction>(functional::GFunction::learned(
        {sa, config_.hidden, 1, act}, functional::GBounds::from_value_bound(value_bound(), d), init));
    vae_ = std::make_unique<generative::TransitionVae>(
        generative::VaeSpec{state_dim, action_dim, config_.latent_dim, config_.hidden, act,
                            config_.vae_residual}, init);
  }
}

TrackedNet Agent::make_tracked(const std::string& prefix, nn::MlpSpec spec, Rng& init) {
  TrackedNet t;
  t.online = std::make_unique<nn::ParameterStore>();
  t.target = std::make_unique<nn::ParameterStore>();
  t.net = nn::Mlp(*t.online, prefix, spec);
  t.target_net = nn::Mlp(*t.target, prefix, spec);
  t.net.initialize(init);
  t.target->copy_values_from(*t.online);
  return t;
}

double Agent::target_entropy() const {
  return std::isnan(config_.target_entropy) ? -static_cast<double>(action_dim_)
                                            : config_.target_entropy;
}

double Agent::value_bound() const {
  const double log_vol = action_dim_ * std::log(2.0 * config_.action_scale);
  return (r_max_ + config_.alpha_init * std::max(log_vol, 0.0)) / (1.0 - config_.gamma);
}

double Agent::alpha() const { return alpha_store_->get("alpha").value(0, 0); }

// ---- losses -----------------------------------------------------------------

nn::Var Agent::min_target_q(nn::Tape& tape, const Matrix& states, const nn::Var& actions) const {
  const nn::Var s = tape.constant(states);
  nn::Var out;
  for (std::size_t i = 0; i < q_.size(); ++i) {
    const nn::Var qi = q_[i].target_net.forward(tape, nn::concat_cols({s, actions}), false);
    out = i == 0 ? qi : nn::minimum(out, qi);
  }
  return out;
}

nn::Var Agent::v_loss(nn::Tape& tape, const Matrix& states, const Matrix& eps) const {
  const auto sv = head_.sample_values(pi_.predict(states), eps);
  Matrix qmin;
  const Matrix sa = hcat(states, sv.action);
  for (std::size_t i = 0; i < q_.size(); ++i) {
    const Matrix qi = q_[i].target_net.predict(sa);
    qmin = i == 0 ? qi : Matrix(qmin.cwiseMin(qi));
  }
  const Matrix target = qmin - alpha() * sv.log_prob;
  const nn::Var diff = v_.net.forward(tape, tape.constant(states)) - tape.constant(target);
  return 0.5 * nn::mean(nn::square(diff));
}

nn::Var Agent::q_loss(nn::Tape& tape, int critic, const Matrix& states, const Matrix& actions,
                      const Matrix& targets) const {
  const nn::Var q = q_.at(static_cast<std::size_t>(critic)).net.forward(tape, tape.constant(hcat(states, actions)));
  return 0.5 * nn::mean(nn::square(q - tape.constant(targets)));
}

nn::Var Agent::policy_loss(nn::Tape& tape, const Matrix& states, const Matrix& eps) const {
  const auto sample = head_.sample(pi_.forward(tape, tape.constant(states)), eps);
  return nn::mean(alpha() * sample.log_prob - min_target_q(tape, states, sample.action));
}

nn::Var Agent::temperature_loss(nn::Tape& tape, const Matrix& log_prob) const {
  const nn::Var a = tape.parameter(alpha_store_->get("alpha"));
  const Matrix c = (-log_prob).array() - target_entropy();
  return nn::mean(nn::mul_scalar(a, tape.constant(c)));
}

// ---- targets ------------------------------------------------------------------

Matrix Agent::sac_targets(const Matrix& rewards, const Matrix& next_states) const {
  return rewards + config_.gamma * v_.target_net.predict(next_states);
}

Agent::RobustTargets Agent::robust_targets(const functional::TransitionBatch& batch) {
  if (!g_) throw std::logic_error("robust_targets: agent is not in robust mode");
  const auto v_of = [this](const Matrix& s) -> Vector { return v_.target_net.predict(s).col(0); };
  const auto measures = functional::value_measures(batch, v_of);
  const Matrix inputs = batch.inputs();
  RobustTargets out;
  const auto res = functional::optimize_g(measures, inputs, config_.delta, *g_,
                                          {config_.g_steps, config_.lr_g});
  out.g_objective = res.objective;
  const auto rows = functional::objective_rows(measures, inputs, *g_, config_.delta);
  const auto t = functional::functional_bellman_target(batch.rewards, measures, rows, config_.gamma);
  out.targets = Eigen::Map<const Matrix>(t.data(), static_cast<Eigen::Index>(t.size()), 1);
  return out;
}

// ---- updates ------------------------------------------------------------------

void Agent::soft_update() {
  v_.target->soft_update_from(*v_.online, config_.tau);
  for (auto& q : q_) q.target->soft_update_from(*q.online, config_.tau);
}

void Agent::check_finite(const char* what, double value) const {
  if (!std::isfinite(value)) {
    throw NumericalError(std::string("watchdog: non-finite ") + what + " at step " +
                         std::to_string(steps_));
  }
}

functional::TransitionBatch Agent::sample_minibatch(const functional::TransitionBatch& data) {
  const Eigen::Index n = data.size();
  if (n == 0) throw std::invalid_argument("agent: empty dataset");
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(config_.batch_size));
  for (auto& k : idx) k = pick(rng_);
  functional::TransitionBatch mb;
  mb.states = gather(data.states, idx);
  mb.actions = gather(data.actions, idx);
  mb.rewards = gather(data.rewards, idx);
  mb.next_states = gather(data.next_states, idx);
  return mb;
}

StepMetrics Agent::update(const functional::TransitionBatch& minibatch) {
  return update_impl(minibatch, robust());
}

StepMetrics Agent::gradient_step(const functional::TransitionBatch& data) {
  return update_impl(sample_minibatch(data), robust());
}

StepMetrics Agent::sac_baseline_step(const functional::TransitionBatch& data) {
  return update_impl(sample_minibatch(data), false);
}

StepMetrics Agent::update_impl(const functional::TransitionBatch& mb, bool robust_step) {
  const Eigen::Index n = mb.size();
  if (n == 0) throw std::invalid_argument("agent: empty minibatch");
  StepMetrics m;
  m.step = ++steps_;
  if (config_.fault_nan_step == steps_) {
    v_.net.weight(0).value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  }

  Matrix targets;
  if (robust_step) {
    if (!g_) throw std::logic_error("agent: robust step without a g network");
    if (mb.has_atoms()) {
      const auto rt = robust_targets(mb);
      targets = rt.targets;
      m.g_objective = rt.g_objective;
    } else {
      m.vae_loss = generative::vae_step(*vae_, mb.states, mb.actions, mb.next_states,
                                        {config_.lr_vae}, rng_);
      functional::TransitionBatch b = mb;
      b.atoms = generative::sample_atoms(*vae_, mb.states, mb.actions, config_.m, rng_);
      b.m = config_.m;
      const auto rt = robust_targets(b);
      targets = rt.targets;
      m.g_objective = rt.g_objective;
    }
  } else {
    targets = sac_targets(mb.rewards, mb.next_states);
  }
  m.target_mean = targets.mean();
  check_finite("Q target", targets.sum());

  {
    nn::Tape tape;
    const nn::Var loss = v_loss(tape, mb.states, standard_normal(rng_, n, action_dim_));
    m.v_loss = loss.scalar();
    check_finite("V loss", m.v_loss);
    tape.backward(loss);
    apply_adam(*v_.online, config_.lr_v, "V", steps_);
  }
  for (int i = 0; i < config_.n_critics; ++i) {
    nn::Tape tape;
    const nn::Var loss = q_loss(tape, i, mb.states, mb.actions, targets);
    m.q_loss += loss.scalar() / config_.n_critics;
    tape.backward(loss);
    apply_adam(*q_[static_cast<std::size_t>(i)].online, config_.lr_q, "Q", steps_);
  }
  check_finite("Q loss", m.q_loss);
  {
    nn::Tape tape;
    const nn::Var loss = policy_loss(tape, mb.states, standard_normal(rng_, n, action_dim_));
    m.pi_loss = loss.scalar();
    check_finite("policy loss", m.pi_loss);
    tape.backward(loss);
    apply_adam(*pi_store_, config_.lr_pi, "policy", steps_);
  }
  {
    const auto sv = head_.sample_values(pi_.predict(mb.states), standard_normal(rng_, n, action_dim_));
    m.entropy = -sv.log_prob.mean();
    nn::Tape tape;
    const nn::Var loss = temperature_loss(tape, sv.log_prob);
    m.alpha_loss = loss.scalar();
    check_finite("temperature loss", m.alpha_loss);
    tape.backward(loss);
    apply_adam(*alpha_store_, config_.lr_alpha, "alpha", steps_);
    double& a = alpha_store_->get("alpha").value(0, 0);
    if (a < kAlphaMin) {
      a = kAlphaMin;
      m.alpha_clamped = true;
    }
    m.alpha = a;
  }
  soft_update();
  return m;
}

generative::VaeTrainReport Agent::pretrain_vae(const functional::TransitionBatch& data, int steps) {
  if (!vae_) throw std::logic_error("pretrain_vae: agent is not in robust mode");
  generative::VaeTrainOptions opts;
  opts.steps = steps;
  opts.batch_size = config_.batch_size;
  opts.lr = config_.lr_vae;
  return generative::train_vae(*vae_, data.states, data.actions, data.next_states, opts, rng_);
}

// ---- acting and persistence ---------------------------------------------------

Matrix Agent::act(const Matrix& states) const { return head_.deterministic_action(pi_.predict(states)); }

envs::Policy Agent::snapshot_policy() const {
  auto store = std::make_shared<nn::ParameterStore>();
  auto net = std::make_shared<nn::Mlp>(*store, "pi", pi_.spec());
  store->copy_values_from(*pi_store_);
  const nn::GaussianHead head = head_;
  return [store, net, head](const Matrix& obs) { return head.deterministic_action(net->predict(obs)); };
}

bool Agent::all_finite() const {
  if (!v_.online->all_finite() || !v_.target->all_finite() || !pi_store_->all_finite() ||
      !alpha_store_->all_finite()) {
    return false;
  }
  for (const auto& q : q_) {
    if (!q.online->all_finite() || !q.target->all_finite()) return false;
  }
  if (g_ && !g_->store().all_finite()) return false;
  if (vae_ && !vae_->store().all_finite()) return false;
  return true;
}

void Agent::save(nn::Checkpoint& ckpt) const {
  ckpt.put_store("v", *v_.online, true);
  ckpt.put_store("v_target", *v_.target, false);
  for (std::size_t i = 0; i < q_.size(); ++i) {
    ckpt.put_store("q" + std::to_string(i), *q_[i].online, true);
    ckpt.put_store("q" + std::to_string(i) + "_target", *q_[i].target, false);
  }
  ckpt.put_store("pi", *pi_store_, true);
  ckpt.put_store("alpha", *alpha_store_, true);
  if (g_) ckpt.put_store("g", g_->store(), true);
  if (vae_) ckpt.put_store("vae", vae_->store(), true);
  ckpt.put_text("agent/config", config_.to_kv().serialize());
  ckpt.put_text("agent/dims", std::to_string(state_dim_) + " " + std::to_string(action_dim_));
  ckpt.put_text("agent/r_max", format_double(r_max_));
  ckpt.put_text("agent/steps", std::to_string(steps_));
  ckpt.put_text("agent/rng", rng_state(rng_));
}

void Agent::load(const nn::Checkpoint& ckpt) {
  if (ckpt.text("agent/config") != config_.to_kv().serialize()) {
    throw ConfigError("checkpoint was written with a different agent configuration");
  }
  ckpt.get_store("v", *v_.online);
  ckpt.get_store("v_target", *v_.target);
  for (std::size_t i = 0; i < q_.size(); ++i) {
    ckpt.get_store("q" + std::to_string(i), *q_[i].online);
    ckpt.get_store("q" + std::to_string(i) + "_target", *q_[i].target);
  }
  ckpt.get_store("pi", *pi_store_);
  ckpt.get_store("alpha", *alpha_store_);
  if (g_) ckpt.get_store("g", g_->store());
  if (vae_) ckpt.get_store("vae", vae_->store());
  steps_ = std::stol(ckpt.text("agent/steps"));
  set_rng_state(rng_, ckpt.text("agent/rng"));
}

std::unique_ptr<Agent> Agent::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (!ckpt.has_text("agent/config")) throw ConfigError("checkpoint holds no agent");
  const auto config = AgentConfig::from_kv(KvConfig::parse(ckpt.text("agent/config"), "checkpoint"));
  std::istringstream dims(ckpt.text("agent/dims"));
  int sd = 0, ad = 0;
  dims >> sd >> ad;
  auto agent = std::make_unique<Agent>(config, sd, ad, std::stod(ckpt.text("agent/r_max")));
  agent->load(ckpt);
  return agent;
}

functional::TransitionBatch to_batch(const Matrix& obs, const Matrix& actions, const Matrix& rewards,
                                     const Matrix& next_obs) {
  functional::TransitionBatch b;
  b.states = obs;
  b.actions = actions;
  b.rewards = rewards;
  b.next_states = next_obs;
  return b;
}

}  // namespace drsac::agent
