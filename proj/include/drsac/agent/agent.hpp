#pragma once

// Offline soft actor-critic with an explicit V network (SAC-v1 layout),
// n independently trained Q critics and automatic temperature. In robust
// mode the Q target replaces the next-state expectation by the KL-robust
// functional form evaluated on VAE-generated next states.

#include <memory>
#include <optional>
#include <vector>

#include "drsac/agent/config.hpp"
#include "drsac/envs/policy.hpp"
#include "drsac/functional.hpp"
#include "drsac/generative/vae.hpp"
#include "drsac/nn/checkpoint.hpp"
#include "drsac/nn/gaussian_head.hpp"
#include "drsac/nn/mlp.hpp"
#include "drsac/rng.hpp"

namespace drsac::agent {

struct StepMetrics {
  long step = 0;
  double v_loss = 0.0;
  double q_loss = 0.0;  // mean over critics
  double pi_loss = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;  // -mean log pi on the temperature sample
  double target_mean = 0.0;
  double g_objective = 0.0;  // robust mode only
  double vae_loss = 0.0;     // robust mode with generated atoms only
  bool alpha_clamped = false;
};

/// One network with its Polyak-averaged copy.
struct TrackedNet {
  std::unique_ptr<nn::ParameterStore> online;
  std::unique_ptr<nn::ParameterStore> target;
  nn::Mlp net;
  nn::Mlp target_net;
};

class Agent {
 public:
  static constexpr double kAlphaMin = 1e-6;

  Agent(AgentConfig config, int state_dim, int action_dim, double r_max);
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  const AgentConfig& config() const { return config_; }
  bool robust() const { return config_.robust(); }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  double r_max() const { return r_max_; }
  double target_entropy() const;
  /// (R_max + alpha_init log vol(A)) / (1 - gamma).
  double value_bound() const;
  long steps() const { return steps_; }
  Rng& rng() { return rng_; }

  double alpha() const;
  nn::ParameterStore& alpha_store() { return *alpha_store_; }
  TrackedNet& v() { return v_; }
  const TrackedNet& v() const { return v_; }
  TrackedNet& q(int i) { return q_.at(static_cast<std::size_t>(i)); }
  const TrackedNet& q(int i) const { return q_.at(static_cast<std::size_t>(i)); }
  nn::ParameterStore& policy_store() { return *pi_store_; }
  const nn::Mlp& policy_net() const { return pi_; }
  const nn::GaussianHead& head() const { return head_; }
  generative::TransitionVae* vae() { return vae_.get(); }
  functional::GFunction* g() { return g_.get(); }

  // ---- losses (explicit noise, so they are deterministic functions) -------

  /// mean 1/2 (V(s) - [min_i Qbar_i(s, a) - alpha log pi(a|s)])^2, a ~ pi(s; eps).
  nn::Var v_loss(nn::Tape& tape, const Matrix& states, const Matrix& eps) const;
  /// mean 1/2 (Q_i(s, a) - y)^2 with y held constant.
  nn::Var q_loss(nn::Tape& tape, int critic, const Matrix& states, const Matrix& actions,
                 const Matrix& targets) const;
  /// mean [alpha log pi(f(eps; s)|s) - min_i Qbar_i(s, f(eps; s))].
  nn::Var policy_loss(nn::Tape& tape, const Matrix& states, const Matrix& eps) const;
  /// mean [-alpha log pi - alpha H_target]; gradient reaches alpha only.
  nn::Var temperature_loss(nn::Tape& tape, const Matrix& log_prob) const;

  // ---- targets -------------------------------------------------------------

  /// r + gamma Vbar(s').
  Matrix sac_targets(const Matrix& rewards, const Matrix& next_states) const;
  struct RobustTargets {
    Matrix targets;  // n x 1
    double g_objective = 0.0;
  };
  /// Optimizes g on the batch's atoms (warm start) and returns
  /// r + gamma f((s,a), g(s,a)) with V from the target V network.
  RobustTargets robust_targets(const functional::TransitionBatch& batch);

  // ---- updates -------------------------------------------------------------

  /// Polyak update of the V and Q targets.
  void soft_update();
  /// Steps 2-9 of one iteration on a given minibatch. In robust mode a
  /// minibatch without atoms gets a VAE step and m generated atoms per row;
  /// a minibatch with atoms uses them as they are.
  StepMetrics update(const functional::TransitionBatch& minibatch);
  /// Draws a minibatch from `data` and runs update().
  StepMetrics gradient_step(const functional::TransitionBatch& data);
  /// Non-robust step regardless of the configured algorithm.
  StepMetrics sac_baseline_step(const functional::TransitionBatch& data);
  functional::TransitionBatch sample_minibatch(const functional::TransitionBatch& data);

  /// Pretrains the VAE on the whole dataset (robust mode only).
  generative::VaeTrainReport pretrain_vae(const functional::TransitionBatch& data, int steps);

  // ---- acting and persistence ---------------------------------------------

  /// Mode action scale * tanh(mean).
  Matrix act(const Matrix& states) const;
  /// Self-contained copy of the current deterministic policy.
  envs::Policy snapshot_policy() const;

  bool all_finite() const;
  void save(nn::Checkpoint& ckpt) const;
  /// Restores a checkpoint written by save() for the same configuration.
  void load(const nn::Checkpoint& ckpt);
  static std::unique_ptr<Agent> from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  StepMetrics update_impl(const functional::TransitionBatch& minibatch, bool robust);
  TrackedNet make_tracked(const std::string& prefix, nn::MlpSpec spec, Rng& init);
  nn::Var min_target_q(nn::Tape& tape, const Matrix& states, const nn::Var& actions) const;
  void check_finite(const char* what, double value) const;

  AgentConfig config_;
  int state_dim_;
  int action_dim_;
  double r_max_;
  Rng rng_;
  long steps_ = 0;

  TrackedNet v_;
  std::vector<TrackedNet> q_;
  std::unique_ptr<nn::ParameterStore> pi_store_;
  nn::Mlp pi_;
  nn::GaussianHead head_;
  std::unique_ptr<nn::ParameterStore> alpha_store_;
  std::unique_ptr<generative::TransitionVae> vae_;
  std::unique_ptr<functional::GFunction> g_;
};

/// Dataset arrays as a batch without atoms.
functional::TransitionBatch to_batch(const Matrix& obs, const Matrix& actions, const Matrix& rewards,
                                     const Matrix& next_obs);

}  // namespace drsac::agent
