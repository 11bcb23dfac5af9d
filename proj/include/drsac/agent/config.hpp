#pragma once

#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "drsac/kv_config.hpp"
#include "drsac/nn/mlp.hpp"

namespace drsac::agent {

enum class Algorithm {
  kAuto,    // robust iff delta > 0
  kRobust,  // DR-SAC, also with delta = 0 (reduction checks)
  kSac,     // non-robust SAC-v1 baseline
};

struct AgentConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double alpha_init = 0.12;
  int batch_size = 256;
  int n_critics = 2;
  double delta = 0.0;
  Algorithm algorithm = Algorithm::kAuto;

  double lr_v = 5e-4;      // lambda_psi
  double lr_q = 5e-4;      // lambda_Q
  double lr_pi = 5e-4;     // lambda_pi
  double lr_alpha = 5e-4;  // lambda_alpha
  double lr_vae = 5e-5;    // lambda_phi
  double lr_g = 5e-5;      // lambda_eta

  int g_steps = 5;
  int m = 10;  // VAE atoms per (s, a)
  // Desired minimum entropy; NaN means -action_dim.
  double target_entropy = std::numeric_limits<double>::quiet_NaN();

  std::vector<int> hidden = {64, 64};
  nn::Activation activation = nn::Activation::kRelu;
  int latent_dim = 5;
  bool vae_residual = true;  // decoder predicts s' - s
  int vae_pretrain_steps = 0;
  double action_scale = 2.0;
  std::uint64_t seed = 0;

  // Poisons the V network before this step (1-based) to exercise the
  // watchdog; negative disables.
  long fault_nan_step = -1;

  bool robust() const {
    return algorithm == Algorithm::kRobust || (algorithm == Algorithm::kAuto && delta > 0.0);
  }

  /// Throws ConfigError on out-of-range fields.
  void validate() const;

  /// Reads the keys below; unknown keys are rejected.
  static AgentConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
  static const std::set<std::string>& keys();
};

}  // namespace drsac::agent
