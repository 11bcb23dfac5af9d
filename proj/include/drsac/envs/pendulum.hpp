#pragma once

// Pendulum swing-up. theta = 0 is upright; the rod is a uniform bar pivoted
// at one end, so theta'' = 3g/(2l) sin(theta) + 3u/(m l^2). Integration is
// semi-implicit Euler with speed clamping.

#include <map>
#include <string>

#include "drsac/linalg.hpp"
#include "drsac/rng.hpp"

namespace drsac::envs {

struct PendulumParams {
  double gravity = 10.0;
  double mass = 1.0;
  double length = 1.0;
  double max_torque = 2.0;
  double max_speed = 8.0;
  double dt = 0.05;
  int max_steps = 200;
};

enum class ObsNoise { kNone, kGaussian, kCauchy };

/// Evaluation-time shift of the environment.
struct PerturbationSpec {
  // Keys: gravity, mass, length. Values replace the nominal parameters.
  std::map<std::string, double> param_overrides;
  ObsNoise obs_noise = ObsNoise::kNone;
  double obs_noise_scale = 0.0;      // sigma (Gaussian) or scale (Cauchy)
  double action_random_prob = 0.0;  // chance the action is replaced by a uniform draw

  /// Throws ConfigError on unknown keys or out-of-range values.
  void validate() const;
  PendulumParams apply(PendulumParams base) const;
  bool is_nominal() const;
};

/// Affine map of the raw reward into [0, R_max] with R_max = 1.
struct RewardMap {
  // Raw reward lies in [-kRawBound, 0] for the default torque and speed limits.
  static constexpr double kRawBound = 16.2736044;
  double shift = kRawBound;
  double scale = 1.0 / kRawBound;
  double r_max = 1.0;

  double operator()(double raw) const { return (raw + shift) * scale; }
  static RewardMap for_params(const PendulumParams& p);
};

class PendulumEnv {
 public:
  static constexpr int kObsDim = 3;
  static constexpr int kActionDim = 1;

  explicit PendulumEnv(PendulumParams params = {}, PerturbationSpec spec = {});

  /// Random start: theta ~ U(-pi, pi), theta_dot ~ U(-1, 1).
  Matrix reset(std::uint64_t seed);
  /// Explicit start, used by tests.
  Matrix reset_to(double theta, double theta_dot, std::uint64_t seed = 0);

  struct Step {
    Matrix obs;         // 1 x 3, possibly noisy
    double reward = 0;  // shifted into [0, r_max]
    double raw_reward = 0;
    bool done = false;  // time limit reached
    bool random_action = false;
  };
  /// Applies `action` (1 x 1, clamped to the torque box).
  Step step(const Matrix& action);

  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  int steps() const { return steps_; }
  const PendulumParams& params() const { return params_; }
  const RewardMap& reward_map() const { return reward_map_; }
  /// (1/6) m l^2 theta_dot^2 + (m g l / 2) cos(theta).
  double energy() const;
  Matrix observe_clean() const;

 private:
  Matrix observe();

  PendulumParams params_;
  PerturbationSpec spec_;
  RewardMap reward_map_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  int steps_ = 0;
  // Separate streams so perturbation draws never shift the dynamics stream.
  Rng obs_rng_;
  Rng action_rng_;
};

/// Wraps an angle into [-pi, pi).
double angle_normalize(double x);

/// Raw reward -(theta^2 + 0.1 theta_dot^2 + 0.001 u^2) with theta normalized.
double raw_reward(double theta, double theta_dot, double u);

}  // namespace drsac::envs
