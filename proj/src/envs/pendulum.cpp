#include "drsac/envs/pendulum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "drsac/errors.hpp"

namespace drsac::envs {

double angle_normalize(double x) {
  const double two_pi = 2.0 * std::numbers::pi;
  return x - two_pi * std::floor((x + std::numbers::pi) / two_pi);
}

double raw_reward(double theta, double theta_dot, double u) {
  const double th = angle_normalize(theta);
  return -(th * th + 0.1 * theta_dot * theta_dot + 0.001 * u * u);
}

void PerturbationSpec::validate() const {
  for (const auto& [key, value] : param_overrides) {
    if (key != "gravity" && key != "mass" && key != "length") {
      throw ConfigError("perturbation: unknown parameter '" + key + "'");
    }
    if (!std::isfinite(value) || (key != "gravity" && value <= 0.0) || value < 0.0) {
      throw ConfigError("perturbation: bad value for '" + key + "'");
    }
  }
  if (!(obs_noise_scale >= 0.0) || !std::isfinite(obs_noise_scale)) {
    throw ConfigError("perturbation: noise scale must be >= 0");
  }
  if (!(action_random_prob >= 0.0 && action_random_prob <= 1.0)) {
    throw ConfigError("perturbation: action_random_prob must lie in [0, 1]");
  }
}

PendulumParams PerturbationSpec::apply(PendulumParams base) const {
  for (const auto& [key, value] : param_overrides) {
    if (key == "gravity") base.gravity = value;
    else if (key == "mass") base.mass = value;
    else if (key == "length") base.length = value;
  }
  return base;
}

bool PerturbationSpec::is_nominal() const {
  return param_overrides.empty() && (obs_noise == ObsNoise::kNone || obs_noise_scale == 0.0) &&
         action_random_prob == 0.0;
}

RewardMap RewardMap::for_params(const PendulumParams& p) {
  RewardMap m;
  m.shift = std::numbers::pi * std::numbers::pi + 0.1 * p.max_speed * p.max_speed +
            0.001 * p.max_torque * p.max_torque;
  m.scale = 1.0 / m.shift;
  return m;
}

PendulumEnv::PendulumEnv(PendulumParams params, PerturbationSpec spec)
    : spec_(std::move(spec)) {
  spec_.validate();
  params_ = spec_.apply(params);
  // The reward map depends only on the limits, which perturbations leave alone.
  reward_map_ = RewardMap::for_params(params_);
}

Matrix PendulumEnv::reset(std::uint64_t seed) {
  Rng init = stream_rng(seed, 0);
  std::uniform_real_distribution<double> th(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> om(-1.0, 1.0);
  const double theta = th(init);
  const double theta_dot = om(init);
  return reset_to(theta, theta_dot, seed);
}

Matrix PendulumEnv::reset_to(double theta, double theta_dot, std::uint64_t seed) {
  theta_ = theta;
  theta_dot_ = std::clamp(theta_dot, -params_.max_speed, params_.max_speed);
  steps_ = 0;
  obs_rng_ = stream_rng(seed, 1);
  action_rng_ = stream_rng(seed, 2);
  return observe();
}

double PendulumEnv::energy() const {
  const auto& p = params_;
  return p.mass * p.length * p.length * theta_dot_ * theta_dot_ / 6.0 +
         0.5 * p.mass * p.gravity * p.length * std::cos(theta_);
}

Matrix PendulumEnv::observe_clean() const {
  Matrix obs(1, kObsDim);
  obs << std::cos(theta_), std::sin(theta_), theta_dot_;
  return obs;
}

Matrix PendulumEnv::observe() {
  Matrix obs = observe_clean();
  if (spec_.obs_noise == ObsNoise::kGaussian && spec_.obs_noise_scale > 0.0) {
    std::normal_distribution<double> n(0.0, spec_.obs_noise_scale);
    for (Eigen::Index j = 0; j < obs.cols(); ++j) obs(0, j) += n(obs_rng_);
  } else if (spec_.obs_noise == ObsNoise::kCauchy && spec_.obs_noise_scale > 0.0) {
    std::cauchy_distribution<double> c(0.0, 1.0);
    for (Eigen::Index j = 0; j < obs.cols(); ++j) obs(0, j) += spec_.obs_noise_scale * c(obs_rng_);
  }
  return obs;
}

PendulumEnv::Step PendulumEnv::step(const Matrix& action) {
  const auto& p = params_;
  double u = std::clamp(action(0, 0), -p.max_torque, p.max_torque);
  Step out;
  if (spec_.action_random_prob > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_real_distribution<double> box(-p.max_torque, p.max_torque);
    if (coin(action_rng_) < spec_.action_random_prob) {
      u = box(action_rng_);
      out.random_action = true;
    }
  }
  out.raw_reward = raw_reward(theta_, theta_dot_, u);
  out.reward = reward_map_(out.raw_reward);

  const double acc = 3.0 * p.gravity / (2.0 * p.length) * std::sin(theta_) +
                     3.0 / (p.mass * p.length * p.length) * u;
  theta_dot_ = std::clamp(theta_dot_ + acc * p.dt, -p.max_speed, p.max_speed);
  theta_ += theta_dot_ * p.dt;
  ++steps_;
  out.done = steps_ >= p.max_steps;
  out.obs = observe();
  return out;
}

}  // namespace drsac::envs
