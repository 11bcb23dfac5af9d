#pragma once

#include <functional>

#include "drsac/envs/pendulum.hpp"
#include "drsac/linalg.hpp"

namespace drsac::envs {

/// Maps one observation (1 x obs_dim) to an action (1 x action_dim).
using Policy = std::function<Matrix(const Matrix& obs)>;

struct SwingUpGains {
  double energy_gain = 3.0;  // pumping gain on (E_top - E) * theta_dot
  double kp = 12.0;          // balance gains near the top
  double kd = 3.0;
  double capture_cos = 0.7;  // switch to balancing above this cos(theta)
};

/// Deterministic energy-pumping swing-up with a PD balance near the top,
/// computed from the observation and the nominal parameters.
Policy swing_up_policy(const PendulumParams& params, SwingUpGains gains = {});

/// Always returns the same torque.
Policy constant_policy(double torque);

}  // namespace drsac::envs
