#include <algorithm>
#include <cmath>

#include "drsac/envs/policy.hpp"

namespace drsac::envs {

Policy swing_up_policy(const PendulumParams& params, SwingUpGains gains) {
  return [params, gains](const Matrix& obs) {
    const double c = obs(0, 0), s = obs(0, 1), w = obs(0, 2);
    const double theta = std::atan2(s, c);
    double u;
    if (c > gains.capture_cos) {
      u = -(gains.kp * theta + gains.kd * w);
    } else {
      const auto& p = params;
      const double energy = p.mass * p.length * p.length * w * w / 6.0 + 0.5 * p.mass * p.gravity * p.length * c;
      const double top = 0.5 * p.mass * p.gravity * p.length;
      // d/dt E = theta_dot * u, so this pushes the energy towards the top.
      u = gains.energy_gain * (top - energy) * (w == 0.0 ? 1.0 : w);
    }
    Matrix a(1, 1);
    a << std::clamp(u, -params.max_torque, params.max_torque);
    return a;
  };
}

Policy constant_policy(double torque) {
  return [torque](const Matrix&) { return Matrix::Constant(1, 1, torque); };
}

}  // namespace drsac::envs
