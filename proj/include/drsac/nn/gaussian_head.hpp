#pragma once

// Reparameterized diagonal Gaussian policy head. The network output holds
// [mean | log_std] (n x 2d); an action is a = scale * tanh(mean + std * eps)
// with eps ~ N(0, I), or mean + std * eps when squashing is off.

#include "drsac/linalg.hpp"
#include "drsac/nn/tape.hpp"

namespace drsac::nn {

struct GaussianHead {
  int action_dim = 1;
  double action_scale = 1.0;
  bool squash = true;
  double log_std_min = -20.0;
  double log_std_max = 2.0;

  struct Sample {
    Var action;    // n x d
    Var log_prob;  // n x 1
  };
  struct SampleValues {
    Matrix action;
    Matrix log_prob;
  };

  /// Differentiable sample; `eps` is n x d standard normal noise.
  Sample sample(const Var& head_out, const Matrix& eps) const;
  /// Same computation without recording.
  SampleValues sample_values(const Matrix& head_out, const Matrix& eps) const;
  /// Mode of the squashed distribution: scale * tanh(mean).
  Matrix deterministic_action(const Matrix& head_out) const;
  /// Density of `action` (n x d), used for quadrature checks.
  Matrix log_prob_of(const Matrix& head_out, const Matrix& action) const;
};

}  // namespace drsac::nn
