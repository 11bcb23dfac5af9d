#include "drsac/nn/gaussian_head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace drsac::nn {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)), stable for large |u|.
double log_one_minus_tanh_sq(double u) {
  const double x = -2.0 * u;
  const double sp = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  return 2.0 * (std::log(2.0) - u - sp);
}

void check_shape(Eigen::Index cols, int d) {
  if (cols != 2 * d) throw std::invalid_argument("gaussian head: expected 2*action_dim columns");
}

}  // namespace

GaussianHead::Sample GaussianHead::sample(const Var& head_out, const Matrix& eps) const {
  check_shape(head_out.cols(), action_dim);
  if (eps.rows() != head_out.rows() || eps.cols() != action_dim) {
    throw std::invalid_argument("gaussian head: noise shape mismatch");
  }
  Tape& t = head_out.tape();
  const Var mean = slice_cols(head_out, 0, action_dim);
  const Var log_std = clamp(slice_cols(head_out, action_dim, action_dim), log_std_min, log_std_max);
  const Var noise = t.constant(eps);
  const Var u = mean + exp(log_std) * noise;

  // sum_j [-eps_j^2 / 2 - log std_j - log(2 pi) / 2]
  Matrix eps_term = (-0.5 * eps.cwiseAbs2().rowwise().sum()).array() - action_dim * kHalfLog2Pi;
  Var log_prob = t.constant(std::move(eps_term)) - row_sum(log_std);

  if (!squash) return {u, log_prob};

  const Var correction = scale(add_scalar(-(u + softplus(scale(u, -2.0))), std::log(2.0)), 2.0);
  log_prob = add_scalar(log_prob - row_sum(correction),
                        -action_dim * std::log(action_scale));
  return {scale(tanh(u), action_scale), log_prob};
}

GaussianHead::SampleValues GaussianHead::sample_values(const Matrix& head_out,
                                                       const Matrix& eps) const {
  check_shape(head_out.cols(), action_dim);
  const Eigen::Index n = head_out.rows();
  SampleValues out{Matrix(n, action_dim), Matrix(n, 1)};
  for (Eigen::Index i = 0; i < n; ++i) {
    double lp = 0.0;
    for (int j = 0; j < action_dim; ++j) {
      const double mean = head_out(i, j);
      const double log_std = std::clamp(head_out(i, action_dim + j), log_std_min, log_std_max);
      const double e = eps(i, j);
      const double u = mean + std::exp(log_std) * e;
      lp += -0.5 * e * e - log_std - kHalfLog2Pi;
      if (squash) {
        lp -= log_one_minus_tanh_sq(u) + std::log(action_scale);
        out.action(i, j) = action_scale * std::tanh(u);
      } else {
        out.action(i, j) = u;
      }
    }
    out.log_prob(i, 0) = lp;
  }
  return out;
}

Matrix GaussianHead::deterministic_action(const Matrix& head_out) const {
  check_shape(head_out.cols(), action_dim);
  Matrix mean = head_out.leftCols(action_dim);
  if (squash) mean = action_scale * mean.array().tanh();
  return mean;
}

Matrix GaussianHead::log_prob_of(const Matrix& head_out, const Matrix& action) const {
  check_shape(head_out.cols(), action_dim);
  const Eigen::Index n = head_out.rows();
  Matrix out(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    double lp = 0.0;
    for (int j = 0; j < action_dim; ++j) {
      const double mean = head_out(i, j);
      const double log_std = std::clamp(head_out(i, action_dim + j), log_std_min, log_std_max);
      double u = action(i, j);
      if (squash) {
        const double y = action(i, j) / action_scale;
        if (!(std::abs(y) < 1.0)) {
          lp = -std::numeric_limits<double>::infinity();
          break;
        }
        u = std::atanh(y);
        lp -= log_one_minus_tanh_sq(u) + std::log(action_scale);
      }
      const double z = (u - mean) / std::exp(log_std);
      lp += -0.5 * z * z - log_std - kHalfLog2Pi;
    }
    out(i, 0) = lp;
  }
  return out;
}

}  // namespace drsac::nn
