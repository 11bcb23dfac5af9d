#pragma once

// Central-difference checks of reverse-mode gradients.
//
// Per entry the error is |analytic - numeric| / max(|analytic|, |numeric|,
// 1e-5 * max(1, |f|)); the floor keeps round-off in f(x +- h) from counting
// as relative error when the true derivative is ~0.

#include <functional>
#include <vector>

#include "drsac/linalg.hpp"
#include "drsac/nn/parameter_store.hpp"
#include "drsac/nn/tape.hpp"

namespace drsac::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries = 0;

  bool passes(double rel_tol) const { return max_rel_error <= rel_tol; }
};

using InputFunction = std::function<Var(Tape&, const std::vector<Var>&)>;
using ParameterFunction = std::function<Var(Tape&)>;

/// Checks d f / d inputs; `f` must return a 1x1 Var.
GradCheckResult check_input_gradients(const InputFunction& f, const std::vector<Matrix>& inputs,
                                      double h = 1e-5);

/// Checks d f / d parameters of `store`; `f` must bind the store's
/// parameters through Tape::parameter and return a 1x1 Var.
GradCheckResult check_parameter_gradients(const ParameterFunction& f, ParameterStore& store,
                                          double h = 1e-5);

}  // namespace drsac::nn
