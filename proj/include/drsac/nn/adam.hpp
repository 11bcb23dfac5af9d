#pragma once

#include <string>
#include <vector>

#include "drsac/nn/parameter_store.hpp"

namespace drsac::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamReport {
  bool applied = true;
  // Parameters whose gradient held NaN/inf; the whole update is skipped.
  std::vector<std::string> non_finite;
};

/// One bias-corrected Adam update from the accumulated gradients, then the
/// gradients are zeroed. A non-finite gradient anywhere skips the update
/// (moments and step count untouched) and is reported.
AdamReport adam_step(ParameterStore& store, const AdamOptions& options);

}  // namespace drsac::nn
