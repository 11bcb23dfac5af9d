#include "drsac/nn/adam.hpp"

#include <cmath>

namespace drsac::nn {

AdamReport adam_step(ParameterStore& store, const AdamOptions& options) {
  AdamReport report;
  for (const Parameter* p : store.parameters()) {
    if (!p->grad.allFinite()) report.non_finite.push_back(p->name);
  }
  if (!report.non_finite.empty()) {
    report.applied = false;
    store.zero_grad();
    return report;
  }
  const long t = ++store.optimizer_step;
  const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(t));
  for (Parameter* p : store.parameters()) {
    p->adam_m = options.beta1 * p->adam_m + (1.0 - options.beta1) * p->grad;
    p->adam_v = options.beta2 * p->adam_v + (1.0 - options.beta2) * p->grad.cwiseAbs2();
    p->value.array() -= options.lr * (p->adam_m.array() / c1) /
                        ((p->adam_v.array() / c2).sqrt() + options.eps);
    p->grad.setZero();
  }
  return report;
}

}  // namespace drsac::nn
