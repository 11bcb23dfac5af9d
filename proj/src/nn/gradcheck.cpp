#include "drsac/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace drsac::nn {

namespace {

void record(GradCheckResult& r, double analytic, double numeric, double f0) {
  const double abs_err = std::abs(analytic - numeric);
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-5 * std::max(1.0, std::abs(f0))});
  r.max_abs_error = std::max(r.max_abs_error, abs_err);
  r.max_rel_error = std::max(r.max_rel_error, abs_err / denom);
  ++r.entries;
}

}  // namespace

GradCheckResult check_input_gradients(const InputFunction& f, const std::vector<Matrix>& inputs,
                                      double h) {
  auto evaluate = [&](const std::vector<Matrix>& xs) {
    Tape t;
    std::vector<Var> vars;
    for (const Matrix& x : xs) vars.push_back(t.constant(x));
    return f(t, vars).scalar();
  };

  Tape tape;
  std::vector<Var> vars;
  for (const Matrix& x : inputs) vars.push_back(tape.input(x));
  const Var out = f(tape, vars);
  const double f0 = out.scalar();
  tape.backward(out);

  GradCheckResult result;
  std::vector<Matrix> xs = inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Matrix analytic = tape.gradient(vars[k]);
    for (Eigen::Index i = 0; i < xs[k].size(); ++i) {
      double& x = xs[k].data()[i];
      const double saved = x;
      x = saved + h;
      const double up = evaluate(xs);
      x = saved - h;
      const double down = evaluate(xs);
      x = saved;
      record(result, analytic.data()[i], (up - down) / (2.0 * h), f0);
    }
  }
  return result;
}

GradCheckResult check_parameter_gradients(const ParameterFunction& f, ParameterStore& store,
                                          double h) {
  store.zero_grad();
  double f0 = 0.0;
  {
    Tape tape;
    const Var out = f(tape);
    f0 = out.scalar();
    tape.backward(out);
  }
  auto evaluate = [&] {
    Tape t;
    return f(t).scalar();
  };

  GradCheckResult result;
  for (Parameter* p : store.parameters()) {
    const Matrix analytic = p->grad;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + h;
      const double up = evaluate();
      x = saved - h;
      const double down = evaluate();
      x = saved;
      record(result, analytic.data()[i], (up - down) / (2.0 * h), f0);
    }
  }
  store.zero_grad();
  return result;
}

}  // namespace drsac::nn
