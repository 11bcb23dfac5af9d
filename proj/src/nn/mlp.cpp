#include "drsac/nn/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace drsac::nn {

namespace {

std::vector<int> layer_widths(const MlpSpec& spec) {
  if (spec.input_dim < 1 || spec.output_dim < 1) throw std::invalid_argument("mlp: empty layer");
  std::vector<int> w{spec.input_dim};
  for (int h : spec.hidden) {
    if (h < 1) throw std::invalid_argument("mlp: hidden width must be positive");
    w.push_back(h);
  }
  w.push_back(spec.output_dim);
  return w;
}

}  // namespace

Mlp::Mlp(ParameterStore& store, const std::string& prefix, MlpSpec spec) : spec_(std::move(spec)) {
  const auto widths = layer_widths(spec_);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    weights_.push_back(&store.add(prefix + ".w" + std::to_string(l), widths[l], widths[l + 1]));
    biases_.push_back(&store.add(prefix + ".b" + std::to_string(l), 1, widths[l + 1]));
  }
}

Mlp Mlp::bind(ParameterStore& store, const std::string& prefix, MlpSpec spec) {
  Mlp net(std::move(spec));
  const auto widths = layer_widths(net.spec_);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Parameter& w = store.get(prefix + ".w" + std::to_string(l));
    Parameter& b = store.get(prefix + ".b" + std::to_string(l));
    if (w.value.rows() != widths[l] || w.value.cols() != widths[l + 1] || b.value.rows() != 1 ||
        b.value.cols() != widths[l + 1]) {
      throw std::invalid_argument("mlp: parameter shapes under '" + prefix + "' do not match");
    }
    net.weights_.push_back(&w);
    net.biases_.push_back(&b);
  }
  return net;
}

void Mlp::initialize(Rng& rng, bool zero_last_layer) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix& w = weights_[l]->value;
    Matrix& b = biases_[l]->value;
    if (zero_last_layer && l + 1 == weights_.size()) {
      w.setZero();
      b.setZero();
      continue;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.rows()));
    w = uniform(rng, w.rows(), w.cols(), -bound, bound);
    b = uniform(rng, 1, b.cols(), -bound, bound);
  }
}

Var activate(const Var& x, Activation a) {
  switch (a) {
    case Activation::kIdentity: return x;
    case Activation::kRelu: return relu(x);
    case Activation::kTanh: return tanh(x);
    case Activation::kSigmoid: return sigmoid(x);
  }
  throw std::logic_error("unknown activation");
}

void activate_in_place(Matrix& x, Activation a) {
  switch (a) {
    case Activation::kIdentity: return;
    case Activation::kRelu: x = x.cwiseMax(0.0); return;
    case Activation::kTanh: x = x.array().tanh(); return;
    case Activation::kSigmoid: x = (1.0 + (-x.array()).exp()).inverse(); return;
  }
  throw std::logic_error("unknown activation");
}

Var Mlp::forward(Tape& tape, const Var& x, bool trainable) const {
  if (x.cols() != spec_.input_dim) {
    throw std::invalid_argument("mlp forward: expected " + std::to_string(spec_.input_dim) +
                                " input columns, got " + std::to_string(x.cols()));
  }
  Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = add_bias(matmul(h, tape.parameter(*weights_[l], trainable)),
                 tape.parameter(*biases_[l], trainable));
    h = activate(h, l + 1 == weights_.size() ? spec_.output_activation : spec_.hidden_activation);
  }
  return h;
}

Matrix Mlp::predict(const Matrix& x) const {
  if (x.cols() != spec_.input_dim) {
    throw std::invalid_argument("mlp predict: expected " + std::to_string(spec_.input_dim) +
                                " input columns, got " + std::to_string(x.cols()));
  }
  Matrix h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix next = h * weights_[l]->value;
    next.rowwise() += biases_[l]->value.row(0);
    activate_in_place(next, l + 1 == weights_.size() ? spec_.output_activation
                                                     : spec_.hidden_activation);
    h = std::move(next);
  }
  return h;
}

}  // namespace drsac::nn
