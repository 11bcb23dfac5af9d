#pragma once

#include <string>
#include <vector>

#include "drsac/linalg.hpp"
#include "drsac/nn/parameter_store.hpp"
#include "drsac/nn/tape.hpp"
#include "drsac/rng.hpp"

namespace drsac::nn {

enum class Activation { kIdentity, kRelu, kTanh, kSigmoid };

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden = {64, 64};
  int output_dim = 1;
  Activation hidden_activation = Activation::kRelu;
  Activation output_activation = Activation::kIdentity;
};

/// Dense feed-forward network. Layer l holds "<prefix>.w<l>" (in x out) and
/// "<prefix>.b<l>" (1 x out) in the backing store.
class Mlp {
 public:
  Mlp() = default;

  /// Registers zero-valued parameters in `store`.
  Mlp(ParameterStore& store, const std::string& prefix, MlpSpec spec);
  /// Binds to parameters already present in `store` (shapes are checked).
  static Mlp bind(ParameterStore& store, const std::string& prefix, MlpSpec spec);

  /// Fan-in uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and
  /// biases. With zero_last_layer the output layer starts at zero.
  void initialize(Rng& rng, bool zero_last_layer = false);

  /// Records the forward pass. With trainable = false the parameters enter
  /// as constants (gradients still flow to `x`).
  Var forward(Tape& tape, const Var& x, bool trainable = true) const;
  /// Plain evaluation without recording.
  Matrix predict(const Matrix& x) const;

  const MlpSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return weights_.size(); }
  Parameter& weight(std::size_t l) const { return *weights_.at(l); }
  Parameter& bias(std::size_t l) const { return *biases_.at(l); }

 private:
  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {}

  MlpSpec spec_;
  std::vector<Parameter*> weights_;
  std::vector<Parameter*> biases_;
};

Var activate(const Var& x, Activation a);
void activate_in_place(Matrix& x, Activation a);

}  // namespace drsac::nn
