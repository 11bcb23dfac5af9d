#pragma once

// Conditional VAE for next states. The encoder maps (s, a, s') to a diagonal
// Gaussian posterior over z; the decoder maps (s, a, z) to a reconstruction
// of s' (unit-variance Gaussian likelihood, i.e. squared error). A residual
// decoder outputs s + f(s, a, z), so the network only models the one-step
// change.

#include <memory>
#include <vector>

#include "drsac/linalg.hpp"
#include "drsac/nn/adam.hpp"
#include "drsac/nn/mlp.hpp"
#include "drsac/rng.hpp"

namespace drsac::generative {

struct VaeSpec {
  int state_dim = 1;
  int action_dim = 1;
  int latent_dim = 5;
  std::vector<int> hidden = {64, 64};
  nn::Activation activation = nn::Activation::kRelu;
  bool residual = true;
};

class TransitionVae {
 public:
  static constexpr double kLogSigmaMin = -10.0;
  static constexpr double kLogSigmaMax = 4.0;

  TransitionVae(VaeSpec spec, Rng& rng);

  const VaeSpec& spec() const { return spec_; }
  nn::ParameterStore& store() { return *store_; }
  const nn::ParameterStore& store() const { return *store_; }
  nn::Mlp& encoder() { return encoder_; }
  nn::Mlp& decoder() { return decoder_; }

  struct Posterior {
    nn::Var mu;         // n x latent
    nn::Var log_sigma;  // n x latent, clamped
  };
  Posterior encode(nn::Tape& tape, const Matrix& s, const Matrix& a, const Matrix& next) const;
  nn::Var decode(nn::Tape& tape, const Matrix& s, const Matrix& a, const nn::Var& z) const;
  Matrix decode_values(const Matrix& s, const Matrix& a, const Matrix& z) const;

 private:
  VaeSpec spec_;
  std::unique_ptr<nn::ParameterStore> store_;
  nn::Mlp encoder_;
  nn::Mlp decoder_;
};

/// Per-row KL(N(mu, sigma^2) || N(0, I)) = 1/2 sum (mu^2 + sigma^2 - 1 - log sigma^2).
nn::Var kl_to_standard_normal(const nn::Var& mu, const nn::Var& log_sigma);
double kl_to_standard_normal(const Matrix& mu, const Matrix& log_sigma);

struct ElboTerms {
  nn::Var loss;            // recon + kl
  nn::Var reconstruction;  // batch mean of ||s' - s_hat'||^2
  nn::Var kl;              // batch mean KL term
};

/// Negative ELBO with one reparameterized draw z = mu + sigma * eps per row;
/// `eps` is n x latent standard normal noise.
ElboTerms elbo_loss(nn::Tape& tape, const TransitionVae& vae, const Matrix& s, const Matrix& a,
                    const Matrix& next, const Matrix& eps);

/// One Adam step on a minibatch; returns the loss before the step.
double vae_step(TransitionVae& vae, const Matrix& s, const Matrix& a, const Matrix& next,
                const nn::AdamOptions& options, Rng& rng);

struct VaeTrainOptions {
  int steps = 1000;
  int batch_size = 256;
  double lr = 5e-5;
  // Loss averaged over this many steps for the divergence watchdog.
  int window = 50;
};

struct VaeTrainReport {
  std::vector<double> losses;
};

/// Minibatch training on aligned (s, a, s') arrays. Aborts with
/// NumericalError when the moving-average loss exceeds 10x its initial value
/// or turns non-finite.
VaeTrainReport train_vae(TransitionVae& vae, const Matrix& s, const Matrix& a,
                         const Matrix& next, const VaeTrainOptions& options, Rng& rng);

/// m next-state atoms with uniform weights 1/m.
struct EmpiricalMeasure {
  Matrix atoms;  // m x state_dim

  int size() const { return static_cast<int>(atoms.rows()); }
  /// Arithmetic mean over atoms.
  Matrix expectation() const { return atoms.colwise().mean(); }
};

/// Decodes m prior draws z ~ N(0, I) at one (s, a).
EmpiricalMeasure sample_next_states(const TransitionVae& vae, const Matrix& s, const Matrix& a,
                                    int m, Rng& rng);

/// m atoms for each row of (s, a); row i*m + j of the result is atom j of row i.
Matrix sample_atoms(const TransitionVae& vae, const Matrix& s, const Matrix& a, int m, Rng& rng);

}  // namespace drsac::generative
