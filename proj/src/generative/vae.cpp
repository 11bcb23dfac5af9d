#include "drsac/generative/vae.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "drsac/errors.hpp"

namespace drsac::generative {

namespace {

Matrix hcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("vae: misaligned inputs");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

void check_dims(const VaeSpec& spec, const Matrix& s, const Matrix& a) {
  if (s.cols() != spec.state_dim || a.cols() != spec.action_dim || s.rows() != a.rows()) {
    throw std::invalid_argument("vae: state/action shape mismatch");
  }
}

}  // namespace

TransitionVae::TransitionVae(VaeSpec spec, Rng& rng)
    : spec_(std::move(spec)), store_(std::make_unique<nn::ParameterStore>()) {
  if (spec_.state_dim < 1 || spec_.action_dim < 1 || spec_.latent_dim < 1) {
    throw std::invalid_argument("vae: dimensions must be positive");
  }
  const int sa = spec_.state_dim + spec_.action_dim;
  encoder_ = nn::Mlp(*store_, "enc", {sa + spec_.state_dim, spec_.hidden, 2 * spec_.latent_dim, spec_.activation});
  decoder_ = nn::Mlp(*store_, "dec", {sa + spec_.latent_dim, spec_.hidden, spec_.state_dim, spec_.activation});
  encoder_.initialize(rng);
  decoder_.initialize(rng);
}

TransitionVae::Posterior TransitionVae::encode(nn::Tape& tape, const Matrix& s, const Matrix& a,
                                               const Matrix& next) const {
  check_dims(spec_, s, a);
  if (next.cols() != spec_.state_dim || next.rows() != s.rows()) {
    throw std::invalid_argument("vae: next-state shape mismatch");
  }
  const nn::Var out = encoder_.forward(tape, tape.constant(hcat(hcat(s, a), next)));
  const int d = spec_.latent_dim;
  return {nn::slice_cols(out, 0, d),
          nn::clamp(nn::slice_cols(out, d, d), kLogSigmaMin, kLogSigmaMax)};
}

nn::Var TransitionVae::decode(nn::Tape& tape, const Matrix& s, const Matrix& a,
                              const nn::Var& z) const {
  check_dims(spec_, s, a);
  const nn::Var out = decoder_.forward(tape, nn::concat_cols({tape.constant(hcat(s, a)), z}));
  return spec_.residual ? out + tape.constant(s) : out;
}

Matrix TransitionVae::decode_values(const Matrix& s, const Matrix& a, const Matrix& z) const {
  check_dims(spec_, s, a);
  if (z.cols() != spec_.latent_dim) throw std::invalid_argument("vae: latent shape mismatch");
  Matrix out = decoder_.predict(hcat(hcat(s, a), z));
  if (spec_.residual) out += s;
  return out;
}

nn::Var kl_to_standard_normal(const nn::Var& mu, const nn::Var& log_sigma) {
  const nn::Var terms = nn::square(mu) + nn::exp(2.0 * log_sigma) - 2.0 * log_sigma + (-1.0);
  return 0.5 * nn::row_sum(terms);
}

double kl_to_standard_normal(const Matrix& mu, const Matrix& log_sigma) {
  const auto ls = log_sigma.array();
  return 0.5 * (mu.array().square() + (2.0 * ls).exp() - 2.0 * ls - 1.0).sum();
}

ElboTerms elbo_loss(nn::Tape& tape, const TransitionVae& vae, const Matrix& s, const Matrix& a,
                    const Matrix& next, const Matrix& eps) {
  if (s.rows() == 0) throw std::invalid_argument("elbo_loss: empty batch");
  if (eps.rows() != s.rows() || eps.cols() != vae.spec().latent_dim) {
    throw std::invalid_argument("elbo_loss: noise shape mismatch");
  }
  const auto post = vae.encode(tape, s, a, next);
  const nn::Var z = post.mu + nn::exp(post.log_sigma) * tape.constant(eps);
  const nn::Var recon_rows = nn::row_sum(nn::square(vae.decode(tape, s, a, z) - tape.constant(next)));
  ElboTerms terms;
  terms.reconstruction = nn::mean(recon_rows);
  terms.kl = nn::mean(kl_to_standard_normal(post.mu, post.log_sigma));
  terms.loss = terms.reconstruction + terms.kl;
  return terms;
}

double vae_step(TransitionVae& vae, const Matrix& s, const Matrix& a, const Matrix& next,
                const nn::AdamOptions& options, Rng& rng) {
  const Matrix eps = standard_normal(rng, s.rows(), vae.spec().latent_dim);
  nn::Tape tape;
  const auto terms = elbo_loss(tape, vae, s, a, next, eps);
  const double loss = terms.loss.scalar();
  if (!std::isfinite(loss)) throw NumericalError("vae: non-finite ELBO loss");
  tape.backward(terms.loss);
  const auto report = nn::adam_step(vae.store(), options);
  if (!report.applied) throw NumericalError("vae: non-finite gradient in " + report.non_finite.front());
  return loss;
}

VaeTrainReport train_vae(TransitionVae& vae, const Matrix& s, const Matrix& a, const Matrix& next,
                         const VaeTrainOptions& options, Rng& rng) {
  const Eigen::Index n = s.rows();
  if (n == 0 || a.rows() != n || next.rows() != n) {
    throw std::invalid_argument("train_vae: empty or misaligned dataset");
  }
  if (options.steps < 0 || options.batch_size < 1 || options.window < 1) {
    throw std::invalid_argument("train_vae: bad options");
  }
  const Eigen::Index bs = std::min<Eigen::Index>(options.batch_size, n);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  Matrix bs_s(bs, s.cols()), bs_a(bs, a.cols()), bs_n(bs, next.cols());
  VaeTrainReport report;
  double initial = 0.0, window_sum = 0.0;
  for (int step = 0; step < options.steps; ++step) {
    for (Eigen::Index i = 0; i < bs; ++i) {
      const Eigen::Index k = bs == n ? i : pick(rng);
      bs_s.row(i) = s.row(k);
      bs_a.row(i) = a.row(k);
      bs_n.row(i) = next.row(k);
    }
    const double loss = vae_step(vae, bs_s, bs_a, bs_n, {options.lr}, rng);
    report.losses.push_back(loss);
    window_sum += loss;
    const auto w = static_cast<std::size_t>(options.window);
    if (report.losses.size() > w) window_sum -= report.losses[report.losses.size() - 1 - w];
    const double avg = window_sum / static_cast<double>(std::min(report.losses.size(), w));
    if (step == 0) initial = loss;
    if (avg > 10.0 * initial) {
      throw NumericalError("vae: training diverged at step " + std::to_string(step) +
                           " (moving-average loss " + std::to_string(avg) + ", initial " +
                           std::to_string(initial) + ")");
    }
  }
  return report;
}

EmpiricalMeasure sample_next_states(const TransitionVae& vae, const Matrix& s, const Matrix& a,
                                    int m, Rng& rng) {
  if (s.rows() != 1) throw std::invalid_argument("sample_next_states: expects a single (s, a)");
  return {sample_atoms(vae, s, a, m, rng)};
}

Matrix sample_atoms(const TransitionVae& vae, const Matrix& s, const Matrix& a, int m, Rng& rng) {
  if (m < 1) throw std::invalid_argument("sample_atoms: m must be >= 1");
  const Eigen::Index n = s.rows();
  Matrix rs(n * m, s.cols()), ra(n * m, a.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      rs.row(i * m + j) = s.row(i);
      ra.row(i * m + j) = a.row(i);
    }
  }
  return vae.decode_values(rs, ra, standard_normal(rng, n * m, vae.spec().latent_dim));
}

}  // namespace drsac::generative
