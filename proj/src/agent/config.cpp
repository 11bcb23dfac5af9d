#include "drsac/agent/config.hpp"

#include <cmath>

#include "drsac/errors.hpp"

namespace drsac::agent {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("agent config: " + what);
}

std::string join(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

const char* activation_name(nn::Activation a) {
  switch (a) {
    case nn::Activation::kRelu: return "relu";
    case nn::Activation::kTanh: return "tanh";
    case nn::Activation::kSigmoid: return "sigmoid";
    case nn::Activation::kIdentity: return "identity";
  }
  return "relu";
}

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kAuto: return "auto";
    case Algorithm::kRobust: return "drsac";
    case Algorithm::kSac: return "sac";
  }
  return "auto";
}

}  // namespace

void AgentConfig::validate() const {
  require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
  require(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
  require(alpha_init > 0.0 && std::isfinite(alpha_init), "alpha_init must be positive");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(n_critics >= 2, "n_critics must be >= 2");
  require(delta >= 0.0 && std::isfinite(delta), "delta must be >= 0");
  for (double lr : {lr_v, lr_q, lr_pi, lr_alpha, lr_vae, lr_g}) {
    require(lr > 0.0 && std::isfinite(lr), "learning rates must be positive");
  }
  require(g_steps >= 0, "g_steps must be >= 0");
  require(m >= 1, "m must be >= 1");
  require(!hidden.empty(), "hidden must list at least one layer");
  for (int h : hidden) require(h >= 1, "hidden widths must be positive");
  require(latent_dim >= 1, "latent_dim must be >= 1");
  require(vae_pretrain_steps >= 0, "vae_pretrain_steps must be >= 0");
  require(action_scale > 0.0, "action_scale must be positive");
  require(std::isnan(target_entropy) || std::isfinite(target_entropy), "target_entropy must be finite");
}

const std::set<std::string>& AgentConfig::keys() {
  static const std::set<std::string> k = {
      "gamma", "tau", "alpha_init", "batch_size", "n_critics", "delta", "algorithm",
      "lr_v", "lr_q", "lr_pi", "lr_alpha", "lr_vae", "lr_g", "g_steps", "m",
      "target_entropy", "hidden", "activation", "latent_dim", "vae_residual", "vae_pretrain_steps",
      "action_scale", "seed", "fault_nan_step"};
  return k;
}

AgentConfig AgentConfig::from_kv(const KvConfig& kv) {
  kv.require_known(keys());
  AgentConfig c;
  c.gamma = kv.get_double("gamma", c.gamma);
  c.tau = kv.get_double("tau", c.tau);
  c.alpha_init = kv.get_double("alpha_init", c.alpha_init);
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.n_critics = static_cast<int>(kv.get_int("n_critics", c.n_critics));
  c.delta = kv.get_double("delta", c.delta);
  const std::string alg = kv.get_string("algorithm", "auto");
  if (alg == "auto") c.algorithm = Algorithm::kAuto;
  else if (alg == "drsac") c.algorithm = Algorithm::kRobust;
  else if (alg == "sac") c.algorithm = Algorithm::kSac;
  else throw ConfigError("config key 'algorithm': expected auto, drsac or sac, got '" + alg + "'");
  c.lr_v = kv.get_double("lr_v", c.lr_v);
  c.lr_q = kv.get_double("lr_q", c.lr_q);
  c.lr_pi = kv.get_double("lr_pi", c.lr_pi);
  c.lr_alpha = kv.get_double("lr_alpha", c.lr_alpha);
  c.lr_vae = kv.get_double("lr_vae", c.lr_vae);
  c.lr_g = kv.get_double("lr_g", c.lr_g);
  c.g_steps = static_cast<int>(kv.get_int("g_steps", c.g_steps));
  c.m = static_cast<int>(kv.get_int("m", c.m));
  if (kv.has("target_entropy") && kv.get_string("target_entropy", "") != "auto") {
    c.target_entropy = kv.get_double("target_entropy", 0.0);
  }
  c.hidden = kv.get_int_list("hidden", c.hidden);
  const std::string act = kv.get_string("activation", "relu");
  if (act == "relu") c.activation = nn::Activation::kRelu;
  else if (act == "tanh") c.activation = nn::Activation::kTanh;
  else throw ConfigError("config key 'activation': expected relu or tanh, got '" + act + "'");
  c.latent_dim = static_cast<int>(kv.get_int("latent_dim", c.latent_dim));
  c.vae_residual = kv.get_bool("vae_residual", c.vae_residual);
  c.vae_pretrain_steps = static_cast<int>(kv.get_int("vae_pretrain_steps", c.vae_pretrain_steps));
  c.action_scale = kv.get_double("action_scale", c.action_scale);
  c.seed = kv.get_uint("seed", c.seed);
  c.fault_nan_step = kv.get_int("fault_nan_step", c.fault_nan_step);
  c.validate();
  return c;
}

KvConfig AgentConfig::to_kv() const {
  KvConfig kv;
  kv.set("gamma", format_double(gamma));
  kv.set("tau", format_double(tau));
  kv.set("alpha_init", format_double(alpha_init));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("n_critics", std::to_string(n_critics));
  kv.set("delta", format_double(delta));
  kv.set("algorithm", algorithm_name(algorithm));
  kv.set("lr_v", format_double(lr_v));
  kv.set("lr_q", format_double(lr_q));
  kv.set("lr_pi", format_double(lr_pi));
  kv.set("lr_alpha", format_double(lr_alpha));
  kv.set("lr_vae", format_double(lr_vae));
  kv.set("lr_g", format_double(lr_g));
  kv.set("g_steps", std::to_string(g_steps));
  kv.set("m", std::to_string(m));
  kv.set("target_entropy", std::isnan(target_entropy) ? "auto" : format_double(target_entropy));
  kv.set("hidden", join(hidden));
  kv.set("activation", activation_name(activation));
  kv.set("latent_dim", std::to_string(latent_dim));
  kv.set("vae_residual", vae_residual ? "true" : "false");
  kv.set("vae_pretrain_steps", std::to_string(vae_pretrain_steps));
  kv.set("action_scale", format_double(action_scale));
  kv.set("seed", std::to_string(seed));
  kv.set("fault_nan_step", std::to_string(fault_nan_step));
  return kv;
}

}  // namespace drsac::agent
