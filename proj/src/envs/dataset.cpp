#include "drsac/envs/dataset.hpp"

#include <random>

#include "drsac/errors.hpp"
#include "drsac/envs/evaluation.hpp"
#include "drsac/nn/checkpoint.hpp"

namespace drsac::envs {

namespace {

void require(const nlohmann::json& j, const char* key, nlohmann::json::value_t type) {
  if (!j.contains(key)) throw ConfigError(std::string("dataset metadata: missing '") + key + "'");
  const auto t = j.at(key).type();
  const bool number = type == nlohmann::json::value_t::number_float;
  const bool ok = number ? j.at(key).is_number() : (type == nlohmann::json::value_t::number_unsigned
                                                        ? j.at(key).is_number_integer()
                                                        : t == type);
  if (!ok) throw ConfigError(std::string("dataset metadata: '") + key + "' has the wrong type");
}

}  // namespace

void validate_metadata(const nlohmann::json& m) {
  using T = nlohmann::json::value_t;
  if (!m.is_object()) throw ConfigError("dataset metadata: not an object");
  require(m, "format", T::string);
  require(m, "version", T::number_unsigned);
  require(m, "env", T::string);
  require(m, "params", T::object);
  require(m, "reward_map", T::object);
  require(m, "eps", T::number_float);
  require(m, "seed", T::number_unsigned);
  require(m, "n", T::number_unsigned);
  require(m, "behavior", T::string);
  require(m, "obs_dim", T::number_unsigned);
  require(m, "action_dim", T::number_unsigned);
  if (m.at("format") != "drsac-dataset") throw ConfigError("dataset metadata: wrong format tag");
  if (m.at("version").get<int>() != kDatasetVersion) {
    throw ConfigError("dataset metadata: unsupported version " + m.at("version").dump());
  }
  for (const char* k : {"gravity", "mass", "length", "max_torque", "max_speed", "dt"}) {
    require(m.at("params"), k, T::number_float);
  }
  require(m.at("params"), "max_steps", T::number_unsigned);
  for (const char* k : {"shift", "scale", "r_max"}) require(m.at("reward_map"), k, T::number_float);
}

void Dataset::validate() const {
  validate_metadata(metadata);
  const Eigen::Index n = obs.rows();
  if (actions.rows() != n || rewards.rows() != n || next_obs.rows() != n || random.rows() != n ||
      rewards.cols() != 1 || random.cols() != 1 || next_obs.cols() != obs.cols()) {
    throw ConfigError("dataset: misaligned arrays");
  }
  if (metadata.at("n").get<long>() != n || metadata.at("obs_dim").get<long>() != obs.cols() ||
      metadata.at("action_dim").get<long>() != actions.cols()) {
    throw ConfigError("dataset: metadata does not match the arrays");
  }
  const double rmax = r_max();
  if (n > 0 && (!(rewards.minCoeff() >= 0.0) || !(rewards.maxCoeff() <= rmax))) {
    throw ConfigError("dataset: reward outside [0, r_max]");
  }
  if (!obs.allFinite() || !actions.allFinite() || !next_obs.allFinite()) {
    throw ConfigError("dataset: non-finite entries");
  }
}

Dataset generate_dataset(const PendulumParams& params, const Policy& behavior,
                         const DatasetOptions& options) {
  if (options.n < 1) throw ConfigError("dataset: n must be >= 1");
  if (!(options.eps >= 0.0 && options.eps <= 1.0)) throw ConfigError("dataset: eps must lie in [0, 1]");
  const auto n = static_cast<Eigen::Index>(options.n);
  Dataset d;
  d.obs.resize(n, PendulumEnv::kObsDim);
  d.actions.resize(n, PendulumEnv::kActionDim);
  d.rewards.resize(n, 1);
  d.next_obs.resize(n, PendulumEnv::kObsDim);
  d.random.resize(n, 1);

  PendulumEnv env(params);
  Rng rng(options.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> box(-params.max_torque, params.max_torque);
  std::uint64_t episode = 0;
  Matrix obs = env.reset(episode_seed(options.seed, episode));
  for (Eigen::Index i = 0; i < n; ++i) {
    Matrix action;
    // The coin is drawn on every step so the random/behavior split does not
    // depend on the behavior policy.
    const bool random = coin(rng) < options.eps;
    const double draw = box(rng);
    if (random) action = Matrix::Constant(1, 1, draw);
    else action = behavior(obs);
    const auto step = env.step(action);
    d.obs.row(i) = obs;
    d.actions(i, 0) = std::clamp(action(0, 0), -params.max_torque, params.max_torque);
    d.rewards(i, 0) = step.reward;
    d.next_obs.row(i) = step.obs;
    d.random(i, 0) = random ? 1.0 : 0.0;
    obs = step.obs;
    if (step.done) obs = env.reset(episode_seed(options.seed, ++episode));
  }

  const RewardMap& rm = env.reward_map();
  d.metadata = {
      {"format", "drsac-dataset"},
      {"version", kDatasetVersion},
      {"env", "pendulum"},
      {"params",
       {{"gravity", params.gravity}, {"mass", params.mass}, {"length", params.length},
        {"max_torque", params.max_torque}, {"max_speed", params.max_speed}, {"dt", params.dt},
        {"max_steps", params.max_steps}}},
      {"reward_map", {{"shift", rm.shift}, {"scale", rm.scale}, {"r_max", rm.r_max}}},
      {"eps", options.eps},
      {"seed", options.seed},
      {"n", options.n},
      {"behavior", options.behavior_name},
      {"obs_dim", PendulumEnv::kObsDim},
      {"action_dim", PendulumEnv::kActionDim},
      {"random_actions", static_cast<long>(d.random.sum())},
  };
  d.validate();
  return d;
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  dataset.validate();
  nn::Checkpoint c;
  c.put_tensor("obs", dataset.obs);
  c.put_tensor("actions", dataset.actions);
  c.put_tensor("rewards", dataset.rewards);
  c.put_tensor("next_obs", dataset.next_obs);
  c.put_tensor("random", dataset.random);
  c.put_text("metadata", dataset.metadata.dump(2));
  c.save(path);
}

Dataset load_dataset(const std::string& path) {
  const nn::Checkpoint c = nn::Checkpoint::load(path);
  Dataset d;
  try {
    d.obs = c.tensor("obs");
    d.actions = c.tensor("actions");
    d.rewards = c.tensor("rewards");
    d.next_obs = c.tensor("next_obs");
    d.random = c.tensor("random");
    d.metadata = nlohmann::json::parse(c.text("metadata"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": bad dataset metadata: " + e.what());
  }
  d.validate();
  return d;
}

}  // namespace drsac::envs
