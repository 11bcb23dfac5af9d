#include "drsac/cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "drsac/errors.hpp"
#include "drsac/nn/checkpoint.hpp"

namespace drsac::cli {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kTrainOnlyKeys = {"steps", "log_every", "eval_every", "eval_episodes",
                                              "checkpoint_every"};

void reject_seed(const KvConfig& config) {
  if (config.has("seed")) throw ConfigError("config key 'seed': the seed is set with --seed only");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const std::invalid_argument*>(&e)) {
    return kExitConfig;
  }
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const ConvergenceError*>(&e)) {
    return kExitNumerical;
  }
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) {
    return kExitIo;
  }
  return kExitFailure;
}

// ---- gen-dataset ------------------------------------------------------------

const std::set<std::string>& gen_dataset_keys() {
  static const std::set<std::string> keys = {"n", "eps", "behavior"};
  return keys;
}

envs::Dataset cmd_gen_dataset(const KvConfig& config, std::uint64_t seed, const std::string& out) {
  reject_seed(config);
  config.require_known(gen_dataset_keys());
  envs::DatasetOptions options;
  options.n = config.get_int("n", options.n);
  options.eps = config.get_double("eps", options.eps);
  options.behavior_name = config.get_string("behavior", options.behavior_name);
  options.seed = seed;
  if (options.n < 1) throw ConfigError("config key 'n': must be positive");
  if (!(options.eps >= 0.0 && options.eps <= 1.0)) throw ConfigError("config key 'eps': must be in [0, 1]");
  if (options.behavior_name != "swing_up") {
    throw ConfigError("config key 'behavior': only swing_up is available");
  }
  const envs::PendulumParams params;
  auto dataset = envs::generate_dataset(params, envs::swing_up_policy(params), options);
  if (!out.empty()) envs::save_dataset(out, dataset);
  return dataset;
}

// ---- train --------------------------------------------------------------------

std::set<std::string> train_keys() {
  std::set<std::string> keys = agent::AgentConfig::keys();
  keys.erase("seed");
  keys.insert(kTrainOnlyKeys.begin(), kTrainOnlyKeys.end());
  return keys;
}

agent::TrainResult cmd_train(const KvConfig& config, std::uint64_t seed, const std::string& data,
                             const std::string& out_dir, bool resume) {
  reject_seed(config);
  config.require_known(train_keys());
  KvConfig agent_kv;
  for (const auto& [key, value] : config.entries()) {
    if (!kTrainOnlyKeys.contains(key)) agent_kv.set(key, value);
  }
  auto agent_config = agent::AgentConfig::from_kv(agent_kv);
  agent_config.seed = seed;
  agent_config.validate();

  agent::TrainOptions options;
  options.steps = config.get_int("steps", options.steps);
  options.log_every = config.get_int("log_every", options.log_every);
  options.eval_every = config.get_int("eval_every", options.eval_every);
  options.eval_episodes = static_cast<int>(config.get_int("eval_episodes", options.eval_episodes));
  options.checkpoint_every = config.get_int("checkpoint_every", options.checkpoint_every);
  options.eval_seed = seed;
  options.out_dir = out_dir;
  options.resume = resume;
  if (out_dir.empty()) throw ConfigError("train: an output directory is required");

  if (!fs::exists(data)) throw IoError("dataset not found: " + data);
  const auto dataset = envs::load_dataset(data);
  dataset.validate();

  agent::Agent agent(agent_config, static_cast<int>(dataset.obs.cols()),
                     static_cast<int>(dataset.actions.cols()), dataset.r_max());
  fs::create_directories(out_dir);
  KvConfig resolved = config;
  resolved.set("seed", std::to_string(seed));
  write_text((fs::path(out_dir) / "config.txt").string(), resolved.serialize());
  return agent::train(agent,
                      agent::to_batch(dataset.obs, dataset.actions, dataset.rewards, dataset.next_obs),
                      options);
}

// ---- eval -----------------------------------------------------------------------

const std::set<std::string>& eval_keys() {
  static const std::set<std::string> keys = {"episodes", "grid"};
  return keys;
}

std::vector<envs::SweepPoint> parse_grid(const std::string& text) {
  std::vector<envs::SweepPoint> grid;
  std::stringstream entries(text);
  std::string entry;
  while (std::getline(entries, entry, ';')) {
    entry = trim(entry);
    if (entry.empty()) continue;
    if (entry == "nominal") {
      grid.push_back({"nominal", 0.0});
      continue;
    }
    const auto eq = entry.find('=');
    if (eq == std::string::npos) throw ConfigError("grid entry '" + entry + "': expected param=v1,v2,...");
    const std::string param = trim(entry.substr(0, eq));
    std::stringstream values(entry.substr(eq + 1));
    std::string value;
    bool any = false;
    while (std::getline(values, value, ',')) {
      KvConfig one;
      one.set("grid", trim(value));
      grid.push_back({param, one.get_double("grid", 0.0)});
      any = true;
    }
    if (!any) throw ConfigError("grid entry '" + entry + "': no values");
  }
  for (const auto& p : grid) p.spec().validate();
  return grid;
}

std::vector<envs::SweepRow> cmd_eval(const KvConfig& config, std::uint64_t seed,
                                     const std::vector<std::pair<std::string, std::string>>& policies,
                                     const std::string& out) {
  reject_seed(config);
  config.require_known(eval_keys());
  const int episodes = static_cast<int>(config.get_int("episodes", 50));
  if (episodes < 1) throw ConfigError("config key 'episodes': must be positive");
  const auto grid = parse_grid(config.get_string("grid", "nominal"));
  if (policies.empty()) throw ConfigError("eval: no checkpoint given");

  std::vector<envs::NamedPolicy> named;
  std::set<std::string> names;
  for (const auto& [name, path] : policies) {
    if (!names.insert(name).second) throw ConfigError("eval: duplicate policy name '" + name + "'");
    if (!fs::exists(path)) throw IoError("checkpoint not found: " + path);
    const auto agent = agent::Agent::from_checkpoint(nn::Checkpoint::load(path));
    named.push_back({name, agent->snapshot_policy()});
  }
  auto rows = envs::sweep(named, envs::PendulumParams{}, grid, episodes, seed);
  if (!out.empty()) write_text(out, envs::sweep_csv(rows));
  return rows;
}

// ---- verify ---------------------------------------------------------------------

verify::VerificationReport cmd_verify(const verify::VerifyOptions& options,
                                      const std::string& json_out) {
  auto report = verify::run_verification(options);
  if (!json_out.empty()) write_text(json_out, report.to_json().dump(2) + "\n");
  return report;
}

}  // namespace drsac::cli
