#pragma once

// The four commands behind the drsac tool. Each takes a resolved key-value
// configuration (file contents with command-line overrides applied) plus
// the run seed; unknown keys are rejected. Seeds are never read from config
// files, so a run is fully named by its config text and --seed.

#include <cstdint>
#include <exception>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "drsac/agent/trainer.hpp"
#include "drsac/envs/dataset.hpp"
#include "drsac/envs/evaluation.hpp"
#include "drsac/kv_config.hpp"
#include "drsac/verify.hpp"

namespace drsac::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // anything not covered below
  kExitConfig = 2,
  kExitVerification = 3,
  kExitNumerical = 4,
  kExitIo = 5,
};

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

/// Keys: n (100000), eps (0.5), behavior (swing_up).
const std::set<std::string>& gen_dataset_keys();
envs::Dataset cmd_gen_dataset(const KvConfig& config, std::uint64_t seed, const std::string& out);

/// Agent keys (except seed) plus steps, log_every, eval_every,
/// eval_episodes, checkpoint_every. Writes metrics.csv, checkpoint.bin and
/// the resolved config.txt under out_dir.
std::set<std::string> train_keys();
agent::TrainResult cmd_train(const KvConfig& config, std::uint64_t seed, const std::string& data,
                             const std::string& out_dir, bool resume = false);

/// Keys: episodes (50) and grid, a ';'-separated list of param=v1,v2,...
/// entries (or the bare word nominal); default "nominal".
const std::set<std::string>& eval_keys();
std::vector<envs::SweepPoint> parse_grid(const std::string& text);
/// Policies are (name, checkpoint path) pairs. Writes the sweep CSV to
/// `out` unless it is empty.
std::vector<envs::SweepRow> cmd_eval(const KvConfig& config, std::uint64_t seed,
                                     const std::vector<std::pair<std::string, std::string>>& policies,
                                     const std::string& out);

/// Runs the suite and writes the JSON report to `json_out` unless empty.
verify::VerificationReport cmd_verify(const verify::VerifyOptions& options,
                                      const std::string& json_out);

}  // namespace drsac::cli
