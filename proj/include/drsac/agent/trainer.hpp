#pragma once

// Training loop with a metrics CSV, periodic checkpoints and resume.
//
// Files under out_dir: metrics.csv (one row per logged step, reals in
// shortest round-trip form) and checkpoint.bin (full agent state, Adam
// moments and RNG included). A resumed run truncates the CSV to the checkpoint step, so a run that is
// interrupted and resumed writes the same bytes as an uninterrupted one.

#include <string>

#include "drsac/agent/agent.hpp"
#include "drsac/envs/evaluation.hpp"
#include "drsac/envs/pendulum.hpp"

namespace drsac::agent {

struct TrainOptions {
  long steps = 1000;
  long log_every = 1;
  long eval_every = 0;  // 0 disables periodic evaluation
  int eval_episodes = 10;
  std::uint64_t eval_seed = 2024;
  envs::PendulumParams eval_params;
  long checkpoint_every = 0;  // 0: only at the end
  std::string out_dir;        // empty: keep everything in memory
  bool resume = false;
};

struct TrainResult {
  long steps = 0;
  StepMetrics last;
  std::string metrics_path;
  std::string checkpoint_path;
};

std::string metrics_header();
/// One CSV row; the evaluation columns stay empty when `eval` is null.
std::string metrics_row(const StepMetrics& m, const envs::EvalResult* eval);

/// Runs `options.steps` gradient steps in total (counting steps restored
/// from a checkpoint). A non-finite loss, target or gradient aborts with
/// NumericalError naming the last good checkpoint.
TrainResult train(Agent& agent, const functional::TransitionBatch& data,
                  const TrainOptions& options);

}  // namespace drsac::agent
