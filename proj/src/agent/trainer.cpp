#include "drsac/agent/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "drsac/errors.hpp"
#include "drsac/kv_config.hpp"

namespace drsac::agent {

namespace fs = std::filesystem;

namespace {

// Keeps the header and every row whose step is <= `step`.
void truncate_metrics(const std::string& path, long step) {
  std::ifstream in(path);
  if (!in) throw IoError("resume: cannot read " + path);
  std::string line, kept;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      if (line != metrics_header()) throw IoError("resume: unexpected header in " + path);
      kept += line + "\n";
      header = false;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) break;  // torn final line
    if (std::stol(line.substr(0, comma)) > step) break;
    kept += line + "\n";
  }
  in.close();
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("resume: cannot rewrite " + path);
  out << kept;
}

}  // namespace

std::string metrics_header() {
  return "step,v_loss,q_loss,pi_loss,alpha_loss,alpha,entropy,target_mean,g_objective,vae_loss,"
         "eval_mean,eval_std";
}

std::string metrics_row(const StepMetrics& m, const envs::EvalResult* eval) {
  std::string row = std::to_string(m.step);
  for (double x : {m.v_loss, m.q_loss, m.pi_loss, m.alpha_loss, m.alpha, m.entropy, m.target_mean,
                   m.g_objective, m.vae_loss}) {
    row += "," + format_double(x);
  }
  row += eval ? "," + format_double(eval->mean) + "," + format_double(eval->std) : ",,";
  return row;
}

TrainResult train(Agent& agent, const functional::TransitionBatch& data,
                  const TrainOptions& options) {
  if (options.steps < 0 || options.log_every < 1 || options.eval_every < 0 ||
      options.checkpoint_every < 0 || options.eval_episodes < 1) {
    throw ConfigError("train: bad options");
  }
  data.validate(agent.r_max());

  TrainResult result;
  const bool files = !options.out_dir.empty();
  std::ofstream csv;
  if (files) {
    fs::create_directories(options.out_dir);
    result.metrics_path = (fs::path(options.out_dir) / "metrics.csv").string();
    result.checkpoint_path = (fs::path(options.out_dir) / "checkpoint.bin").string();
    if (options.resume) {
      if (!fs::exists(result.checkpoint_path)) {
        throw IoError("resume: no checkpoint at " + result.checkpoint_path);
      }
      agent.load(nn::Checkpoint::load(result.checkpoint_path));
      truncate_metrics(result.metrics_path, agent.steps());
      csv.open(result.metrics_path, std::ios::app | std::ios::binary);
    } else {
      csv.open(result.metrics_path, std::ios::trunc | std::ios::binary);
      csv << metrics_header() << "\n";
    }
    if (!csv) throw IoError("cannot write " + result.metrics_path);
  }

  if (agent.steps() == 0 && agent.robust() && agent.config().vae_pretrain_steps > 0) {
    agent.pretrain_vae(data, agent.config().vae_pretrain_steps);
  }

  long last_good = -1;
  auto checkpoint = [&]() {
    if (!files) return;
    csv.flush();
    nn::Checkpoint ckpt;
    agent.save(ckpt);
    ckpt.save(result.checkpoint_path);
    last_good = agent.steps();
  };

  while (agent.steps() < options.steps) {
    StepMetrics m;
    try {
      m = agent.gradient_step(data);
      if (!agent.all_finite()) {
        throw NumericalError("watchdog: non-finite parameter at step " + std::to_string(m.step));
      }
    } catch (const NumericalError& e) {
      if (files) csv.flush();
      std::string where = last_good >= 0
                              ? "; last good checkpoint " + result.checkpoint_path + " (step " +
                                    std::to_string(last_good) + ")"
                              : "; no checkpoint written";
      throw NumericalError(e.what() + where);
    }
    result.last = m;
    const bool eval_now = options.eval_every > 0 && m.step % options.eval_every == 0;
    envs::EvalResult eval;
    if (eval_now) {
      eval = envs::evaluate(agent.snapshot_policy(), options.eval_params, {},
                            options.eval_episodes, options.eval_seed);
    }
    if (files && (eval_now || m.step % options.log_every == 0)) {
      csv << metrics_row(m, eval_now ? &eval : nullptr) << "\n";
    }
    if (options.checkpoint_every > 0 && m.step % options.checkpoint_every == 0) checkpoint();
  }
  if (last_good != agent.steps()) checkpoint();
  result.steps = agent.steps();
  return result;
}

}  // namespace drsac::agent
