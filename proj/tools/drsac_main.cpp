// drsac: dataset generation, training, evaluation sweeps and verification.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "drsac/cli/commands.hpp"
#include "drsac/errors.hpp"
#include "drsac/runtime.hpp"

namespace fs = std::filesystem;
using namespace drsac;

namespace {

// Config file (if any) with --set key=value overrides applied in order.
KvConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  KvConfig kv = path.empty() ? KvConfig{} : KvConfig::load(path);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set '" + o + "': expected key=value");
    kv.set(o.substr(0, eq), o.substr(eq + 1));
  }
  return kv;
}

std::string absolute(const std::string& path) {
  return path.empty() ? path : fs::absolute(path).lexically_normal().string();
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Distributionally robust soft actor-critic toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Master seed for every random draw of the command")->capture_default_str();

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Flat key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "Override one config key (key=value); repeatable");
  };

  auto* gen = app.add_subcommand("gen-dataset", "Roll out the behavior policy into a dataset file");
  std::string gen_out;
  gen->add_option("--out", gen_out, "Dataset file to write")->required();
  add_config(gen);

  auto* train = app.add_subcommand("train", "Train DR-SAC or SAC on a dataset");
  std::string data_path, train_out;
  bool resume = false;
  train->add_option("--data", data_path, "Dataset file")->required();
  train->add_option("--out", train_out, "Run directory (metrics.csv, checkpoint.bin, config.txt)")
      ->required();
  train->add_flag("--resume", resume, "Continue from <out>/checkpoint.bin");
  add_config(train);

  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints over a perturbation grid");
  std::vector<std::string> checkpoints;
  std::string eval_out;
  eval->add_option("--checkpoint", checkpoints, "name=path or path; repeatable")->required();
  eval->add_option("--out", eval_out, "Sweep CSV to write (stdout if omitted)");
  add_config(eval);

  auto* ver = app.add_subcommand("verify", "Run the randomized property suite");
  verify::VerifyOptions vopts;
  std::string json_out;
  std::vector<std::string> only;
  bool quick = false;
  ver->add_option("--json", json_out, "Write the JSON report here");
  ver->add_option("--only", only, "Run only this property; repeatable");
  ver->add_option("--scale", vopts.scale, "Multiply every instance count")->capture_default_str();
  ver->add_flag("--quick", quick, "Same as --scale 0.1");
  ver->add_flag("--sign-flip-fault", vopts.sign_flip_fault,
                "Flip the sign of the delta penalty in the dual objective (mutation check)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitConfig;
  }

  try {
    if (gen->parsed()) {
      const auto kv = resolve_config(config_path, overrides);
      const auto out = absolute(gen_out);
      const auto ds = cli::cmd_gen_dataset(kv, seed, out);
      std::printf("wrote %ld transitions to %s\n", static_cast<long>(ds.size()), out.c_str());
    } else if (train->parsed()) {
      const auto kv = resolve_config(config_path, overrides);
      const auto r = cli::cmd_train(kv, seed, absolute(data_path), absolute(train_out), resume);
      std::printf("trained %ld steps; metrics %s; checkpoint %s\n", r.steps, r.metrics_path.c_str(),
                  r.checkpoint_path.c_str());
    } else if (eval->parsed()) {
      const auto kv = resolve_config(config_path, overrides);
      std::vector<std::pair<std::string, std::string>> policies;
      for (const auto& c : checkpoints) {
        const auto eq = c.find('=');
        if (eq == std::string::npos) {
          policies.emplace_back(fs::path(c).stem().string(), absolute(c));
        } else {
          policies.emplace_back(c.substr(0, eq), absolute(c.substr(eq + 1)));
        }
      }
      const auto out = absolute(eval_out);
      const auto rows = cli::cmd_eval(kv, seed, policies, out);
      if (out.empty()) std::cout << envs::sweep_csv(rows);
    } else if (ver->parsed()) {
      vopts.seed = seed;
      if (quick) vopts.scale = 0.1;
      vopts.only = {only.begin(), only.end()};
      const auto report = cli::cmd_verify(vopts, absolute(json_out));
      for (const auto& p : report.properties) {
        std::printf("%-22s %s  measured %.3g  tol %.3g  n=%ld  %.2fs\n", p.name.c_str(),
                    p.pass ? "PASS" : "FAIL", p.measured, p.tolerance, p.instances, p.wall_time_s);
        if (!p.pass) std::printf("    %s\n", p.detail.c_str());
      }
      std::printf("verification %s (%.1fs)\n", report.pass() ? "passed" : "FAILED", report.wall_time_s);
      if (!report.pass()) return cli::kExitVerification;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "drsac: %s\n", e.what());
    return cli::exit_code_for(e);
  }
  return cli::kExitOk;
}
