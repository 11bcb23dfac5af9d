#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drsac/envs/pendulum.hpp"
#include "drsac/envs/policy.hpp"

namespace drsac::envs {

struct EpisodeResult {
  double total_reward = 0.0;  // raw (unshifted) reward
  int steps = 0;
  std::uint64_t seed = 0;
};

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<EpisodeResult> episodes;
};

/// Seed of episode k under a base seed (splitmix64 of both).
std::uint64_t episode_seed(std::uint64_t base, std::uint64_t k);

EpisodeResult run_episode(const Policy& policy, const PendulumParams& params,
                          const PerturbationSpec& spec, std::uint64_t seed);

EvalResult evaluate(const Policy& policy, const PendulumParams& params,
                    const PerturbationSpec& spec, int episodes, std::uint64_t seed);

/// One grid point of a sweep. `param` is one of gravity, mass, length
/// (absolute values), gaussian_noise, cauchy_noise (noise scale),
/// action_random_prob, or nominal (value ignored).
struct SweepPoint {
  std::string param;
  double value = 0.0;

  PerturbationSpec spec() const;
};

struct NamedPolicy {
  std::string name;
  Policy policy;
};

struct SweepRow {
  std::string policy;
  std::string param;
  double value = 0.0;
  double mean = 0.0;
  double std = 0.0;
  int episodes = 0;
  std::uint64_t seed = 0;
};

/// Evaluates every policy at every grid point. Rows are sorted by
/// (policy, param, value) whatever the input order.
std::vector<SweepRow> sweep(const std::vector<NamedPolicy>& policies, const PendulumParams& params,
                            const std::vector<SweepPoint>& grid, int episodes, std::uint64_t seed);

/// CSV with header policy,param,value,mean,std,episodes,seed (reals in shortest round-trip form).
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace drsac::envs
