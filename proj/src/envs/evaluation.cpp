#include "drsac/envs/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <tuple>

#include "drsac/errors.hpp"
#include "drsac/kv_config.hpp"

namespace drsac::envs {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t episode_seed(std::uint64_t base, std::uint64_t k) {
  return splitmix64(splitmix64(base) ^ k);
}

EpisodeResult run_episode(const Policy& policy, const PendulumParams& params,
                          const PerturbationSpec& spec, std::uint64_t seed) {
  PendulumEnv env(params, spec);
  Matrix obs = env.reset(seed);
  EpisodeResult r;
  r.seed = seed;
  while (true) {
    const auto step = env.step(policy(obs));
    r.total_reward += step.raw_reward;
    ++r.steps;
    obs = step.obs;
    if (step.done) break;
  }
  return r;
}

EvalResult evaluate(const Policy& policy, const PendulumParams& params,
                    const PerturbationSpec& spec, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  EvalResult out;
  double sum = 0.0;
  for (int k = 0; k < episodes; ++k) {
    out.episodes.push_back(run_episode(policy, params, spec, episode_seed(seed, k)));
    sum += out.episodes.back().total_reward;
  }
  out.mean = sum / episodes;
  double ss = 0.0;
  for (const auto& e : out.episodes) ss += (e.total_reward - out.mean) * (e.total_reward - out.mean);
  out.std = std::sqrt(ss / episodes);
  return out;
}

PerturbationSpec SweepPoint::spec() const {
  PerturbationSpec s;
  if (param == "gravity" || param == "mass" || param == "length") {
    s.param_overrides[param] = value;
  } else if (param == "gaussian_noise") {
    s.obs_noise = ObsNoise::kGaussian;
    s.obs_noise_scale = value;
  } else if (param == "cauchy_noise") {
    s.obs_noise = ObsNoise::kCauchy;
    s.obs_noise_scale = value;
  } else if (param == "action_random_prob") {
    s.action_random_prob = value;
  } else if (param != "nominal") {
    throw ConfigError("sweep: unknown parameter '" + param + "'");
  }
  s.validate();
  return s;
}

std::vector<SweepRow> sweep(const std::vector<NamedPolicy>& policies, const PendulumParams& params,
                            const std::vector<SweepPoint>& grid, int episodes,
                            std::uint64_t seed) {
  std::vector<SweepRow> rows;
  for (const auto& p : policies) {
    for (const auto& point : grid) {
      const auto r = evaluate(p.policy, params, point.spec(), episodes, seed);
      rows.push_back({p.name, point.param, point.value, r.mean, r.std, episodes, seed});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.policy, a.param, a.value) < std::tie(b.policy, b.param, b.value);
  });
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "policy,param,value,mean,std,episodes,seed\n";
  for (const auto& r : rows) {
    out += r.policy + "," + r.param + "," + format_double(r.value) + "," + format_double(r.mean) +
           "," + format_double(r.std) + "," + std::to_string(r.episodes) + "," +
           std::to_string(r.seed) + "\n";
  }
  return out;
}

}  // namespace drsac::envs
