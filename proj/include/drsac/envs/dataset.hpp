#pragma once

// Offline transition dataset. Stored in the named-tensor container with
// tensors obs, actions, rewards, next_obs, random (0/1 flags) and a JSON
// metadata text block.

#include <cstdint>
#include <string>

#include <json.hpp>

#include "drsac/envs/pendulum.hpp"
#include "drsac/envs/policy.hpp"
#include "drsac/linalg.hpp"
#include "drsac/rng.hpp"

namespace drsac::envs {

inline constexpr int kDatasetVersion = 1;

struct Dataset {
  Matrix obs;
  Matrix actions;
  Matrix rewards;   // n x 1, shifted into [0, r_max]
  Matrix next_obs;
  Matrix random;    // n x 1, 1 where the action was the uniform draw
  nlohmann::json metadata;

  Eigen::Index size() const { return obs.rows(); }
  double r_max() const { return metadata.at("reward_map").at("r_max").get<double>(); }
  /// Throws ConfigError on misaligned arrays, rewards outside [0, r_max] or
  /// a metadata block that does not match the schema.
  void validate() const;
};

struct DatasetOptions {
  long n = 100000;
  double eps = 0.5;
  std::uint64_t seed = 0;
  std::string behavior_name = "swing_up";
};

/// Rolls out `behavior` in the nominal environment with eps-greedy noise:
/// each action is U(-max_torque, max_torque) with probability eps.
/// Episodes restart every max_steps steps.
Dataset generate_dataset(const PendulumParams& params, const Policy& behavior,
                         const DatasetOptions& options);

void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

/// Throws ConfigError when required metadata keys are missing or mistyped.
void validate_metadata(const nlohmann::json& metadata);

}  // namespace drsac::envs
