#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "drsac/linalg.hpp"

namespace drsac {

using Rng = std::mt19937_64;

/// Independent generator number `stream` derived from `seed`.
Rng stream_rng(std::uint64_t seed, std::uint64_t stream);

/// i.i.d. N(0, 1) entries. Distribution objects are created per call so the
/// stream position is a function of the generator state alone.
Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);

/// i.i.d. U(lo, hi) entries.
Matrix uniform(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi);

std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

}  // namespace drsac
