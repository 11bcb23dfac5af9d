#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "drsac/errors.hpp"
#include "drsac/instances.hpp"
#include "drsac/rmdp_io.hpp"

namespace tab = drsac::tabular;
namespace inst = drsac::instances;

TEST_CASE("text round trip is exact") {
  inst::Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = inst::random_rmdp(rng, {1 + trial % 5, 1 + trial % 3, 0.37 + 0.01 * trial,
                                           0.123456789 * trial, 0.1 / 3.0, 1.0, 0.3});
    const auto back = tab::parse_rmdp(tab::format_rmdp(m));
    CHECK(back.n_states == m.n_states);
    CHECK(back.n_actions == m.n_actions);
    CHECK(back.gamma == m.gamma);
    CHECK(back.delta == m.delta);
    CHECK(back.alpha == m.alpha);
    CHECK(back.r_max == m.r_max);
    CHECK(back.reward == m.reward);
    CHECK(back.transitions == m.transitions);
  }
}

TEST_CASE("file round trip") {
  inst::Rng rng(2);
  const auto m = inst::random_rmdp(rng, {3, 2, 0.9, 0.2, 0.1});
  const auto path = (std::filesystem::temp_directory_path() / "drsac_rmdp_io_test.txt").string();
  tab::save_rmdp(path, m);
  const auto back = tab::load_rmdp(path);
  std::remove(path.c_str());
  CHECK(back.transitions == m.transitions);
  CHECK_THROWS(tab::load_rmdp(path));
}

TEST_CASE("comments and blank lines are ignored") {
  const std::string text =
      "# two states, one action\n"
      "rmdp v1 2 1 0.5 0.1 0 1\n"
      "\n"
      "0.25\n"
      "1\n"
      "# transitions\n"
      "0.5 0.5\n"
      "1 0\n";
  const auto m = tab::parse_rmdp(text);
  CHECK(m.reward(1, 0) == 1.0);
  CHECK(m.next(1, 0)[0] == 1.0);
}

TEST_CASE("malformed input is rejected") {
  CHECK_THROWS_AS(tab::parse_rmdp(""), drsac::ConfigError);
  CHECK_THROWS_AS(tab::parse_rmdp("rmdp v2 1 1 0.5 0 0 1\n0\n1\n"), drsac::ConfigError);
  CHECK_THROWS_AS(tab::parse_rmdp("rmdp v1 1 1 0.5 0 0 1\n0\n"), drsac::ConfigError);
  CHECK_THROWS_AS(tab::parse_rmdp("rmdp v1 1 1 0.5 0 0 1\nx\n1\n"), drsac::ConfigError);
  // Row does not sum to one.
  CHECK_THROWS_AS(tab::parse_rmdp("rmdp v1 1 1 0.5 0 0 1\n0\n0.9\n"), drsac::ConfigError);
  // Reward above r_max.
  CHECK_THROWS_AS(tab::parse_rmdp("rmdp v1 1 1 0.5 0 0 1\n2\n1\n"), drsac::ConfigError);
}
