#pragma once

// Plain-text RMDP format, version 1:
//
//   rmdp v1 <n_states> <n_actions> <gamma> <delta> <alpha> <r_max>
//   <n_states reward rows, n_actions values each>
//   <n_states * n_actions transition rows (s-major), n_states values each>
//
// Numbers are written with 17 significant digits so a round trip is exact.
// Blank lines and lines starting with '#' are ignored on read.

#include <iosfwd>
#include <string>

#include "drsac/tabular.hpp"

namespace drsac::tabular {

void write_rmdp(std::ostream& out, const TabularRmdp& rmdp);
std::string format_rmdp(const TabularRmdp& rmdp);

/// Throws ConfigError on malformed input; the result is validated.
TabularRmdp read_rmdp(std::istream& in);
TabularRmdp parse_rmdp(const std::string& text);

void save_rmdp(const std::string& path, const TabularRmdp& rmdp);
TabularRmdp load_rmdp(const std::string& path);

}  // namespace drsac::tabular
