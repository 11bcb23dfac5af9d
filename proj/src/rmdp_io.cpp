#include "drsac/rmdp_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "drsac/errors.hpp"

namespace drsac::tabular {

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Splits the payload into whitespace-separated tokens, skipping comments.
std::vector<std::string> tokenize(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
  }
  return tokens;
}

double to_double(const std::string& tok) {
  char* end = nullptr;
  const double x = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw ConfigError("rmdp: not a number: '" + tok + "'");
  return x;
}

int to_int(const std::string& tok) {
  char* end = nullptr;
  const long x = std::strtol(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0' || x <= 0 || x > 1'000'000) {
    throw ConfigError("rmdp: bad dimension '" + tok + "'");
  }
  return static_cast<int>(x);
}

}  // namespace

void write_rmdp(std::ostream& out, const TabularRmdp& rmdp) {
  out << "rmdp v1 " << rmdp.n_states << ' ' << rmdp.n_actions << ' ' << fmt17(rmdp.gamma) << ' '
      << fmt17(rmdp.delta) << ' ' << fmt17(rmdp.alpha) << ' ' << fmt17(rmdp.r_max) << '\n';
  for (int s = 0; s < rmdp.n_states; ++s) {
    for (int a = 0; a < rmdp.n_actions; ++a) out << (a ? " " : "") << fmt17(rmdp.reward(s, a));
    out << '\n';
  }
  for (const auto& row : rmdp.transitions) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? " " : "") << fmt17(row[j]);
    out << '\n';
  }
}

std::string format_rmdp(const TabularRmdp& rmdp) {
  std::ostringstream os;
  write_rmdp(os, rmdp);
  return os.str();
}

TabularRmdp read_rmdp(std::istream& in) {
  const std::vector<std::string> tok = tokenize(in);
  if (tok.size() < 8 || tok[0] != "rmdp") throw ConfigError("rmdp: missing header");
  if (tok[1] != "v1") throw ConfigError("rmdp: unsupported format version '" + tok[1] + "'");

  TabularRmdp rmdp;
  rmdp.n_states = to_int(tok[2]);
  rmdp.n_actions = to_int(tok[3]);
  rmdp.gamma = to_double(tok[4]);
  rmdp.delta = to_double(tok[5]);
  rmdp.alpha = to_double(tok[6]);
  rmdp.r_max = to_double(tok[7]);

  const std::size_t ns = static_cast<std::size_t>(rmdp.n_states);
  const std::size_t na = static_cast<std::size_t>(rmdp.n_actions);
  const std::size_t expected = 8 + ns * na + ns * na * ns;
  if (tok.size() != expected) {
    throw ConfigError("rmdp: expected " + std::to_string(expected) + " tokens, found " +
                      std::to_string(tok.size()));
  }
  std::size_t k = 8;
  rmdp.reward = Matrix(rmdp.n_states, rmdp.n_actions);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t a = 0; a < na; ++a) {
      rmdp.reward(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = to_double(tok[k++]);
    }
  }
  rmdp.transitions.assign(ns * na, std::vector<double>(ns));
  for (auto& row : rmdp.transitions) {
    for (double& p : row) p = to_double(tok[k++]);
  }
  try {
    rmdp.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return rmdp;
}

TabularRmdp parse_rmdp(const std::string& text) {
  std::istringstream is(text);
  return read_rmdp(is);
}

void save_rmdp(const std::string& path, const TabularRmdp& rmdp) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_rmdp(out, rmdp);
}

TabularRmdp load_rmdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_rmdp(in);
}

}  // namespace drsac::tabular
