#pragma once

// Randomized property suite over the dual solver, the tabular operators, the
// functional g, the agent targets and every loss gradient. Each property has
// its own RNG stream derived from one master seed.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace drsac::verify {

struct PropertyResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;   // worst observed error (or failure count, see detail)
  double tolerance = 0.0;  // pass iff measured <= tolerance (and runtime limits hold)
  long instances = 0;
  double wall_time_s = 0.0;
  std::string detail;
};

struct VerificationReport {
  std::uint64_t seed = 0;
  bool sign_flip_fault = false;
  std::vector<PropertyResult> properties;
  double wall_time_s = 0.0;

  bool pass() const;
  nlohmann::json to_json() const;
};

struct VerifyOptions {
  std::uint64_t seed = 20240917;
  // Flips the sign of the delta penalty in the dual objective while the
  // suite runs (mutation sanity check).
  bool sign_flip_fault = false;
  // Instance counts are multiplied by this factor (at least one each);
  // 1 gives the full acceptance counts.
  double scale = 1.0;
  // Empty runs everything.
  std::set<std::string> only;
};

/// Property names in execution order.
const std::vector<std::string>& property_names();

VerificationReport run_verification(const VerifyOptions& options);

/// Throws ConfigError when `report` does not follow the report schema or its
/// overall verdict disagrees with the per-property verdicts.
void validate_report_json(const nlohmann::json& report);

}  // namespace drsac::verify
