#pragma once

#include <memory>
#include <string>
#include <vector>

#include "drsac/linalg.hpp"

namespace drsac::nn {

/// A named dense tensor with its gradient buffer and Adam moments.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
};

/// Owns the parameters of one or more networks. Parameter addresses are
/// stable for the lifetime of the store.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  /// Adds a zero-initialized parameter. Throws on duplicate names.
  Parameter& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  bool contains(const std::string& name) const;
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;

  void zero_grad();
  bool all_finite() const;

  /// Number of optimizer updates applied so far (drives bias correction).
  long optimizer_step = 0;

  /// Copies values from a store with identical names and shapes.
  void copy_values_from(const ParameterStore& other);
  /// this <- tau * online + (1 - tau) * this, per entry.
  void soft_update_from(const ParameterStore& online, double tau);
  /// max |this - other| over all values.
  double max_abs_diff(const ParameterStore& other) const;

 private:
  void require_same_layout(const ParameterStore& other) const;

  std::vector<std::unique_ptr<Parameter>> params_;
};

}  // namespace drsac::nn
