#include "drsac/nn/parameter_store.hpp"

#include <algorithm>
#include <stdexcept>

namespace drsac::nn {

Parameter& ParameterStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Matrix::Zero(rows, cols);
  p->grad = Matrix::Zero(rows, cols);
  p->adam_m = Matrix::Zero(rows, cols);
  p->adam_v = Matrix::Zero(rows, cols);
  params_.push_back(std::move(p));
  return *params_.back();
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const auto& p) { return p->name == name; });
}

Parameter& ParameterStore::get(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

const Parameter& ParameterStore::get(const std::string& name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

std::vector<Parameter*> ParameterStore::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

bool ParameterStore::all_finite() const {
  return std::all_of(params_.begin(), params_.end(),
                     [](const auto& p) { return p->value.allFinite(); });
}

void ParameterStore::require_same_layout(const ParameterStore& other) const {
  if (other.params_.size() != params_.size()) {
    throw std::invalid_argument("parameter stores have different layouts");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = *params_[i];
    const auto& b = *other.params_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) {
      throw std::invalid_argument("parameter stores differ at '" + a.name + "'");
    }
  }
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  require_same_layout(other);
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->value = other.params_[i]->value;
}

void ParameterStore::soft_update_from(const ParameterStore& online, double tau) {
  require_same_layout(online);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Matrix& target = params_[i]->value;
    target = tau * online.params_[i]->value + (1.0 - tau) * target;
  }
}

double ParameterStore::max_abs_diff(const ParameterStore& other) const {
  require_same_layout(other);
  double worst = 0.0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i]->value.size() == 0) continue;
    worst = std::max(worst, (params_[i]->value - other.params_[i]->value).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace drsac::nn
