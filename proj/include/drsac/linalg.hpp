#pragma once

#include <Eigen/Core>

namespace drsac {

// Row-major so that a batch of samples is a contiguous block of rows.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace drsac
