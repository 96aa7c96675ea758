#pragma once

#include <Eigen/Dense>

namespace deepest {

// Frame-major matrices: one row per analysis frame.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace deepest
