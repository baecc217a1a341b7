#pragma once

#include <Eigen/Dense>

namespace claimsrisk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Row-major storage for lookup tables, where one row is one code.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace claimsrisk
