#pragma once

#include <Eigen/Dense>

namespace fsood {

/// Row-major so that each row is one embedding or feature vector.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace fsood
