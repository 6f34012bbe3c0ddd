#pragma once

#include <Eigen/Dense>

namespace probetraj {

// Row-major so that one token's state (or one basis vector) is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace probetraj
