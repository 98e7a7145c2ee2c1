#pragma once

#include <Eigen/Dense>

namespace unilite {

// Batch-major dense storage: rows are samples, columns are features.
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
// Time-major grids for rollout quantities: rows = time steps, cols = envs.
template <class T>
using Grid = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatD = Mat<double>;
using VecD = Vec<double>;

}  // namespace unilite
