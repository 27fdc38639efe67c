#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace neuroseq {

using Index = Eigen::Index;

// Sequences are stored time-major: one row per TR.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

}  // namespace neuroseq
