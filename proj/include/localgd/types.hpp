#pragma once

#include <Eigen/Dense>

namespace localgd {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;

/// Model parameters w.
using Weights = Vector;

inline constexpr const char* kVersion = "0.3.0";

}  // namespace localgd
