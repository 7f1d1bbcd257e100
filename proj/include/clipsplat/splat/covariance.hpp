#pragma once

#include <array>

#include <Eigen/Core>

namespace clipsplat::splat {

/// Rotation matrix of a quaternion (w, x, y, z). The quaternion is normalized first.
template <typename T>
Eigen::Matrix<T, 3, 3> rotation_matrix(const std::array<T, 4>& q);

/// Sigma = R S S^T R^T for a rotation quaternion and positive axis lengths.
/// Throws InvalidParameterError on non-finite input, a zero quaternion or non-positive scales.
template <typename T>
Eigen::Matrix<T, 3, 3> covariance(const std::array<T, 4>& q, const std::array<T, 3>& scale);

}  // namespace clipsplat::splat
