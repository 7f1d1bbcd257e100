#include "clipsplat/splat/covariance.hpp"

#include <cmath>

#include "clipsplat/errors.hpp"

namespace clipsplat::splat {

template <typename T>
Eigen::Matrix<T, 3, 3> rotation_matrix(const std::array<T, 4>& q) {
    const T norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (!std::isfinite(static_cast<double>(norm)) || norm == T(0)) {
        throw InvalidParameterError("quaternion must be finite and non-zero");
    }
    const T w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
    Eigen::Matrix<T, 3, 3> r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

template <typename T>
Eigen::Matrix<T, 3, 3> covariance(const std::array<T, 4>& q, const std::array<T, 3>& scale) {
    for (T s : scale) {
        if (!std::isfinite(static_cast<double>(s)) || s <= T(0)) {
            throw InvalidParameterError("scales must be finite and positive");
        }
    }
    const Eigen::Matrix<T, 3, 3> r = rotation_matrix(q);
    const Eigen::Matrix<T, 3, 3> m = r * Eigen::Matrix<T, 3, 1>(scale[0], scale[1], scale[2]).asDiagonal();
    Eigen::Matrix<T, 3, 3> sigma = m * m.transpose();
    // exact symmetry
    sigma = (T(0.5) * (sigma + sigma.transpose())).eval();
    return sigma;
}

template Eigen::Matrix<float, 3, 3> rotation_matrix(const std::array<float, 4>&);
template Eigen::Matrix<double, 3, 3> rotation_matrix(const std::array<double, 4>&);
template Eigen::Matrix<float, 3, 3> covariance(const std::array<float, 4>&, const std::array<float, 3>&);
template Eigen::Matrix<double, 3, 3> covariance(const std::array<double, 4>&, const std::array<double, 3>&);

}  // namespace clipsplat::splat
