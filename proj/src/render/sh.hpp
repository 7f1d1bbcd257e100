#pragma once

#include <array>

namespace clipsplat::render::sh {

inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kC2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                              -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kC3 = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                              0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                              -0.5900435899266435};

/// Real SH basis in the splatting convention, evaluated at a unit direction.
template <typename T>
std::array<T, 16> basis(int degree, T x, T y, T z) {
    std::array<T, 16> b{};
    b[0] = T(kC0);
    if (degree < 1) return b;
    b[1] = T(-kC1) * y;
    b[2] = T(kC1) * z;
    b[3] = T(-kC1) * x;
    if (degree < 2) return b;
    const T xx = x * x, yy = y * y, zz = z * z;
    b[4] = T(kC2[0]) * x * y;
    b[5] = T(kC2[1]) * y * z;
    b[6] = T(kC2[2]) * (2 * zz - xx - yy);
    b[7] = T(kC2[3]) * x * z;
    b[8] = T(kC2[4]) * (xx - yy);
    if (degree < 3) return b;
    b[9] = T(kC3[0]) * y * (3 * xx - yy);
    b[10] = T(kC3[1]) * x * y * z;
    b[11] = T(kC3[2]) * y * (4 * zz - xx - yy);
    b[12] = T(kC3[3]) * z * (2 * zz - 3 * xx - 3 * yy);
    b[13] = T(kC3[4]) * x * (4 * zz - xx - yy);
    b[14] = T(kC3[5]) * z * (xx - yy);
    b[15] = T(kC3[6]) * x * (xx - 3 * yy);
    return b;
}

/// d basis[k] / d (x, y, z).
template <typename T>
std::array<std::array<T, 3>, 16> basis_jacobian(int degree, T x, T y, T z) {
    std::array<std::array<T, 3>, 16> j{};
    if (degree < 1) return j;
    j[1] = {0, T(-kC1), 0};
    j[2] = {0, 0, T(kC1)};
    j[3] = {T(-kC1), 0, 0};
    if (degree < 2) return j;
    const T xx = x * x, yy = y * y, zz = z * z;
    j[4] = {T(kC2[0]) * y, T(kC2[0]) * x, 0};
    j[5] = {0, T(kC2[1]) * z, T(kC2[1]) * y};
    j[6] = {-2 * T(kC2[2]) * x, -2 * T(kC2[2]) * y, 4 * T(kC2[2]) * z};
    j[7] = {T(kC2[3]) * z, 0, T(kC2[3]) * x};
    j[8] = {2 * T(kC2[4]) * x, -2 * T(kC2[4]) * y, 0};
    if (degree < 3) return j;
    j[9] = {6 * T(kC3[0]) * x * y, T(kC3[0]) * (3 * xx - 3 * yy), 0};
    j[10] = {T(kC3[1]) * y * z, T(kC3[1]) * x * z, T(kC3[1]) * x * y};
    j[11] = {-2 * T(kC3[2]) * x * y, T(kC3[2]) * (4 * zz - xx - 3 * yy), 8 * T(kC3[2]) * y * z};
    j[12] = {-6 * T(kC3[3]) * x * z, -6 * T(kC3[3]) * y * z, T(kC3[3]) * (6 * zz - 3 * xx - 3 * yy)};
    j[13] = {T(kC3[4]) * (4 * zz - 3 * xx - yy), -2 * T(kC3[4]) * x * y, 8 * T(kC3[4]) * x * z};
    j[14] = {2 * T(kC3[5]) * x * z, -2 * T(kC3[5]) * y * z, T(kC3[5]) * (xx - yy)};
    j[15] = {T(kC3[6]) * (3 * xx - 3 * yy), -6 * T(kC3[6]) * x * y, 0};
    return j;
}

}  // namespace clipsplat::render::sh
