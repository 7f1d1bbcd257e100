#pragma once

#include <cmath>
#include <random>

#include <Eigen/Geometry>

#include "clipsplat/render/render.hpp"
#include "clipsplat/splat/camera.hpp"
#include "clipsplat/splat/gaussian_set.hpp"

namespace clipsplat::testing {

inline constexpr int kViewSize = 64;

/// Camera 4 units in front of the origin looking down +z.
inline splat::Camera test_camera(int size = kViewSize) {
    splat::Camera cam;
    cam.translation = Eigen::Vector3d(0, 0, 4);
    cam.fx = cam.fy = 60.0;
    cam.cx = cam.cy = (size - 1) / 2.0;
    cam.width = cam.height = size;
    return cam;
}

/// Random model whose Gaussians sit well inside a 64x64 view with distinct depths and
/// moderate opacities, so finite differences stay away from the alpha clamp and sort swaps.
template <typename T>
splat::BasicGaussianSet<T> random_model(splat::Modality modality, std::size_t n, std::uint64_t seed,
                                        int sh_degree = 0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

    auto m = splat::BasicGaussianSet<T>::zeros(modality, n, sh_degree);
    const bool is3d = modality == splat::Modality::Scene3D;
    for (std::size_t i = 0; i < n; ++i) {
        const double depth = -1.0 + 2.0 * (double(i) + 0.5 + 0.3 * (u(rng) - 0.5)) / double(n);
        if (is3d) {
            m.means[3 * i] = T(uni(-0.8, 0.8));
            m.means[3 * i + 1] = T(uni(-0.8, 0.8));
            m.means[3 * i + 2] = T(depth);
        } else {
            m.means[3 * i] = T(uni(12, 52));
            m.means[3 * i + 1] = T(uni(12, 52));
            m.means[3 * i + 2] = T(depth);
        }
        Eigen::Vector4d q(normal(rng), normal(rng), normal(rng), normal(rng));
        q /= q.norm();
        for (int c = 0; c < 4; ++c) m.rotations[4 * i + c] = T(q[c]);
        for (int a = 0; a < 3; ++a) {
            if (modality == splat::Modality::Image2D && a == 0) continue;
            m.log_scales[3 * i + a] = T(is3d ? std::log(uni(0.06, 0.25)) : std::log(uni(1.5, 6.0)));
        }
        m.opacity_logits[i] = T(uni(-2.0, 2.5));
        const int k = m.sh_coeffs();
        for (int c = 0; c < k * 3; ++c) {
            const double range = c < 3 ? 1.5 : 0.3;
            m.sh[i * k * 3 + c] = T(uni(-range, range));
        }
        if (modality == splat::Modality::Video) {
            m.time_centers[i] = T(uni(0.2, 0.8));
            m.log_time_scales[i] = T(std::log(uni(0.2, 0.6)));
            m.velocities[2 * i] = T(uni(-15, 15));
            m.velocities[2 * i + 1] = T(uni(-15, 15));
        }
    }
    return m;
}

inline render::View test_view(splat::Modality modality, double time = 0.4, bool mirrored = false) {
    switch (modality) {
        case splat::Modality::Image2D: return render::ImageView{kViewSize, kViewSize, mirrored};
        case splat::Modality::Video: return render::VideoView{kViewSize, kViewSize, time};
        case splat::Modality::Scene3D: break;
    }
    return test_camera();
}

}  // namespace clipsplat::testing
