#pragma once

#include <cmath>
#include <vector>

#include "clipsplat/data/dataset.hpp"
#include "clipsplat/render/render.hpp"
#include "clipsplat/splat/camera.hpp"
#include "random_models.hpp"

namespace clipsplat::testing {

/// Three separated flat Gaussians on a black 64x64 canvas.
inline splat::GaussianSet three_gaussian_model() {
    auto m = splat::GaussianSet::zeros(splat::Modality::Image2D, 3);
    const double c = std::sqrt(0.5);
    const float xy[3][2] = {{18, 20}, {44, 24}, {30, 46}};
    const float sy[3] = {5.0f, 7.0f, 4.0f};
    const float sz[3] = {3.0f, 4.0f, 8.0f};
    const float angle[3] = {0.3f, -0.6f, 1.1f};
    const float rgb[3][3] = {{0.9f, 0.2f, 0.1f}, {0.1f, 0.8f, 0.3f}, {0.2f, 0.3f, 0.95f}};
    for (int i = 0; i < 3; ++i) {
        m.means[3 * i] = xy[i][0];
        m.means[3 * i + 1] = xy[i][1];
        m.means[3 * i + 2] = float(i + 1);
        const double h = angle[i] / 2;
        m.rotations[4 * i] = float(c * std::cos(h));
        m.rotations[4 * i + 1] = float(-c * std::sin(h));
        m.rotations[4 * i + 2] = float(c * std::cos(h));
        m.rotations[4 * i + 3] = float(c * std::sin(h));
        m.log_scales[3 * i + 1] = std::log(sy[i]);
        m.log_scales[3 * i + 2] = std::log(sz[i]);
        m.opacity_logits[i] = 3.0f;
        for (int k = 0; k < 3; ++k) m.sh[3 * i + k] = float((rgb[i][k] - 0.5) / 0.28209479177387814);
    }
    return m;
}

inline data::Dataset image_dataset(const data::Image& image) {
    data::Dataset ds;
    ds.modality = splat::Modality::Image2D;
    ds.items.push_back({image, std::nullopt, render::ImageView{image.width, image.height, false}, "fixture"});
    return ds;
}

/// Forward render of the generator model, used as ground truth.
inline data::Dataset three_gaussian_dataset() {
    const auto gt = render::render(three_gaussian_model(), render::ImageView{kViewSize, kViewSize, false}, {0, 0, 0});
    return image_dataset(data::to_image(gt));
}

/// Anti-aliased disk of radius `radius` centered at (cx, cy) over a dark background.
inline data::Image disk_image(int size, double cx, double cy, double radius) {
    auto img = data::Image::filled(size, size, {0.1, 0.1, 0.15});
    constexpr int kSuper = 4;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            int inside = 0;
            for (int sy = 0; sy < kSuper; ++sy) {
                for (int sx = 0; sx < kSuper; ++sx) {
                    const double px = x - 0.5 + (sx + 0.5) / kSuper, py = y - 0.5 + (sy + 0.5) / kSuper;
                    inside += std::hypot(px - cx, py - cy) <= radius;
                }
            }
            const double a = double(inside) / (kSuper * kSuper);
            const double fg[3] = {0.95, 0.75, 0.2};
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = float((1 - a) * img.at(x, y, c) + a * fg[c]);
        }
    }
    return img;
}

/// A disk of radius 8 crossing a 64x64 frame from left to right over `frames` frames.
inline data::Dataset moving_disk_dataset(int frames = 8) {
    data::Dataset ds;
    ds.modality = splat::Modality::Video;
    ds.background = {0.1, 0.1, 0.15};
    for (int f = 0; f < frames; ++f) {
        const double t = frames > 1 ? double(f) / (frames - 1) : 0.0;
        ds.items.push_back({disk_image(kViewSize, 16 + 32 * t, 28 + 8 * t, 8.0), std::nullopt,
                            render::VideoView{kViewSize, kViewSize, t}, "frame"});
    }
    return ds;
}

/// Two cameras around a random 3D model, with object masks from the render alpha.
inline data::Dataset scene_dataset(const splat::GaussianSet& model, int views = 2) {
    data::Dataset ds;
    ds.modality = splat::Modality::Scene3D;
    for (int v = 0; v < views; ++v) {
        auto cam = test_camera();
        const double a = 0.3 * v;
        cam.rotation = Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix();
        const auto out = render::render(model, cam, ds.background);
        data::Mask mask{out.width, out.height, {}};
        for (float alpha : out.alpha) mask.values.push_back(alpha > 0.05f ? 1 : 0);
        ds.items.push_back({data::to_image(out), mask, cam, "view"});
    }
    return ds;
}

}  // namespace clipsplat::testing
