#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "clipsplat/data/dataset.hpp"
#include "clipsplat/splat/gaussian_set.hpp"
#include "clipsplat/style/losses.hpp"

namespace clipsplat::train {

/// Per-group learning rates. `means` is multiplied by the scene extent; `features` applies to
/// the SH DC band and features / 20 to higher bands.
struct LearningRates {
    double features = 0.0025;
    double means = 1.6e-4;
    double rotations = 1e-3;
    double scales = 5e-3;
    double opacities = 5e-2;
    double time_centers = 1e-3;
    double time_scales = 5e-3;
    double velocities = 1e-3;

    double get(splat::ParamGroup g) const;
    void set(splat::ParamGroup g, double rate);
};

/// Stage-2 configuration.
struct TrainConfig {
    std::string preset;
    int steps = 5000;
    style::LossWeights weights;
    style::PatchConfig patch;
    LearningRates lr;
    /// Groups updated by the optimizer; the rest stay bit-identical.
    std::vector<splat::ParamGroup> optimized;
    std::uint64_t seed = 0;
    /// Steps between divergence snapshots.
    int snapshot_every = 100;

    /// Throws InvalidParameterError. Video configs must optimize colors only.
    void validate(splat::Modality modality) const;
};

/// One of standard-3d, light-3d, standard-2d, standard-video, light-video.
/// Throws InvalidParameterError for other names.
TrainConfig preset(std::string_view name);
const std::vector<std::string>& preset_names();

/// The standard preset of a modality.
std::string default_preset(splat::Modality modality);

/// Stage-1 configuration.
struct FitConfig {
    int steps = 2000;
    /// 0 picks the modality default: one Gaussian per 16 px^2 for images, scaled by the
    /// frame count / 4 for video, 5000 for scenes.
    int num_gaussians = 0;
    int sh_degree = 0;
    double lambda_ssim = 0.2;
    LearningRates lr = image_rates();
    std::uint64_t seed = 0;
    int snapshot_every = 100;

    /// Rates for pixel-unit models fitted from scratch.
    static LearningRates image_rates();
    static LearningRates scene_rates();
    void validate() const;
};

/// Spatial scale used for the means learning rate: max(W, H) / 2 for image-plane modalities,
/// 1.1 x the largest camera distance from the mean camera center for scenes.
double scene_extent(const data::Dataset& dataset);

}  // namespace clipsplat::train
