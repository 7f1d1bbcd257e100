#include "clipsplat/train/config.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>
#include <fmt/format.h>

#include "clipsplat/errors.hpp"

namespace clipsplat::train {

using splat::Modality;
using splat::ParamGroup;

double LearningRates::get(ParamGroup g) const {
    switch (g) {
        case ParamGroup::Means: return means;
        case ParamGroup::Rotations: return rotations;
        case ParamGroup::Scales: return scales;
        case ParamGroup::Opacities: return opacities;
        case ParamGroup::Colors: return features;
        case ParamGroup::TimeCenters: return time_centers;
        case ParamGroup::TimeScales: return time_scales;
        case ParamGroup::Velocities: return velocities;
    }
    return 0;
}

void LearningRates::set(ParamGroup g, double rate) {
    switch (g) {
        case ParamGroup::Means: means = rate; break;
        case ParamGroup::Rotations: rotations = rate; break;
        case ParamGroup::Scales: scales = rate; break;
        case ParamGroup::Opacities: opacities = rate; break;
        case ParamGroup::Colors: features = rate; break;
        case ParamGroup::TimeCenters: time_centers = rate; break;
        case ParamGroup::TimeScales: time_scales = rate; break;
        case ParamGroup::Velocities: velocities = rate; break;
    }
}

void TrainConfig::validate(Modality modality) const {
    if (steps < 0) throw InvalidParameterError(fmt::format("steps must be >= 0, got {}", steps));
    if (snapshot_every < 1) throw InvalidParameterError("snapshot cadence must be >= 1");
    weights.validate();
    for (auto g : splat::kAllParamGroups) {
        const double r = lr.get(g);
        if (!std::isfinite(r) || r < 0) {
            throw InvalidParameterError(fmt::format("learning rate of {} must be finite and >= 0", splat::to_string(g)));
        }
    }
    if (modality == Modality::Video && (optimized.size() != 1 || optimized.front() != ParamGroup::Colors)) {
        throw InvalidParameterError("video stylization optimizes SH colors only");
    }
}

namespace {

TrainConfig base(std::string name, double lambda_b, double lambda_c, double feature_lr) {
    TrainConfig c;
    c.preset = std::move(name);
    c.steps = 5000;
    c.weights = {5.0, 90.0, lambda_c, lambda_b};
    c.patch.patch_size = 128;
    c.patch.num_patch = 64;
    c.lr = LearningRates{};
    c.lr.features = feature_lr;
    c.optimized = {ParamGroup::Means, ParamGroup::Rotations, ParamGroup::Scales, ParamGroup::Opacities,
                   ParamGroup::Colors};
    return c;
}

}  // namespace

TrainConfig preset(std::string_view name) {
    if (name == "standard-3d") return base("standard-3d", 1000.0, 0.8, 0.01);
    if (name == "light-3d") {
        auto c = base("light-3d", 1000.0, 0.8, 0.002);
        c.weights.lambda_p = 35.0;
        return c;
    }
    if (name == "standard-2d") return base("standard-2d", 0.0, 0.8, 0.0025);
    if (name == "standard-video" || name == "light-video") {
        const bool light = name == "light-video";
        auto c = base(std::string(name), 0.0, 0.5, light ? 0.002 : 0.02);
        if (light) c.weights.lambda_p = 45.0;
        c.optimized = {ParamGroup::Colors};
        return c;
    }
    throw InvalidParameterError(fmt::format("unknown preset '{}'", name));
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"standard-3d", "light-3d", "standard-2d", "standard-video",
                                                   "light-video"};
    return names;
}

std::string default_preset(Modality modality) {
    switch (modality) {
        case Modality::Image2D: return "standard-2d";
        case Modality::Video: return "standard-video";
        case Modality::Scene3D: return "standard-3d";
    }
    return "standard-2d";
}

LearningRates FitConfig::image_rates() {
    LearningRates r;
    r.features = 0.02;
    r.means = 4e-3;
    r.rotations = 2e-2;
    r.scales = 2e-2;
    r.opacities = 5e-2;
    r.time_centers = 5e-3;
    r.time_scales = 2e-2;
    r.velocities = 5e-2;
    return r;
}

LearningRates FitConfig::scene_rates() {
    LearningRates r;
    r.features = 0.0025;
    return r;
}

void FitConfig::validate() const {
    if (steps < 0) throw InvalidParameterError(fmt::format("steps must be >= 0, got {}", steps));
    if (num_gaussians < 0) throw InvalidParameterError("num_gaussians must be >= 0");
    if (sh_degree < 0 || sh_degree > 3) throw InvalidParameterError("sh_degree must lie in [0, 3]");
    if (!(lambda_ssim >= 0 && lambda_ssim <= 1)) throw InvalidParameterError("lambda_ssim must lie in [0, 1]");
    if (snapshot_every < 1) throw InvalidParameterError("snapshot cadence must be >= 1");
}

double scene_extent(const data::Dataset& dataset) {
    if (dataset.items.empty()) throw DatasetError("dataset is empty");
    if (dataset.modality != Modality::Scene3D) return std::max(dataset.width(), dataset.height()) / 2.0;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& item : dataset.items) mean += std::get<splat::Camera>(item.view).center();
    mean /= double(dataset.items.size());
    double radius = 0;
    for (const auto& item : dataset.items) {
        radius = std::max(radius, (std::get<splat::Camera>(item.view).center() - mean).norm());
    }
    // a single camera has no spread; fall back to its distance from the origin
    if (radius == 0) radius = mean.norm();
    return 1.1 * std::max(radius, 1e-6);
}

}  // namespace clipsplat::train
