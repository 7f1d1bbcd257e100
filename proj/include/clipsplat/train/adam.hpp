#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "clipsplat/splat/gaussian_set.hpp"

namespace clipsplat::train {

/// Adam over the parameter arrays of a GaussianSet with one learning rate per group.
/// Moments are kept in double; a zero rate freezes the group bit-exactly.
class Adam {
public:
    struct Settings {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-15;
    };

    Adam(const splat::GaussianSet& shape, const std::array<double, splat::kAllParamGroups.size()>& rates);
    Adam(const splat::GaussianSet& shape, const std::array<double, splat::kAllParamGroups.size()>& rates,
         Settings settings);

    /// Per-element rate multipliers for one group (0 pins an element).
    void set_multipliers(splat::ParamGroup group, std::vector<double> multipliers);

    void step(splat::GaussianSet& params, const splat::GaussianSet& grads);

    std::uint64_t steps() const { return t_; }

private:
    Settings settings_;
    std::array<double, splat::kAllParamGroups.size()> rates_;
    std::array<std::vector<double>, splat::kAllParamGroups.size()> m_, v_, multipliers_;
    std::uint64_t t_ = 0;
};

}  // namespace clipsplat::train
