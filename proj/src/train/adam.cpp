#include "clipsplat/train/adam.hpp"

#include <cmath>

#include "clipsplat/errors.hpp"

namespace clipsplat::train {

Adam::Adam(const splat::GaussianSet& shape, const std::array<double, splat::kAllParamGroups.size()>& rates)
    : Adam(shape, rates, Settings{}) {}

Adam::Adam(const splat::GaussianSet& shape, const std::array<double, splat::kAllParamGroups.size()>& rates,
           Settings settings)
    : settings_(settings), rates_(rates) {
    for (std::size_t g = 0; g < splat::kAllParamGroups.size(); ++g) {
        if (!(rates_[g] >= 0) || !std::isfinite(rates_[g])) throw InvalidParameterError("learning rates must be finite and >= 0");
        const auto n = shape.group(splat::kAllParamGroups[g]).size();
        m_[g].assign(n, 0.0);
        v_[g].assign(n, 0.0);
    }
}

void Adam::set_multipliers(splat::ParamGroup group, std::vector<double> multipliers) {
    const auto g = static_cast<std::size_t>(group);
    if (multipliers.size() != m_[g].size()) throw InvalidParameterError("multiplier count must match the group size");
    multipliers_[g] = std::move(multipliers);
}

void Adam::step(splat::GaussianSet& params, const splat::GaussianSet& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(settings_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(settings_.beta2, double(t_));
    for (std::size_t g = 0; g < splat::kAllParamGroups.size(); ++g) {
        if (rates_[g] == 0) continue;
        auto& p = params.group(splat::kAllParamGroups[g]);
        const auto& d = grads.group(splat::kAllParamGroups[g]);
        auto& m = m_[g];
        auto& v = v_[g];
        const auto& mult = multipliers_[g];
        if (p.size() != m.size() || d.size() != m.size()) throw InvalidParameterError("parameter layout changed during optimization");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = settings_.beta1 * m[i] + (1 - settings_.beta1) * d[i];
            v[i] = settings_.beta2 * v[i] + (1 - settings_.beta2) * double(d[i]) * d[i];
            const double rate = mult.empty() ? rates_[g] : rates_[g] * mult[i];
            if (rate == 0) continue;
            p[i] = float(p[i] - rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + settings_.eps));
        }
    }
}

}  // namespace clipsplat::train
