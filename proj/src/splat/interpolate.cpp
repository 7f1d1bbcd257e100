#include "clipsplat/splat/interpolate.hpp"

#include <cmath>

#include <fmt/format.h>

#include "clipsplat/errors.hpp"

namespace clipsplat::splat {

GaussianSet interpolate(const GaussianSet& a, const GaussianSet& b, double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw DomainError(fmt::format("interpolation weight {} outside [0, 1]", t));
    }
    if (!same_layout(a, b)) {
        throw IncompatibleModelsError(fmt::format(
            "cannot interpolate {} model with {} Gaussians (SH {}) and {} model with {} Gaussians (SH {})",
            to_string(a.modality), a.size(), a.sh_degree, to_string(b.modality), b.size(), b.sh_degree));
    }
    if (t == 0.0) return a;
    if (t == 1.0) return b;

    const double wb = t;
    const double wa = 1.0 - t;
    GaussianSet out = a;
    for (auto g : a.groups()) {
        if (g == ParamGroup::Rotations) continue;
        const auto& va = a.group(g);
        const auto& vb = b.group(g);
        auto& vo = out.group(g);
        for (std::size_t k = 0; k < vo.size(); ++k) vo[k] = static_cast<float>(wa * va[k] + wb * vb[k]);
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        const float* qa = &a.rotations[4 * i];
        const float* qb = &b.rotations[4 * i];
        double dot = 0.0;
        for (int c = 0; c < 4; ++c) dot += double(qa[c]) * qb[c];
        const double sign = dot < 0.0 ? -1.0 : 1.0;
        float* qo = &out.rotations[4 * i];
        for (int c = 0; c < 4; ++c) qo[c] = static_cast<float>(wa * qa[c] + wb * sign * qb[c]);
    }
    normalize_rotations(out);
    if (out.modality == Modality::Image2D) {
        // both endpoints carry the same pinned axis; keep it exact
        for (std::size_t i = 0; i < out.size(); ++i) out.log_scales[3 * i] = a.log_scales[3 * i];
    }
    return out;
}

}  // namespace clipsplat::splat
