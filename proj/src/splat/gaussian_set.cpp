#include "clipsplat/splat/gaussian_set.hpp"

#include <cstring>
#include <utility>

#include <fmt/format.h>

#include "clipsplat/errors.hpp"

namespace clipsplat::splat {

std::string_view to_string(Modality m) {
    switch (m) {
        case Modality::Image2D: return "image2d";
        case Modality::Video: return "video";
        case Modality::Scene3D: return "scene3d";
    }
    return "unknown";
}

Modality modality_from_string(std::string_view s) {
    if (s == "image2d") return Modality::Image2D;
    if (s == "video") return Modality::Video;
    if (s == "scene3d") return Modality::Scene3D;
    throw InvalidParameterError(fmt::format("unknown modality '{}'", s));
}

std::string_view to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::Means: return "means";
        case ParamGroup::Rotations: return "rotations";
        case ParamGroup::Scales: return "scales";
        case ParamGroup::Opacities: return "opacities";
        case ParamGroup::Colors: return "sh_colors";
        case ParamGroup::TimeCenters: return "time_centers";
        case ParamGroup::TimeScales: return "time_scales";
        case ParamGroup::Velocities: return "velocities";
    }
    return "unknown";
}

ParamGroup param_group_from_string(std::string_view s) {
    for (auto g : kAllParamGroups) {
        if (to_string(g) == s) return g;
    }
    throw InvalidParameterError(fmt::format("unknown parameter group '{}'", s));
}

std::size_t group_width(ParamGroup g, Modality m, int sh_degree) {
    const bool video = m == Modality::Video;
    switch (g) {
        case ParamGroup::Means: return 3;
        case ParamGroup::Rotations: return 4;
        case ParamGroup::Scales: return 3;
        case ParamGroup::Opacities: return 1;
        case ParamGroup::Colors: return 3 * static_cast<std::size_t>(sh_coeff_count(sh_degree));
        case ParamGroup::TimeCenters: return video ? 1 : 0;
        case ParamGroup::TimeScales: return video ? 1 : 0;
        case ParamGroup::Velocities: return video ? 2 : 0;
    }
    return 0;
}

template <typename T>
BasicGaussianSet<T> BasicGaussianSet<T>::zeros(Modality modality, std::size_t n, int sh_degree) {
    if (sh_degree < 0 || sh_degree > 3) {
        throw InvalidParameterError(fmt::format("SH degree {} outside 0..3", sh_degree));
    }
    BasicGaussianSet s;
    s.modality = modality;
    s.sh_degree = sh_degree;
    for (auto g : kAllParamGroups) {
        s.group(g).assign(n * group_width(g, modality, sh_degree), T(0));
    }
    for (std::size_t i = 0; i < n; ++i) s.rotations[4 * i] = T(1);
    if (modality == Modality::Image2D) {
        for (std::size_t i = 0; i < n; ++i) s.log_scales[3 * i] = static_cast<T>(std::log(kFlatEpsilon));
    }
    return s;
}

template <typename T>
BasicGaussianSet<T> BasicGaussianSet<T>::zeros_like() const {
    BasicGaussianSet out;
    out.modality = modality;
    out.sh_degree = sh_degree;
    for (auto g : kAllParamGroups) out.group(g).assign(group(g).size(), T(0));
    return out;
}

template <typename T>
std::vector<T>& BasicGaussianSet<T>::group(ParamGroup g) {
    return const_cast<std::vector<T>&>(std::as_const(*this).group(g));
}

template <typename T>
const std::vector<T>& BasicGaussianSet<T>::group(ParamGroup g) const {
    switch (g) {
        case ParamGroup::Means: return means;
        case ParamGroup::Rotations: return rotations;
        case ParamGroup::Scales: return log_scales;
        case ParamGroup::Opacities: return opacity_logits;
        case ParamGroup::Colors: return sh;
        case ParamGroup::TimeCenters: return time_centers;
        case ParamGroup::TimeScales: return log_time_scales;
        case ParamGroup::Velocities: return velocities;
    }
    throw InvalidParameterError("unknown parameter group");
}

template <typename T>
std::vector<ParamGroup> BasicGaussianSet<T>::groups() const {
    std::vector<ParamGroup> out;
    for (auto g : kAllParamGroups) {
        if (group_width(g, modality, sh_degree) > 0) out.push_back(g);
    }
    return out;
}

template <typename T>
void validate(const BasicGaussianSet<T>& set) {
    if (set.sh_degree < 0 || set.sh_degree > 3) {
        throw ValidationError(fmt::format("SH degree {} outside 0..3", set.sh_degree));
    }
    if (set.modality != Modality::Scene3D && set.sh_degree != 0) {
        throw ValidationError(fmt::format("{} models only support SH degree 0", to_string(set.modality)));
    }
    const std::size_t n = set.size();
    for (auto g : kAllParamGroups) {
        const auto expected = n * group_width(g, set.modality, set.sh_degree);
        const auto& arr = set.group(g);
        if (arr.size() != expected) {
            throw ValidationError(fmt::format("array '{}' has {} values, expected {}", to_string(g),
                                              arr.size(), expected));
        }
        for (std::size_t k = 0; k < arr.size(); ++k) {
            if (!std::isfinite(static_cast<double>(arr[k]))) {
                throw ValidationError(fmt::format("non-finite value in '{}' at Gaussian {}", to_string(g),
                                                  k / group_width(g, set.modality, set.sh_degree)));
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double norm2 = 0;
        for (int c = 0; c < 4; ++c) norm2 += double(set.rotations[4 * i + c]) * set.rotations[4 * i + c];
        if (norm2 == 0.0) throw ValidationError(fmt::format("zero quaternion at Gaussian {}", i));
    }
    if (set.modality == Modality::Image2D) {
        const T pinned = static_cast<T>(std::log(kFlatEpsilon));
        for (std::size_t i = 0; i < n; ++i) {
            if (set.log_scales[3 * i] != pinned) {
                throw ValidationError(fmt::format("image2d Gaussian {} is not flat along axis 0", i));
            }
        }
    }
}

template <typename T>
void normalize_rotations(BasicGaussianSet<T>& set) {
    for (std::size_t i = 0; i < set.size(); ++i) {
        T* q = &set.rotations[4 * i];
        const T norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
        if (norm > T(0)) {
            for (int c = 0; c < 4; ++c) q[c] /= norm;
        } else {
            q[0] = T(1);
        }
    }
}

template <typename T>
bool bit_equal(const std::vector<T>& a, const std::vector<T>& b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
}

template struct BasicGaussianSet<float>;
template struct BasicGaussianSet<double>;
template void validate(const BasicGaussianSet<float>&);
template void validate(const BasicGaussianSet<double>&);
template void normalize_rotations(BasicGaussianSet<float>&);
template void normalize_rotations(BasicGaussianSet<double>&);
template bool bit_equal(const std::vector<float>&, const std::vector<float>&);
template bool bit_equal(const std::vector<double>&, const std::vector<double>&);

}  // namespace clipsplat::splat
