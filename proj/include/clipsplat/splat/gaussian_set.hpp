#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace clipsplat::splat {

enum class Modality { Image2D, Video, Scene3D };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// Independently optimizable parameter arrays of a GaussianSet.
enum class ParamGroup {
    Means,
    Rotations,
    Scales,
    Opacities,
    Colors,
    TimeCenters,
    TimeScales,
    Velocities,
};

inline constexpr std::array<ParamGroup, 8> kAllParamGroups = {
    ParamGroup::Means,       ParamGroup::Rotations,  ParamGroup::Scales,
    ParamGroup::Opacities,   ParamGroup::Colors,     ParamGroup::TimeCenters,
    ParamGroup::TimeScales,  ParamGroup::Velocities,
};

std::string_view to_string(ParamGroup g);
ParamGroup param_group_from_string(std::string_view s);

/// Fixed thickness of the collapsed axis of flat image splats, scene units.
inline constexpr double kFlatEpsilon = 1e-4;

inline constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// The trainable splat model.
///
/// Parameters are stored in their raw (optimizer) space: log scales, opacity logits and
/// un-normalized quaternions (w, x, y, z). Activations happen in the renderer. Arrays are
/// flat and row-major per Gaussian so the same container doubles as a gradient buffer.
///
/// Modality extensions:
///  - image2d: scale axis 0 is pinned to log(kFlatEpsilon) and never optimized.
///  - video: per-Gaussian temporal center, log temporal extent and image-plane velocity.
///    Together with the spatial covariance these parameterize a full space-time Gaussian
///    whose slice at time t is rendered.
///  - scene3d: no extension.
template <typename T>
struct BasicGaussianSet {
    Modality modality = Modality::Image2D;
    int sh_degree = 0;

    std::vector<T> means;           // N x 3
    std::vector<T> rotations;       // N x 4
    std::vector<T> log_scales;      // N x 3
    std::vector<T> opacity_logits;  // N
    std::vector<T> sh;              // N x K x 3, K = (sh_degree + 1)^2

    std::vector<T> time_centers;     // N (video)
    std::vector<T> log_time_scales;  // N (video)
    std::vector<T> velocities;       // N x 2 (video)

    std::size_t size() const { return opacity_logits.size(); }
    int sh_coeffs() const { return sh_coeff_count(sh_degree); }

    /// Allocates zeroed arrays for `n` Gaussians; quaternions start at identity.
    static BasicGaussianSet zeros(Modality modality, std::size_t n, int sh_degree = 0);

    /// Same shape, every array zero. Used for gradient buffers.
    BasicGaussianSet zeros_like() const;

    std::vector<T>& group(ParamGroup g);
    const std::vector<T>& group(ParamGroup g) const;

    /// Groups that carry data for this modality, in canonical (serialization) order.
    std::vector<ParamGroup> groups() const;

    template <typename U>
    BasicGaussianSet<U> cast() const;
};

using GaussianSet = BasicGaussianSet<float>;
using GaussianSet64 = BasicGaussianSet<double>;

/// Number of scalars per Gaussian stored in `g` for the given modality and SH degree.
std::size_t group_width(ParamGroup g, Modality m, int sh_degree);

/// Checks array shapes, finiteness and modality constraints. Throws ValidationError.
template <typename T>
void validate(const BasicGaussianSet<T>& set);

/// Renormalizes every stored quaternion to unit length.
template <typename T>
void normalize_rotations(BasicGaussianSet<T>& set);

template <typename T>
bool same_layout(const BasicGaussianSet<T>& a, const BasicGaussianSet<T>& b) {
    return a.modality == b.modality && a.sh_degree == b.sh_degree && a.size() == b.size();
}

template <typename T>
bool bit_equal(const std::vector<T>& a, const std::vector<T>& b);

template <typename T>
template <typename U>
BasicGaussianSet<U> BasicGaussianSet<T>::cast() const {
    BasicGaussianSet<U> out;
    out.modality = modality;
    out.sh_degree = sh_degree;
    auto conv = [](const std::vector<T>& src) { return std::vector<U>(src.begin(), src.end()); };
    out.means = conv(means);
    out.rotations = conv(rotations);
    out.log_scales = conv(log_scales);
    out.opacity_logits = conv(opacity_logits);
    out.sh = conv(sh);
    out.time_centers = conv(time_centers);
    out.log_time_scales = conv(log_time_scales);
    out.velocities = conv(velocities);
    return out;
}

}  // namespace clipsplat::splat
