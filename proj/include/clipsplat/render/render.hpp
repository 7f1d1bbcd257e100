#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "clipsplat/splat/camera.hpp"
#include "clipsplat/splat/gaussian_set.hpp"

namespace clipsplat::render {

/// Orthographic view of flat image splats. The mirrored view looks at the splat plane from
/// behind: x is flipped and depth order reversed.
struct ImageView {
    int width = 0;
    int height = 0;
    bool mirrored = false;
};

/// Slice of a video model at normalized time `time` in [0, 1].
struct VideoView {
    int width = 0;
    int height = 0;
    double time = 0.0;
};

using View = std::variant<ImageView, VideoView, splat::Camera>;

int view_width(const View& v);
int view_height(const View& v);

using Color = std::array<double, 3>;

template <typename T>
struct BasicRenderOutput {
    int width = 0;
    int height = 0;
    std::vector<T> rgb;    // H x W x 3, row-major
    std::vector<T> alpha;  // H x W
    View view;

    T pixel(int x, int y, int c) const { return rgb[(std::size_t(y) * width + x) * 3 + c]; }
};

using RenderOutput = BasicRenderOutput<float>;

namespace detail {
template <typename T>
struct ForwardState;
}

/// Knobs that differ between the production and oracle paths. Defaults are the production path.
struct RasterSettings {
    /// Gaussians are dropped at a pixel when opacity * falloff falls below this value; it also
    /// sets each footprint's bounding radius.
    double alpha_cutoff = 1e-8;
    /// Compositing stops once transmittance falls below this value.
    double min_transmittance = 1e-9;
    int tile_size = 16;
};

/// Differentiable tile rasterizer for all three modalities.
///
/// Construction runs the forward pass; `backward` maps image-space gradients to gradients of
/// every raw parameter array of the model (same layout as the model). The model passed in
/// must outlive the rasterizer.
template <typename T>
class Rasterizer {
public:
    Rasterizer(const splat::BasicGaussianSet<T>& model, const View& view, const Color& background,
               const RasterSettings& settings = {});
    ~Rasterizer();
    Rasterizer(Rasterizer&&) noexcept;
    Rasterizer& operator=(Rasterizer&&) noexcept;

    const BasicRenderOutput<T>& output() const { return output_; }

    /// `d_rgb` is H x W x 3, `d_alpha` is H x W or empty.
    splat::BasicGaussianSet<T> backward(std::span<const T> d_rgb, std::span<const T> d_alpha = {}) const;

private:
    const splat::BasicGaussianSet<T>* model_;
    BasicRenderOutput<T> output_;
    std::unique_ptr<detail::ForwardState<T>> state_;
};

/// Forward-only conveniences.
template <typename T>
BasicRenderOutput<T> render(const splat::BasicGaussianSet<T>& model, const View& view, const Color& background);

template <typename T>
BasicRenderOutput<T> render_image2d(const splat::BasicGaussianSet<T>& model, int width, int height,
                                    const Color& background, bool mirrored = false);

/// Throws DomainError when t is outside [0, 1].
template <typename T>
BasicRenderOutput<T> render_video_frame(const splat::BasicGaussianSet<T>& model, double t, int width, int height,
                                        const Color& background);

/// Throws InvalidCameraError for an invalid camera.
template <typename T>
BasicRenderOutput<T> render_3d(const splat::BasicGaussianSet<T>& model, const splat::Camera& camera,
                               const Color& background);

/// Brute-force oracle: every pixel against every Gaussian in exact depth order, covariances
/// assembled with dense matrix algebra, no tiling, truncation or early termination. Video
/// splats are obtained by conditioning the full space-time covariance on the view time.
template <typename T>
BasicRenderOutput<T> render_reference(const splat::BasicGaussianSet<T>& model, const View& view,
                                      const Color& background);

/// Conventions shared by the fast and reference paths.
inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kDilation = 0.3;           // px^2 added to projected covariances
inline constexpr double kDegenerateDet = 1e-12;    // px^4, orthographic clamp threshold
inline constexpr double kNearPlane = 0.01;

}  // namespace clipsplat::render
