#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "clipsplat/guidance/encoders.hpp"
#include "clipsplat/render/render.hpp"

// Images are 1 x 3 x H x W (or B x 3 x H x W) tensors in [0, 1]; losses are 0-d tensors.
namespace clipsplat::style {

struct LossWeights {
    double lambda_d = 5.0;
    double lambda_p = 90.0;
    double lambda_c = 0.8;
    double lambda_b = 1000.0;

    /// Throws InvalidParameterError on negative or non-finite weights.
    void validate() const;
};

struct PatchConfig {
    int num_patch = 64;
    int patch_size = 128;
    double distortion_scale = 0.5;
    std::uint64_t seed = 0;

    /// Throws InvalidParameterError when the patch does not fit a width x height render.
    void validate(int width, int height) const;
};

struct PatchCorner {
    int x = 0;
    int y = 0;
    bool operator==(const PatchCorner&) const = default;
};

/// Top-left corners drawn uniformly over valid positions; a function of (seed, step) only.
std::vector<PatchCorner> patch_corners(int width, int height, const PatchConfig& cfg, std::uint64_t step);

std::vector<torch::Tensor> sample_patches(const torch::Tensor& render, const PatchConfig& cfg, std::uint64_t step);

/// Four-corner warp in pixel coordinates, corners ordered top-left, top-right, bottom-right,
/// bottom-left. Output pixel `end[i]` samples input location `start[i]`.
struct PerspectiveWarp {
    std::array<std::array<double, 2>, 4> start;
    std::array<std::array<double, 2>, 4> end;

    /// 3 x 3 homography taking output pixel coordinates to input coordinates.
    std::array<double, 9> homography() const;
};

/// Each output corner moves inward by up to distortion_scale * size / 2 along both axes.
PerspectiveWarp random_perspective(int size, double distortion_scale, std::uint64_t seed);

/// Bilinear resampling with edge replication outside the input. Differentiable w.r.t. `patch`.
torch::Tensor apply_perspective(const torch::Tensor& patch, const PerspectiveWarp& warp);

torch::Tensor perspective_augment(const torch::Tensor& patch, double distortion_scale, std::uint64_t seed);

/// Image directions shorter than this count as zero: cosine 0, loss 1, no gradient.
inline constexpr double kMinDirectionNorm = 1e-8;

/// Per-row 1 - cos(render - source, pos - neg) for B x D render embeddings and D-vectors.
/// The source is detached. Values lie in [0, 2].
torch::Tensor directional_losses(const torch::Tensor& render_embeds, const torch::Tensor& source_embed,
                                 const torch::Tensor& style_pos, const torch::Tensor& style_neg);

torch::Tensor directional_loss(const guidance::ClipEncoder& clip, const torch::Tensor& render,
                               const torch::Tensor& source_embed, const guidance::EmbeddingPair& style);

/// Mean directional loss over `cfg.num_patch` augmented patches, each against the full source
/// embedding. `per_patch`, when given, receives the individual terms.
torch::Tensor patch_loss(const guidance::ClipEncoder& clip, const torch::Tensor& render,
                         const torch::Tensor& source_embed, const guidance::EmbeddingPair& style,
                         const PatchConfig& cfg, std::uint64_t step, torch::Tensor* per_patch = nullptr);

/// Sum over conv4_2 and conv5_2 of the mean squared feature difference.
torch::Tensor content_loss(const guidance::FeatureStack& render, const guidance::FeatureStack& source);
torch::Tensor content_loss(const guidance::VggFeatures& vgg, const torch::Tensor& render, const torch::Tensor& source);

struct BackgroundLoss {
    torch::Tensor value;
    /// False when the mask has no background pixel; `value` is then 0.
    bool defined = false;
};

/// Mean |pixel - color| over background pixels (mask == 0) and channels. `mask` is H x W.
BackgroundLoss background_loss(const torch::Tensor& render, const torch::Tensor& mask, const render::Color& color);

struct LossValues {
    double l_d = 0;
    double l_p = 0;
    double l_c = 0;
    double l_b = 0;
};

/// Weighted sum in double. Throws TrainingDivergedError naming the first non-finite component.
double total_loss(const LossValues& values, const LossWeights& weights);

/// Same sum on tensors; undefined components are skipped.
torch::Tensor total_loss(const torch::Tensor& l_d, const torch::Tensor& l_p, const torch::Tensor& l_c,
                         const torch::Tensor& l_b, const LossWeights& weights);

}  // namespace clipsplat::style
