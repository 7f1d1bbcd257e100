#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "clipsplat/data/dataset.hpp"
#include "clipsplat/guidance/encoders.hpp"

namespace clipsplat::metrics {

/// A guarded cosine average. `guarded` counts terms whose direction vanished and contributed 0.
struct DirectionalScore {
    double value = 0;
    int guarded = 0;
    int terms = 0;

    /// Every term was guarded.
    bool degenerate() const { return terms > 0 && guarded == terms; }
};

// Embedding-level formulas. Rows of the N x D inputs need not be unit length; every score is
// percent-scaled.

/// Mean cosine between each render embedding and `style_pos`.
double clip_s(const torch::Tensor& renders, const torch::Tensor& style_pos);

/// Mean cosine between (render - gt) and (pos - neg).
DirectionalScore clip_sim(const torch::Tensor& renders, const torch::Tensor& gts, const torch::Tensor& style_pos,
                          const torch::Tensor& style_neg);

/// Ratio of summed consecutive-frame cosines, renders over ground truth. Throws
/// UndefinedMetricError when the ground-truth sum is 0.
double clip_f(const torch::Tensor& renders, const torch::Tensor& gts);

/// Mean cosine between consecutive-frame differences of renders and ground truth.
DirectionalScore clip_cons(const torch::Tensor& renders, const torch::Tensor& gts);

/// Mean absolute difference of Farneback flow magnitudes between (gt_i, gt_{i+k}) and
/// (styled_i, styled_{i+k}), over pixels and all valid i. Pixels in px.
double fof_consistency(const std::vector<data::Image>& gt, const std::vector<data::Image>& styled, int k);

/// Dense Farneback flow (pyramid 0.5, 3 levels, window 15, 3 iterations, poly_n 5, sigma 1.2)
/// between grayscale versions of two frames; returns per-pixel magnitudes, H x W.
std::vector<float> flow_magnitude(const data::Image& a, const data::Image& b);

struct MetricsReport {
    std::optional<double> clip_s;
    std::optional<DirectionalScore> clip_sim;
    std::optional<double> clip_f;
    std::optional<DirectionalScore> clip_cons;
    std::map<int, double> fof;
    int frames = 0;
    std::string condition;
    std::string negative;
    std::string encoder;

    std::string to_json() const;
    std::string to_text() const;
};

struct EvaluateOptions {
    /// Ground-truth frames; without them only CLIP-S is computed.
    std::vector<data::Image> gts;
    std::vector<int> fof_gaps = {1};
};

/// Embeds `renders` (and ground truth) with the metric encoder and fills every metric the inputs
/// allow: CLIP-SIM needs ground truth, the consistency metrics and FoF need two or more frames.
MetricsReport evaluate(const guidance::ClipEncoder& encoder, const std::vector<data::Image>& renders,
                       const guidance::StyleCondition& condition, const EvaluateOptions& options = {});

/// N x D unit embeddings of frames, computed one frame at a time.
torch::Tensor embed_frames(const guidance::ClipEncoder& encoder, const std::vector<data::Image>& frames);

}  // namespace clipsplat::metrics
