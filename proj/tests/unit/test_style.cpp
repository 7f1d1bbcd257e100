#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>
#include <opencv2/imgproc.hpp>

#include "clipsplat/errors.hpp"
#include "clipsplat/style/losses.hpp"

using namespace clipsplat;
using namespace clipsplat::style;
namespace fs = std::filesystem;

namespace {

guidance::EncoderOptions synthetic_options() {
    guidance::EncoderOptions o;
    o.cache_dir = fs::temp_directory_path() / "clipsplat_no_cache";
    o.allow_synthetic = true;
    o.seed = 11;
    return o;
}

torch::Tensor smooth_image(int64_t h, int64_t w, double phase, torch::Dtype dtype = torch::kFloat32) {
    auto i = torch::arange(h, torch::kFloat64).view({h, 1});
    auto j = torch::arange(w, torch::kFloat64).view({1, w});
    std::vector<torch::Tensor> ch;
    for (int c = 0; c < 3; ++c) ch.push_back(0.5 + 0.35 * torch::sin(0.09 * i + 0.13 * j * (c + 1) + phase));
    return torch::stack(ch).unsqueeze(0).to(dtype);
}

torch::Tensor unit(torch::Tensor v) { return v / v.norm(); }

/// Norm-wise relative error between analytic and central-difference directional derivatives
/// along `dirs` random unit directions.
template <typename Loss>
double directional_gradient_error(Loss&& loss, const torch::Tensor& x0, int dirs, double h, std::uint64_t seed) {
    auto x = x0.clone().requires_grad_(true);
    loss(x).backward();
    const auto grad = x.grad().clone();
    torch::manual_seed(seed);
    std::vector<double> analytic, numeric;
    torch::NoGradGuard no_grad;
    for (int k = 0; k < dirs; ++k) {
        auto v = torch::randn_like(x0);
        v = v / v.norm();
        analytic.push_back((grad * v).sum().item<double>());
        const double fp = loss(x0 + h * v).template item<double>();
        const double fm = loss(x0 - h * v).template item<double>();
        numeric.push_back((fp - fm) / (2 * h));
    }
    double diff = 0, na = 0, nn = 0;
    for (int k = 0; k < dirs; ++k) {
        diff += std::pow(analytic[k] - numeric[k], 2);
        na += analytic[k] * analytic[k];
        nn += numeric[k] * numeric[k];
    }
    EXPECT_GT(std::sqrt(na), 1e-8) << "gradient vanished";
    return std::sqrt(diff) / std::max(std::sqrt(na), std::sqrt(nn));
}

}  // namespace

TEST(TotalLoss, WeightedSum) {
    const LossWeights paper_defaults;
    EXPECT_NEAR(total_loss(LossValues{1, 1, 1, 1}, paper_defaults), 1095.8, 1e-12);
    EXPECT_EQ(total_loss(LossValues{3, 2, 1, 7}, LossWeights{0, 0, 0, 0}), 0.0);

    const LossValues v{0.31, 0.77, 2.5, 0.013};
    const LossWeights w{1.5, 2.25, 0.125, 8};
    const double t = total_loss(v, w);
    EXPECT_NEAR(t, 1.5 * 0.31 + 2.25 * 0.77 + 0.125 * 2.5 + 8 * 0.013, 1e-12);
    EXPECT_NEAR(total_loss(v, LossWeights{3, 4.5, 0.25, 16}), 2 * t, 1e-12);
    EXPECT_NEAR(total_loss(LossValues{0.62, 0.77, 2.5, 0.013}, w) - t, 1.5 * 0.31, 1e-12);

    const auto tensor_total = total_loss(torch::tensor(0.31, torch::kFloat64), torch::tensor(0.77, torch::kFloat64),
                                         torch::tensor(2.5, torch::kFloat64), torch::tensor(0.013, torch::kFloat64), w);
    EXPECT_NEAR(tensor_total.item<double>(), t, 1e-12);
}

TEST(TotalLoss, NonFiniteComponentNamed) {
    try {
        total_loss(LossValues{1, std::nan(""), 1, 1}, LossWeights{});
        FAIL();
    } catch (const TrainingDivergedError& e) {
        EXPECT_EQ(e.component, "l_p");
        EXPECT_EQ(e.category(), ErrorCategory::Divergence);
    }
    EXPECT_THROW(LossWeights({-1, 0, 0, 0}).validate(), InvalidParameterError);
    EXPECT_NO_THROW(LossWeights{}.validate());
}

TEST(DirectionalLoss, FixedPoints) {
    torch::manual_seed(1);
    const auto src = unit(torch::randn({16}, torch::kFloat64));
    const auto pos = unit(torch::randn({16}, torch::kFloat64));
    const auto neg = unit(torch::randn({16}, torch::kFloat64));
    const auto dir = pos - neg;
    EXPECT_NEAR(directional_losses(src + 0.3 * dir, src, pos, neg).item<double>(), 0.0, 1e-12);
    EXPECT_NEAR(directional_losses(src - 0.3 * dir, src, pos, neg).item<double>(), 2.0, 1e-12);

    auto same = src.clone().requires_grad_(true);
    auto zero = directional_losses(same, src, pos, neg);
    EXPECT_EQ(zero.item<double>(), 1.0);
    zero.sum().backward();
    EXPECT_EQ(same.grad().abs().sum().item<double>(), 0.0);

    // positive rescaling of the style direction changes nothing
    const auto r = unit(torch::randn({16}, torch::kFloat64));
    EXPECT_NEAR(directional_losses(r, src, pos, neg).item<double>(),
                directional_losses(r, src, 3.0 * pos, 3.0 * neg).item<double>(), 1e-12);
}

TEST(DirectionalLoss, RangeOverRandomPairs) {
    torch::manual_seed(2);
    const auto r = torch::randn({1000, 32}, torch::kFloat64);
    const auto r_unit = r / r.norm(2, -1, true);
    const auto l = directional_losses(r_unit, unit(torch::randn({32}, torch::kFloat64)),
                                      unit(torch::randn({32}, torch::kFloat64)), unit(torch::randn({32}, torch::kFloat64)));
    EXPECT_GE(l.min().item<double>(), 0.0);
    EXPECT_LE(l.max().item<double>(), 2.0);
    // duplicating the batch leaves the mean unchanged
    EXPECT_NEAR(torch::cat({l, l}).mean().item<double>(), l.mean().item<double>(), 1e-12);
}

TEST(PatchSampling, FullRenderWhenPatchFills) {
    const auto img = smooth_image(128, 128, 0);
    PatchConfig cfg;
    cfg.num_patch = 5;
    for (const auto& p : sample_patches(img, cfg, 3)) EXPECT_TRUE(torch::equal(p, img));
}

TEST(PatchSampling, DeterministicPerStep) {
    PatchConfig cfg;
    cfg.patch_size = 32;
    cfg.seed = 9;
    EXPECT_EQ(patch_corners(100, 80, cfg, 4), patch_corners(100, 80, cfg, 4));
    EXPECT_NE(patch_corners(100, 80, cfg, 4), patch_corners(100, 80, cfg, 5));
    for (const auto& c : patch_corners(100, 80, cfg, 4)) {
        EXPECT_LE(c.x, 68);
        EXPECT_LE(c.y, 48);
    }
    cfg.patch_size = 81;
    EXPECT_THROW(patch_corners(100, 80, cfg, 0), InvalidParameterError);
}

TEST(PatchSampling, CornersUniform) {
    PatchConfig cfg;
    cfg.patch_size = 64;
    cfg.num_patch = 10000;
    cfg.seed = 21;
    const auto corners = patch_corners(256, 256, cfg, 0);
    std::vector<int> hx(193, 0), hy(193, 0);
    for (const auto& c : corners) {
        ++hx[c.x];
        ++hy[c.y];
    }
    const double expected = 10000.0 / 193.0;
    double chi_x = 0, chi_y = 0;
    for (int i = 0; i < 193; ++i) {
        chi_x += std::pow(hx[i] - expected, 2) / expected;
        chi_y += std::pow(hy[i] - expected, 2) / expected;
    }
    // 99th percentile of chi-squared with 192 degrees of freedom
    constexpr double kCritical = 240.50455989598024;
    EXPECT_LT(chi_x, kCritical);
    EXPECT_LT(chi_y, kCritical);
}

TEST(Perspective, ZeroDistortionIsIdentity) {
    const auto img = smooth_image(48, 48, 0.4);
    EXPECT_LT((perspective_augment(img, 0.0, 3) - img).abs().max().item<double>(), 1e-6);
    const auto a = perspective_augment(img, 0.5, 3);
    EXPECT_TRUE(torch::equal(a, perspective_augment(img, 0.5, 3)));
    EXPECT_FALSE(torch::equal(a, perspective_augment(img, 0.5, 4)));
    EXPECT_EQ(a.sizes(), img.sizes());
}

TEST(Perspective, CornersWithinBudget) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto w = random_perspective(64, 0.5, seed);
        for (int i = 0; i < 4; ++i) {
            EXPECT_LE(std::abs(w.end[i][0] - w.start[i][0]), 0.5 * 64);
            EXPECT_LE(std::abs(w.end[i][1] - w.start[i][1]), 0.5 * 64);
        }
    }
}

TEST(Perspective, MatchesOpenCvWarp) {
    // ramp patch, warped independently with OpenCV (inverse map, bilinear, replicated border)
    const int n = 64;
    auto ramp = torch::empty({1, 3, n, n}, torch::kFloat64);
    cv::Mat ramp_cv(n, n, CV_64FC1);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double v = (x + 2.0 * y) / (3.0 * (n - 1));
            ramp_cv.at<double>(y, x) = v;
            for (int c = 0; c < 3; ++c) ramp[0][c][y][x] = v;
        }
    }
    const auto warp = random_perspective(n, 0.5, 17);
    std::vector<cv::Point2f> src, dst;
    for (int i = 0; i < 4; ++i) {
        src.emplace_back(float(warp.start[i][0]), float(warp.start[i][1]));
        dst.emplace_back(float(warp.end[i][0]), float(warp.end[i][1]));
    }
    const cv::Mat m = cv::getPerspectiveTransform(dst, src);
    cv::Mat warped;
    cv::warpPerspective(ramp_cv, warped, m, ramp_cv.size(), cv::INTER_LINEAR | cv::WARP_INVERSE_MAP, cv::BORDER_REPLICATE);

    const auto ours = apply_perspective(ramp, warp);
    double max_err = 0, drift_ours = 0, drift_cv = 0;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double a = ours[0][0][y][x].item<double>();
            max_err = std::max(max_err, std::abs(a - warped.at<double>(y, x)));
            drift_ours += a - ramp_cv.at<double>(y, x);
            drift_cv += warped.at<double>(y, x) - ramp_cv.at<double>(y, x);
        }
    }
    // OpenCV quantizes sample positions to 1/32 px
    EXPECT_LT(max_err, 2e-3);
    EXPECT_NEAR(drift_ours / (n * n), drift_cv / (n * n), 1e-3);
    EXPECT_GT(std::abs(drift_cv / (n * n)), 1e-3);
}

TEST(BackgroundLoss, FixedPoints) {
    const render::Color black{0, 0, 0};
    auto mask = torch::zeros({8, 8}, torch::kUInt8);
    auto white = torch::ones({1, 3, 8, 8}, torch::kFloat64);
    EXPECT_DOUBLE_EQ(background_loss(white, mask, black).value.item<double>(), 1.0);
    EXPECT_DOUBLE_EQ(background_loss(white, mask, {1, 1, 1}).value.item<double>(), 0.0);

    // half the background pixels off by 0.2, foreground arbitrary
    auto img = torch::full({1, 3, 8, 8}, 0.5, torch::kFloat64);
    mask.slice(0, 0, 2).fill_(1);
    img.slice(2, 0, 2).fill_(7.0);
    img.slice(2, 2, 5) += 0.2;
    const auto b = background_loss(img, mask, {0.5, 0.5, 0.5});
    EXPECT_TRUE(b.defined);
    EXPECT_NEAR(b.value.item<double>(), 0.1, 1e-12);
    img.slice(2, 0, 2).fill_(-3.0);
    EXPECT_NEAR(background_loss(img, mask, {0.5, 0.5, 0.5}).value.item<double>(), 0.1, 1e-12);

    const auto none = background_loss(img, torch::ones({8, 8}, torch::kUInt8), black);
    EXPECT_FALSE(none.defined);
    EXPECT_EQ(none.value.item<double>(), 0.0);
    EXPECT_THROW(background_loss(img, torch::ones({4, 8}), black), InvalidParameterError);
}

class SyntheticEncoders : public ::testing::Test {
protected:
    void SetUp() override {
        clip = guidance::load_clip(guidance::EncoderRole::Loss, synthetic_options())->with_dtype(torch::kFloat64);
        vgg = guidance::load_vgg(synthetic_options())->with_dtype(torch::kFloat64);
        style = clip->embed_text("Fire", "Photo", {"a photo of {}.", "{} art."});
        source = smooth_image(64, 64, 0.0, torch::kFloat64);
        render = smooth_image(64, 64, 0.9, torch::kFloat64);
        torch::NoGradGuard no_grad;
        source_embed = clip->embed_images(source)[0];
    }

    std::shared_ptr<guidance::ClipEncoder> clip;
    std::shared_ptr<guidance::VggFeatures> vgg;
    guidance::EmbeddingPair style;
    torch::Tensor source, render, source_embed;
};

TEST_F(SyntheticEncoders, ContentLossProperties) {
    EXPECT_EQ(content_loss(*vgg, render, render).item<double>(), 0.0);
    const double ab = content_loss(*vgg, render, source).item<double>();
    EXPECT_GT(ab, 0.0);
    EXPECT_NEAR(ab, content_loss(*vgg, source, render).item<double>(), 1e-12 * ab);
    EXPECT_THROW(content_loss(*vgg, render, smooth_image(32, 64, 0, torch::kFloat64)), InvalidParameterError);
}

TEST_F(SyntheticEncoders, PatchLossDegenerateReduction) {
    PatchConfig cfg;
    cfg.num_patch = 1;
    cfg.patch_size = 64;
    cfg.distortion_scale = 0;
    const double p = patch_loss(*clip, render, source_embed, style, cfg, 0).item<double>();
    const double d = directional_loss(*clip, render, source_embed, style).item<double>();
    EXPECT_NEAR(p, d, 1e-12);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
}

TEST_F(SyntheticEncoders, PatchLossIsMeanOfTerms) {
    PatchConfig cfg;
    cfg.num_patch = 4;
    cfg.patch_size = 32;
    cfg.seed = 7;
    torch::Tensor terms;
    const double mean = patch_loss(*clip, render, source_embed, style, cfg, 12, &terms).item<double>();
    ASSERT_EQ(terms.size(0), 4);
    // independent oracle: recompute every term from its own crop and warp
    const auto corners = patch_corners(64, 64, cfg, 12);
    const auto patches = sample_patches(render, cfg, 12);
    double sum = 0;
    for (int i = 0; i < 4; ++i) {
        EXPECT_TRUE(torch::equal(patches[i], render.slice(2, corners[i].y, corners[i].y + 32)
                                                 .slice(3, corners[i].x, corners[i].x + 32)));
        sum += terms[i].item<double>();
    }
    EXPECT_NEAR(mean, sum / 4, 1e-12);
}

TEST_F(SyntheticEncoders, DirectionalGradientMatchesFiniteDifferences) {
    auto f = [&](const torch::Tensor& x) { return directional_loss(*clip, x, source_embed, style); };
    EXPECT_LE(directional_gradient_error(f, render, 6, 1e-3, 1), 1e-2);
}

TEST_F(SyntheticEncoders, PatchGradientMatchesFiniteDifferences) {
    PatchConfig cfg;
    cfg.num_patch = 3;
    cfg.patch_size = 40;
    cfg.seed = 2;
    auto f = [&](const torch::Tensor& x) { return patch_loss(*clip, x, source_embed, style, cfg, 5); };
    EXPECT_LE(directional_gradient_error(f, render, 6, 1e-3, 2), 1e-2);
}

TEST_F(SyntheticEncoders, ContentGradientMatchesFiniteDifferences) {
    torch::NoGradGuard outer;
    const auto src = vgg->features(source);
    auto f = [&](const torch::Tensor& x) {
        torch::AutoGradMode enable(x.requires_grad());
        return content_loss(vgg->features(x), src);
    };
    EXPECT_LE(directional_gradient_error(f, render, 6, 1e-3, 3), 1e-2);
}

TEST_F(SyntheticEncoders, BackgroundGradientMatchesFiniteDifferences) {
    auto mask = torch::zeros({64, 64}, torch::kUInt8);
    mask.slice(0, 20, 40).fill_(1);
    // color chosen away from every pixel value so |.| stays differentiable
    auto f = [&](const torch::Tensor& x) { return background_loss(x, mask, {0.02, 0.98, 0.01}).value; };
    EXPECT_LE(directional_gradient_error(f, render, 6, 1e-3, 4), 1e-2);
}
