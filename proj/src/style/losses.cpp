#include "clipsplat/style/losses.hpp"

#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "clipsplat/errors.hpp"

namespace clipsplat::style {

namespace F = torch::nn::functional;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
    return splitmix(splitmix(splitmix(a) ^ b) ^ c);
}

void check_image(const torch::Tensor& t, const char* what) {
    if (t.dim() != 4 || t.size(1) != 3) {
        throw InvalidParameterError(fmt::format("{} must be B x 3 x H x W, got {} dims", what, t.dim()));
    }
}

}  // namespace

void LossWeights::validate() const {
    for (auto [name, v] : {std::pair{"lambda_d", lambda_d}, std::pair{"lambda_p", lambda_p},
                           std::pair{"lambda_c", lambda_c}, std::pair{"lambda_b", lambda_b}}) {
        if (!std::isfinite(v) || v < 0) throw InvalidParameterError(fmt::format("{} must be finite and >= 0, got {}", name, v));
    }
}

void PatchConfig::validate(int width, int height) const {
    if (num_patch < 1) throw InvalidParameterError(fmt::format("num_patch must be >= 1, got {}", num_patch));
    if (patch_size < 1 || patch_size > std::min(width, height)) {
        throw InvalidParameterError(
            fmt::format("patch_size {} does not fit a {}x{} render", patch_size, width, height));
    }
    if (!std::isfinite(distortion_scale) || distortion_scale < 0 || distortion_scale > 1) {
        throw InvalidParameterError(fmt::format("distortion scale must lie in [0, 1], got {}", distortion_scale));
    }
}

std::vector<PatchCorner> patch_corners(int width, int height, const PatchConfig& cfg, std::uint64_t step) {
    cfg.validate(width, height);
    std::mt19937_64 rng(mix_seed(cfg.seed, step));
    std::uniform_int_distribution<int> ux(0, width - cfg.patch_size), uy(0, height - cfg.patch_size);
    std::vector<PatchCorner> out(cfg.num_patch);
    for (auto& c : out) {
        c.x = ux(rng);
        c.y = uy(rng);
    }
    return out;
}

std::vector<torch::Tensor> sample_patches(const torch::Tensor& render, const PatchConfig& cfg, std::uint64_t step) {
    check_image(render, "render");
    const auto corners = patch_corners(int(render.size(3)), int(render.size(2)), cfg, step);
    std::vector<torch::Tensor> out;
    out.reserve(corners.size());
    for (const auto& c : corners) {
        out.push_back(render.slice(2, c.y, c.y + cfg.patch_size).slice(3, c.x, c.x + cfg.patch_size));
    }
    return out;
}

std::array<double, 9> PerspectiveWarp::homography() const {
    Eigen::Matrix<double, 8, 8> a;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const double x = end[i][0], y = end[i][1], u = start[i][0], v = start[i][1];
        a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
        a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
        b(2 * i) = u;
        b(2 * i + 1) = v;
    }
    const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
    return {h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0};
}

PerspectiveWarp random_perspective(int size, double distortion_scale, std::uint64_t seed) {
    const double s = size - 1;
    const double d = distortion_scale * size / 2.0;
    std::mt19937_64 rng(mix_seed(seed, 0x5eed));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto off = [&] { return d * u(rng); };
    PerspectiveWarp w;
    w.start = {{{0, 0}, {s, 0}, {s, s}, {0, s}}};
    w.end[0] = {off(), off()};
    w.end[1] = {s - off(), off()};
    w.end[2] = {s - off(), s - off()};
    w.end[3] = {off(), s - off()};
    return w;
}

torch::Tensor apply_perspective(const torch::Tensor& patch, const PerspectiveWarp& warp) {
    check_image(patch, "patch");
    const auto h = patch.size(2), w = patch.size(3);
    const auto m = warp.homography();
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto ys = torch::arange(h, opts).view({h, 1}).expand({h, w});
    auto xs = torch::arange(w, opts).view({1, w}).expand({h, w});
    auto den = m[6] * xs + m[7] * ys + m[8];
    auto u = (m[0] * xs + m[1] * ys + m[2]) / den;
    auto v = (m[3] * xs + m[4] * ys + m[5]) / den;
    // align_corners maps -1 and 1 onto the centers of the edge pixels
    auto gx = w > 1 ? u * (2.0 / double(w - 1)) - 1.0 : torch::zeros_like(u);
    auto gy = h > 1 ? v * (2.0 / double(h - 1)) - 1.0 : torch::zeros_like(v);
    auto grid = torch::stack({gx, gy}, -1).unsqueeze(0).expand({patch.size(0), h, w, 2}).to(patch.scalar_type());
    return F::grid_sample(patch, grid,
                          F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kBorder).align_corners(true));
}

torch::Tensor perspective_augment(const torch::Tensor& patch, double distortion_scale, std::uint64_t seed) {
    check_image(patch, "patch");
    if (patch.size(2) != patch.size(3)) throw InvalidParameterError("perspective augmentation needs a square patch");
    return apply_perspective(patch, random_perspective(int(patch.size(3)), distortion_scale, seed));
}

torch::Tensor directional_losses(const torch::Tensor& render_embeds, const torch::Tensor& source_embed,
                                 const torch::Tensor& style_pos, const torch::Tensor& style_neg) {
    auto r = render_embeds.dim() == 1 ? render_embeds.unsqueeze(0) : render_embeds;
    auto dtype = r.scalar_type();
    auto img_dir = r - source_embed.detach().to(dtype).view({1, -1});
    auto style_dir = (style_pos.detach() - style_neg.detach()).to(dtype).view({1, -1});
    const auto style_norm = style_dir.norm();
    if (style_norm.item<double>() < kMinDirectionNorm) return torch::ones({r.size(0)}, r.options());
    auto img_norm = img_dir.norm(2, -1);
    auto valid = img_norm >= kMinDirectionNorm;
    // the safe denominator keeps the masked branch free of NaN gradients
    auto denom = torch::where(valid, img_norm, torch::ones_like(img_norm)) * style_norm;
    auto cos = torch::where(valid, (img_dir * style_dir).sum(-1) / denom, torch::zeros_like(img_norm));
    return 1.0 - cos.clamp(-1.0, 1.0);
}

torch::Tensor directional_loss(const guidance::ClipEncoder& clip, const torch::Tensor& render,
                               const torch::Tensor& source_embed, const guidance::EmbeddingPair& style) {
    check_image(render, "render");
    return directional_losses(clip.embed_images(render), source_embed, style.positive, style.negative).mean();
}

torch::Tensor patch_loss(const guidance::ClipEncoder& clip, const torch::Tensor& render,
                         const torch::Tensor& source_embed, const guidance::EmbeddingPair& style,
                         const PatchConfig& cfg, std::uint64_t step, torch::Tensor* per_patch) {
    auto patches = sample_patches(render, cfg, step);
    if (cfg.distortion_scale > 0) {
        for (std::size_t i = 0; i < patches.size(); ++i) {
            patches[i] = perspective_augment(patches[i], cfg.distortion_scale, mix_seed(cfg.seed, step, i + 1));
        }
    }
    auto terms = directional_losses(clip.embed_images(torch::cat(patches, 0)), source_embed, style.positive,
                                    style.negative);
    if (per_patch) *per_patch = terms;
    return terms.mean();
}

torch::Tensor content_loss(const guidance::FeatureStack& render, const guidance::FeatureStack& source) {
    if (render.conv4_2.sizes() != source.conv4_2.sizes() || render.conv5_2.sizes() != source.conv5_2.sizes()) {
        throw InvalidParameterError("content loss needs feature stacks of equal shape");
    }
    return F::mse_loss(render.conv4_2, source.conv4_2) + F::mse_loss(render.conv5_2, source.conv5_2);
}

torch::Tensor content_loss(const guidance::VggFeatures& vgg, const torch::Tensor& render, const torch::Tensor& source) {
    check_image(render, "render");
    check_image(source, "source");
    if (render.sizes() != source.sizes()) {
        throw InvalidParameterError(fmt::format("content loss needs equal image sizes, got {}x{} and {}x{}",
                                                render.size(3), render.size(2), source.size(3), source.size(2)));
    }
    return content_loss(vgg.features(render), vgg.features(source));
}

BackgroundLoss background_loss(const torch::Tensor& render, const torch::Tensor& mask, const render::Color& color) {
    check_image(render, "render");
    if (mask.dim() != 2 || mask.size(0) != render.size(2) || mask.size(1) != render.size(3)) {
        throw InvalidParameterError(fmt::format("mask must be {}x{}", render.size(3), render.size(2)));
    }
    auto bg = (mask == 0).to(render.scalar_type()).view({1, 1, mask.size(0), mask.size(1)});
    const double count = bg.sum().item<double>() * 3.0 * double(render.size(0));
    BackgroundLoss out;
    if (count == 0) {
        out.value = torch::zeros({}, render.options());
        return out;
    }
    auto c = torch::tensor({color[0], color[1], color[2]}, torch::kFloat64).to(render.scalar_type()).view({1, 3, 1, 1});
    out.value = ((render - c).abs() * bg).sum() / count;
    out.defined = true;
    return out;
}

double total_loss(const LossValues& v, const LossWeights& w) {
    for (auto [name, x] : {std::pair{"l_d", v.l_d}, std::pair{"l_p", v.l_p}, std::pair{"l_c", v.l_c},
                           std::pair{"l_b", v.l_b}}) {
        if (!std::isfinite(x)) throw TrainingDivergedError(fmt::format("loss component {} is {}", name, x), name);
    }
    return w.lambda_d * v.l_d + w.lambda_p * v.l_p + w.lambda_c * v.l_c + w.lambda_b * v.l_b;
}

torch::Tensor total_loss(const torch::Tensor& l_d, const torch::Tensor& l_p, const torch::Tensor& l_c,
                         const torch::Tensor& l_b, const LossWeights& w) {
    torch::Tensor total;
    auto add = [&](const torch::Tensor& t, double lambda) {
        if (!t.defined()) return;
        total = total.defined() ? total + lambda * t : lambda * t;
    };
    add(l_d, w.lambda_d);
    add(l_p, w.lambda_p);
    add(l_c, w.lambda_c);
    add(l_b, w.lambda_b);
    return total.defined() ? total : torch::zeros({}, torch::kFloat64);
}

}  // namespace clipsplat::style
