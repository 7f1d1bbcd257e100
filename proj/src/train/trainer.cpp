#include "clipsplat/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "clipsplat/style/losses.hpp"
#include "clipsplat/train/adam.hpp"

namespace clipsplat::train {

namespace F = torch::nn::functional;
using splat::GaussianSet;
using splat::Modality;
using splat::ParamGroup;

namespace {

constexpr double kShC0 = 0.28209479177387814;
constexpr double kHigherBandRate = 1.0 / 20.0;
constexpr int kDefaultSceneGaussians = 5000;

double inverse_sigmoid(double p) { return std::log(p / (1 - p)); }

torch::Tensor rgb_tensor(const std::vector<float>& rgb, int width, int height) {
    auto hwc = torch::from_blob(const_cast<float*>(rgb.data()), {height, width, 3}, torch::kFloat32);
    return hwc.permute({2, 0, 1}).unsqueeze(0).clone();
}

std::vector<float> rgb_gradient(const torch::Tensor& grad) {
    auto hwc = grad.squeeze(0).permute({1, 2, 0}).contiguous().to(torch::kFloat32);
    return {hwc.data_ptr<float>(), hwc.data_ptr<float>() + hwc.numel()};
}

void accumulate(GaussianSet& into, const GaussianSet& g) {
    for (auto group : into.groups()) {
        auto& a = into.group(group);
        const auto& b = g.group(group);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    }
}

bool finite(const GaussianSet& g) {
    for (auto group : g.groups()) {
        for (float v : g.group(group)) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

/// A training view together with its target image and optional mask.
struct Target {
    render::View view;
    torch::Tensor image;  // 1 x 3 x H x W
    torch::Tensor mask;   // H x W uint8, undefined without mask
};

std::vector<Target> targets(const data::Dataset& dataset) {
    std::vector<Target> out;
    for (const auto& item : dataset.items) {
        Target t;
        t.view = item.view;
        t.image = guidance::to_tensor(item.image);
        if (item.mask) {
            t.mask = torch::from_blob(const_cast<std::uint8_t*>(item.mask->values.data()),
                                      {item.mask->height, item.mask->width}, torch::kUInt8)
                         .clone();
        }
        out.push_back(t);
        if (dataset.modality == Modality::Image2D) {
            // seen from behind, the image plane shows the mirrored picture
            Target m;
            auto iv = std::get<render::ImageView>(item.view);
            iv.mirrored = true;
            m.view = iv;
            m.image = t.image.flip({3});
            if (t.mask.defined()) m.mask = t.mask.flip({1});
            out.push_back(m);
        }
    }
    return out;
}

std::array<double, splat::kAllParamGroups.size()> group_rates(const LearningRates& lr, double extent,
                                                              const std::vector<ParamGroup>& enabled,
                                                              const GaussianSet& model) {
    std::array<double, splat::kAllParamGroups.size()> rates{};
    const auto present = model.groups();
    for (auto g : enabled) {
        if (std::find(present.begin(), present.end(), g) == present.end()) continue;
        double r = lr.get(g);
        if (g == ParamGroup::Means || g == ParamGroup::Velocities) r *= extent;
        rates[static_cast<std::size_t>(g)] = r;
    }
    return rates;
}

Adam make_optimizer(const GaussianSet& model, const std::array<double, splat::kAllParamGroups.size()>& rates) {
    Adam adam(model, rates);
    if (model.modality == Modality::Image2D) {
        std::vector<double> m(model.log_scales.size(), 1.0);
        for (std::size_t i = 0; i < m.size(); i += 3) m[i] = 0.0;
        adam.set_multipliers(ParamGroup::Scales, std::move(m));
    }
    if (model.sh_degree > 0) {
        const std::size_t k = model.sh_coeffs();
        std::vector<double> m(model.sh.size(), 1.0);
        for (std::size_t i = 0; i < m.size(); ++i) {
            if ((i / 3) % k != 0) m[i] = kHigherBandRate;
        }
        adam.set_multipliers(ParamGroup::Colors, std::move(m));
    }
    return adam;
}

torch::Tensor gaussian_window(torch::Dtype dtype) {
    constexpr int kSize = 11;
    constexpr double kSigma = 1.5;
    auto x = torch::arange(kSize, torch::kFloat64) - (kSize / 2);
    auto g = torch::exp(-x.square() / (2 * kSigma * kSigma));
    g = g / g.sum();
    return torch::outer(g, g).to(dtype).expand({3, 1, kSize, kSize}).contiguous();
}

/// Quaternion (w, x, y, z) of a flat splat facing the viewer, rotated in-plane by `theta`.
std::array<float, 4> facing_quaternion(double theta) {
    const double c = std::sqrt(0.5), h = theta / 2;
    return {float(c * std::cos(h)), float(-c * std::sin(h)), float(c * std::cos(h)), float(c * std::sin(h))};
}

void init_planar(GaussianSet& m, const data::Dataset& ds, std::mt19937_64& rng) {
    const int w = ds.width(), h = ds.height();
    const std::size_t n = m.size();
    std::uniform_real_distribution<double> ux(0, w - 1), uy(0, h - 1), unit(0, 1), jitter(-0.2, 0.2);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const bool video = ds.modality == Modality::Video;
    const std::size_t frames = ds.items.size();
    const double spacing = video ? 1.0 / double(std::max<std::size_t>(1, frames - 1)) : 1.0;
    const double radius = 0.5 * std::sqrt(double(w) * h * (video ? double(frames) / 4.0 : 1.0) / double(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ux(rng), y = uy(rng);
        std::size_t frame = 0;
        if (video) frame = std::min(frames - 1, std::size_t(unit(rng) * double(frames)));
        m.means[3 * i] = float(x);
        m.means[3 * i + 1] = float(y);
        // distinct depths keep the compositing order unambiguous
        m.means[3 * i + 2] = float(order[i] + 1);
        const double theta = unit(rng) * M_PI;
        const auto q = video ? std::array<float, 4>{float(std::cos(theta / 2)), 0, 0, float(std::sin(theta / 2))}
                             : facing_quaternion(theta);
        std::copy(q.begin(), q.end(), m.rotations.begin() + 4 * i);
        const float ls = float(std::log(std::max(0.5, radius)) + jitter(rng));
        for (int k = video ? 0 : 1; k < 3; ++k) m.log_scales[3 * i + k] = ls;
        m.opacity_logits[i] = 0.0f;
        const auto& img = ds.items[frame].image;
        const int px = int(std::lround(x)), py = int(std::lround(y));
        for (int c = 0; c < 3; ++c) m.sh[3 * i + c] = float((img.at(px, py, c) - 0.5) / kShC0);
        if (video) {
            m.time_centers[i] = float(std::clamp(double(frame) * spacing + 0.25 * spacing * jitter(rng), 0.0, 1.0));
            m.log_time_scales[i] = float(std::log(spacing));
        }
    }
}

void init_scene(GaussianSet& m, const data::Dataset& ds, std::mt19937_64& rng) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& item : ds.items) nearest = std::min(nearest, std::get<splat::Camera>(item.view).center().norm());
    const double radius = 0.5 * nearest;
    const std::size_t n = m.size();
    std::normal_distribution<double> normal(0, 1);
    std::uniform_real_distribution<double> unit(0, 1), color(-0.1, 0.1);
    const float ls = float(std::log(radius / std::cbrt(double(n))));
    for (std::size_t i = 0; i < n; ++i) {
        double v[3] = {normal(rng), normal(rng), normal(rng)};
        const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        const double r = radius * std::cbrt(unit(rng)) / std::max(len, 1e-12);
        for (int k = 0; k < 3; ++k) {
            m.means[3 * i + k] = float(v[k] * r);
            m.log_scales[3 * i + k] = ls;
        }
        m.opacity_logits[i] = float(inverse_sigmoid(0.1));
        for (int c = 0; c < 3; ++c) m.sh[3 * i * m.sh_coeffs() + c] = float(color(rng));
    }
}

template <typename Step>
GaussianSet run_loop(GaussianSet model, int steps, int snapshot_every, Step&& step) {
    GaussianSet snapshot = model;
    int bad = 0;
    for (int s = 1; s <= steps; ++s) {
        try {
            step(model, std::uint64_t(s));
            bad = 0;
        } catch (const TrainingDivergedError& e) {
            if (++bad >= 2) {
                throw TrainingDiverged(fmt::format("training diverged at step {}: {}", s, e.what()), e.component,
                                       snapshot, std::uint64_t(s));
            }
        }
        if (s % snapshot_every == 0) snapshot = model;
    }
    return model;
}

}  // namespace

std::string to_jsonl(const std::vector<StepRecord>& log) {
    std::string out;
    for (const auto& r : log) {
        nlohmann::ordered_json j;
        j["step"] = r.step;
        j["l_d"] = r.l_d;
        j["l_p"] = r.l_p;
        j["l_c"] = r.l_c;
        j["l_b"] = r.l_b;
        j["total"] = r.total;
        out += j.dump();
        out += '\n';
    }
    return out;
}

void write_log(const std::filesystem::path& path, const std::vector<StepRecord>& log) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidParameterError(fmt::format("cannot write log '{}'", path.string()));
    f << to_jsonl(log);
}

GaussianSet initialize(const data::Dataset& dataset, const FitConfig& cfg) {
    cfg.validate();
    if (dataset.items.empty()) throw DatasetError("dataset is empty");
    const Modality mod = dataset.modality;
    if (mod != Modality::Scene3D && cfg.sh_degree != 0) {
        throw InvalidParameterError("image and video models use SH degree 0");
    }
    std::size_t n = std::size_t(cfg.num_gaussians);
    if (n == 0) {
        const double pixels = double(dataset.width()) * dataset.height() / 16.0;
        if (mod == Modality::Image2D) n = std::size_t(pixels);
        if (mod == Modality::Video) n = std::size_t(pixels * std::max(1.0, double(dataset.items.size()) / 4.0));
        if (mod == Modality::Scene3D) n = kDefaultSceneGaussians;
        n = std::max<std::size_t>(n, 1);
    }
    auto model = GaussianSet::zeros(mod, n, cfg.sh_degree);
    std::mt19937_64 rng(cfg.seed ^ 0x1417a11e5ULL);
    if (mod == Modality::Scene3D) {
        init_scene(model, dataset, rng);
    } else {
        init_planar(model, dataset, rng);
    }
    splat::validate(model);
    return model;
}

torch::Tensor reconstruction_loss(const torch::Tensor& render, const torch::Tensor& target, double lambda_ssim) {
    if (render.sizes() != target.sizes()) throw InvalidParameterError("render and target sizes differ");
    const auto l1 = (render - target).abs().mean();
    if (lambda_ssim == 0) return l1;
    const auto w = gaussian_window(render.scalar_type());
    auto conv = [&](const torch::Tensor& x) { return F::conv2d(x, w, F::Conv2dFuncOptions().padding(5).groups(3)); };
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto mu1 = conv(render), mu2 = conv(target);
    const auto s11 = conv(render * render) - mu1 * mu1;
    const auto s22 = conv(target * target) - mu2 * mu2;
    const auto s12 = conv(render * target) - mu1 * mu2;
    const auto ssim = ((2 * mu1 * mu2 + c1) * (2 * s12 + c2)) / ((mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2));
    return (1 - lambda_ssim) * l1 + lambda_ssim * (1 - ssim.mean());
}

double psnr(const data::Image& a, const data::Image& b) {
    if (a.width != b.width || a.height != b.height) throw InvalidParameterError("PSNR needs equal image sizes");
    double se = 0;
    for (std::size_t i = 0; i < a.rgb.size(); ++i) se += std::pow(double(a.rgb[i]) - b.rgb[i], 2);
    const double mse = se / double(a.rgb.size());
    return mse == 0 ? std::numeric_limits<double>::infinity() : 10 * std::log10(1.0 / mse);
}

torch::Tensor render_tensor(const GaussianSet& model, const render::View& view, const render::Color& background) {
    const auto out = render::render(model, view, background);
    return rgb_tensor(out.rgb, out.width, out.height);
}

GaussianSet fit_reconstruction(const data::Dataset& dataset, const FitConfig& cfg,
                               const std::function<void(const FitRecord&)>& on_step) {
    return fit_reconstruction(initialize(dataset, cfg), dataset, cfg, on_step);
}

GaussianSet fit_reconstruction(GaussianSet model, const data::Dataset& dataset, const FitConfig& cfg,
                               const std::function<void(const FitRecord&)>& on_step) {
    cfg.validate();
    if (dataset.items.empty()) throw DatasetError("dataset is empty");
    if (model.modality != dataset.modality) {
        throw IncompatibleModelsError(fmt::format("{} model cannot be fitted to a {} dataset",
                                                  splat::to_string(model.modality), splat::to_string(dataset.modality)));
    }
    const auto views = targets(dataset);
    const double extent = scene_extent(dataset);
    std::vector<ParamGroup> all(splat::kAllParamGroups.begin(), splat::kAllParamGroups.end());
    Adam adam = make_optimizer(model, group_rates(cfg.lr, extent, all, model));
    std::mt19937_64 rng(cfg.seed ^ 0xf17ULL);
    // image models fit the front and mirrored views together every step
    const std::size_t per_step = dataset.modality == Modality::Image2D ? 2 : 1;
    std::uniform_int_distribution<std::size_t> pick(0, views.size() / per_step - 1);

    return run_loop(std::move(model), cfg.steps, cfg.snapshot_every, [&](GaussianSet& m, std::uint64_t step) {
        const std::size_t first = pick(rng) * per_step;
        auto grads = m.zeros_like();
        double total = 0;
        for (std::size_t k = first; k < first + per_step; ++k) {
            render::Rasterizer<float> raster(m, views[k].view, dataset.background);
            const auto& out = raster.output();
            auto img = rgb_tensor(out.rgb, out.width, out.height).requires_grad_(true);
            auto loss = reconstruction_loss(img, views[k].image, cfg.lambda_ssim);
            total += loss.item<double>();
            if (!std::isfinite(total)) throw TrainingDivergedError("reconstruction loss is not finite", "loss");
            loss.backward();
            const auto d_rgb = rgb_gradient(img.grad());
            accumulate(grads, raster.backward(d_rgb));
        }
        if (!finite(grads)) throw TrainingDivergedError("reconstruction gradient is not finite", "gradient");
        adam.step(m, grads);
        if (on_step) on_step(FitRecord{step, total});
    });
}

StylizeResult stylize(const GaussianSet& model, const guidance::StyleCondition& condition, const data::Dataset& dataset,
                      const TrainConfig& cfg, const Encoders& encoders,
                      const std::function<void(const StepRecord&)>& on_step) {
    if (dataset.items.empty()) throw DatasetError("dataset is empty");
    if (model.modality != dataset.modality) {
        throw IncompatibleModelsError(fmt::format("{} model cannot be stylized with a {} dataset",
                                                  splat::to_string(model.modality), splat::to_string(dataset.modality)));
    }
    cfg.validate(model.modality);
    condition.validate();
    splat::validate(model);
    const auto& w = cfg.weights;
    if (w.lambda_p > 0) cfg.patch.validate(dataset.width(), dataset.height());
    StylizeResult result;
    if (cfg.steps == 0) {
        result.model = model;
        return result;
    }
    const bool need_clip = w.lambda_d > 0 || w.lambda_p > 0;
    if (need_clip && !encoders.clip) throw InvalidParameterError("stylization needs a CLIP encoder");
    if (w.lambda_c > 0 && !encoders.vgg) throw InvalidParameterError("content loss needs VGG features");

    const auto views = targets(dataset);
    guidance::EmbeddingPair style;
    std::vector<torch::Tensor> source_embeds(views.size());
    std::vector<guidance::FeatureStack> source_features(views.size());
    {
        torch::NoGradGuard no_grad;
        if (need_clip) style = encoders.clip->embed_style(condition);
        for (std::size_t v = 0; v < views.size(); ++v) {
            if (need_clip) source_embeds[v] = encoders.clip->embed_images(views[v].image)[0];
            if (w.lambda_c > 0) source_features[v] = encoders.vgg->features(views[v].image);
        }
    }

    const double extent = scene_extent(dataset);
    Adam adam = make_optimizer(model, group_rates(cfg.lr, extent, cfg.optimized, model));
    std::mt19937_64 rng(cfg.seed ^ 0x57e1eULL);
    std::uniform_int_distribution<std::size_t> pick(0, views.size() - 1);
    style::PatchConfig patch = cfg.patch;
    patch.seed = cfg.seed;

    result.model = run_loop(model, cfg.steps, cfg.snapshot_every, [&](GaussianSet& m, std::uint64_t step) {
        const auto& target = views[pick(rng)];
        render::Rasterizer<float> raster(m, target.view, dataset.background);
        const auto& out = raster.output();
        auto img = rgb_tensor(out.rgb, out.width, out.height);
        if (!torch::isfinite(img).all().item<bool>()) throw TrainingDivergedError("render is not finite", "render");
        img.requires_grad_(true);

        const auto v = std::size_t(&target - views.data());
        torch::Tensor l_d, l_p, l_c, l_b;
        if (w.lambda_d > 0) l_d = style::directional_loss(*encoders.clip, img, source_embeds[v], style);
        if (w.lambda_p > 0) l_p = style::patch_loss(*encoders.clip, img, source_embeds[v], style, patch, step);
        if (w.lambda_c > 0) l_c = style::content_loss(encoders.vgg->features(img), source_features[v]);
        if (w.lambda_b > 0 && target.mask.defined()) {
            l_b = style::background_loss(img, target.mask, dataset.background).value;
        }
        auto value = [](const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; };
        StepRecord rec{step, value(l_d), value(l_p), value(l_c), value(l_b), 0.0};
        rec.total = style::total_loss(style::LossValues{rec.l_d, rec.l_p, rec.l_c, rec.l_b}, w);

        auto total = style::total_loss(l_d, l_p, l_c, l_b, w);
        if (total.requires_grad()) {
            total.backward();
            auto grads = raster.backward(rgb_gradient(img.grad()));
            if (!finite(grads)) throw TrainingDivergedError("style gradient is not finite", "gradient");
            adam.step(m, grads);
        }
        result.log.push_back(rec);
        if (on_step) on_step(rec);
    });
    return result;
}

}  // namespace clipsplat::train
