// Runs the acceptance criteria. Usage: acceptance [criterion ...] (default: all).
// Exit status: 0 all selected criteria passed, 77 some skipped and none failed, 1 otherwise.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "clipsplat/cli/cli.hpp"
#include "clipsplat/metrics/metrics.hpp"
#include "clipsplat/splat/checkpoint.hpp"
#include "clipsplat/splat/interpolate.hpp"
#include "clipsplat/style/losses.hpp"
#include "clipsplat/train/trainer.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "random_models.hpp"

using namespace clipsplat;
namespace fs = std::filesystem;
namespace fx = clipsplat::testing;
using splat::Modality;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status;
    std::string detail;
};

Outcome pass(std::string d) { return {Status::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::Fail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::Skip, std::move(d)}; }

constexpr Modality kModalities[] = {Modality::Image2D, Modality::Video, Modality::Scene3D};

template <typename T>
double max_abs(const std::vector<T>& a, const std::vector<T>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

guidance::EncoderOptions synthetic_options() {
    guidance::EncoderOptions o;
    o.cache_dir = "/nonexistent";
    o.allow_synthetic = true;
    return o;
}

bool same_params(const splat::GaussianSet& a, const splat::GaussianSet& b, bool skip_colors = false) {
    if (!splat::same_layout(a, b)) return false;
    for (auto g : splat::kAllParamGroups) {
        if (skip_colors && g == splat::ParamGroup::Colors) continue;
        if (!splat::bit_equal(a.group(g), b.group(g))) return false;
    }
    return true;
}

data::Dataset stylize_fixture(Modality m) {
    switch (m) {
        case Modality::Image2D: return fx::three_gaussian_dataset();
        case Modality::Video: return fx::moving_disk_dataset(8);
        case Modality::Scene3D: break;
    }
    return fx::scene_dataset(fx::random_model<float>(Modality::Scene3D, 48, 31), 3);
}

/// Preset of the modality scaled to the 64 x 64 fixtures: 32 px patches instead of 128.
train::TrainConfig fixture_config(Modality m, int steps) {
    auto cfg = train::preset(train::default_preset(m));
    cfg.steps = steps;
    cfg.patch.patch_size = 32;
    cfg.seed = 3;
    return cfg;
}

Outcome renderer_equivalence() {
    double worst = 0;
    for (auto m : kModalities) {
        for (std::uint64_t s = 0; s < 10; ++s) {
            const int degree = m == Modality::Scene3D ? int(s % 4) : 0;
            const auto model = fx::random_model<double>(m, 4 + 6 * s, 1000 + s, degree);
            const auto view = fx::test_view(m, 0.1 * double(s), s % 2 == 1);
            const render::Color bg{0.1, 0.4, 0.8};
            const auto fast = render::render(model, view, bg);
            const auto ref = render::render_reference(model, view, bg);
            worst = std::max({worst, max_abs(fast.rgb, ref.rgb), max_abs(fast.alpha, ref.alpha)});
        }
    }
    const auto d = fmt::format("30 models, max |fast - reference| = {:.3g} (limit 1e-5)", worst);
    return worst <= 1e-5 ? pass(d) : fail(d);
}

Outcome gradient_correctness() {
    double worst = 0;
    std::string where;
    int checks = 0;
    for (auto m : kModalities) {
        for (std::uint64_t s = 0; s < 5; ++s) {
            const int degree = m == Modality::Scene3D ? 2 : 0;
            const auto model = fx::random_model<double>(m, 6, 2000 + s, degree);
            const auto objective = fx::PixelObjective::ones(fx::kViewSize, fx::kViewSize, false);
            const auto view = fx::test_view(m, 0.45, s == 1);
            for (const auto& e : fx::check_gradients(model, view, {0.3, 0.6, 0.1}, objective, 1e-4)) {
                ++checks;
                if (e.rel_error > worst) {
                    worst = e.rel_error;
                    where = fmt::format("{} {}", splat::to_string(m), splat::to_string(e.group));
                }
            }
        }
    }
    const auto d = fmt::format("{} group checks on 15 models, worst rel-err {:.3g} ({}), limit 1e-3", checks, worst,
                               where);
    return worst <= 1e-3 ? pass(d) : fail(d);
}

Outcome loss_identities() {
    std::vector<std::string> failures;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 10);
    double worst_total = 0;
    for (int i = 0; i < 1000; ++i) {
        const style::LossValues v{u(rng), u(rng), u(rng), u(rng)};
        const style::LossWeights w{u(rng), u(rng), u(rng), u(rng)};
        const double expected = w.lambda_d * v.l_d + w.lambda_p * v.l_p + w.lambda_c * v.l_c + w.lambda_b * v.l_b;
        worst_total = std::max(worst_total, std::abs(style::total_loss(v, w) - expected));
    }
    if (worst_total > 1e-12) failures.push_back(fmt::format("total_loss off by {:.3g}", worst_total));

    auto gen = at::detail::createCPUGenerator(11);
    const auto r = torch::randn({1000, 32}, gen, torch::kFloat64);
    const auto s = torch::randn({1000, 32}, gen, torch::kFloat64);
    double lo = 2, hi = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto pos = torch::randn({32}, gen, torch::kFloat64), neg = torch::randn({32}, gen, torch::kFloat64);
        const double l = style::directional_losses(r[i].view({1, -1}), s[i], pos, neg).item<double>();
        lo = std::min(lo, l);
        hi = std::max(hi, l);
    }
    if (lo < 0 || hi > 2) failures.push_back(fmt::format("directional loss range [{}, {}]", lo, hi));

    const render::Color bg{0.2, 0.7, 1.0};
    auto c = torch::tensor({bg[0], bg[1], bg[2]}, torch::kFloat64).view({1, 3, 1, 1});
    const auto exact = c.expand({1, 3, 16, 16}).clone();
    const auto mask = torch::zeros({16, 16}, torch::kUInt8);
    const double b0 = style::background_loss(exact, mask, {0, 0, 0}).value.item<double>();
    const double b_exact = style::background_loss(exact, mask, bg).value.item<double>();
    const double b_max = style::background_loss(torch::ones({1, 3, 16, 16}, torch::kFloat64), mask, {0, 0, 0})
                             .value.item<double>();
    if (b_exact != 0.0 || b_max != 1.0 || b0 <= 0) {
        failures.push_back(fmt::format("background fixed points {} / {}", b_exact, b_max));
    }

    const auto clip = guidance::load_clip(guidance::EncoderRole::Loss, synthetic_options())->with_dtype(torch::kFloat64);
    const auto render = torch::rand({1, 3, 64, 64}, gen, torch::kFloat64);
    const auto source = clip->embed_images(torch::rand({1, 3, 64, 64}, gen, torch::kFloat64))[0];
    const auto style_pair = clip->embed_style(guidance::StyleCondition::text("Fire"));
    style::PatchConfig cfg;
    cfg.num_patch = 1;
    cfg.patch_size = 64;
    cfg.distortion_scale = 0;
    const double p = style::patch_loss(*clip, render, source, style_pair, cfg, 0).item<double>();
    const double d = style::directional_loss(*clip, render, source, style_pair).item<double>();
    if (std::abs(p - d) > 1e-12) failures.push_back(fmt::format("patch reduction differs by {:.3g}", std::abs(p - d)));

    if (!failures.empty()) return fail(fmt::format("{}", fmt::join(failures, "; ")));
    return pass(fmt::format("total exact to {:.2g}; directional range [{:.3f}, {:.3f}] over 1000 pairs; background 0 "
                            "and 1; patch reduction |diff| {:.2g}",
                            worst_total, lo, hi, std::abs(p - d)));
}

Outcome count_invariance() {
    const train::Encoders enc{guidance::load_clip(guidance::EncoderRole::Loss, synthetic_options()),
                              guidance::load_vgg(synthetic_options())};
    std::vector<std::string> parts;
    bool ok = true;
    for (auto m : kModalities) {
        const auto ds = stylize_fixture(m);
        const auto model = m == Modality::Scene3D ? fx::random_model<float>(m, 48, 32) : fx::random_model<float>(m, 48, 33);
        const auto res = train::stylize(model, guidance::StyleCondition::text("Fire"), ds, fixture_config(m, 100), enc);
        const auto before = splat::encode_checkpoint({model, splat::Stage::Reconstructed, {}, std::nullopt});
        const auto after = splat::encode_checkpoint({res.model, splat::Stage::Reconstructed, {}, std::nullopt});
        bool same = res.model.size() == model.size() && before.size() == after.size();
        for (auto g : splat::kAllParamGroups) same = same && res.model.group(g).size() == model.group(g).size();
        ok = ok && same && !same_params(res.model, model);
        parts.push_back(fmt::format("{} {} -> {} Gaussians, {} -> {} bytes", splat::to_string(m), model.size(),
                                    res.model.size(), before.size(), after.size()));
    }
    const auto d = fmt::format("100 steps each (synthetic encoders): {}", fmt::join(parts, "; "));
    return ok ? pass(d) : fail(d);
}

Outcome video_colors_only() {
    const train::Encoders enc{guidance::load_clip(guidance::EncoderRole::Loss, synthetic_options()),
                              guidance::load_vgg(synthetic_options())};
    const auto model = fx::random_model<float>(Modality::Video, 48, 34);
    const auto res = train::stylize(model, guidance::StyleCondition::text("Fire"), stylize_fixture(Modality::Video),
                                    fixture_config(Modality::Video, 50), enc);
    const bool others = same_params(res.model, model, true);
    const bool colors_changed = !splat::bit_equal(res.model.sh, model.sh);
    const auto d = fmt::format("standard-video, 50 steps: non-color arrays {}, colors {}",
                               others ? "bit-identical" : "CHANGED", colors_changed ? "changed" : "unchanged");
    return others && colors_changed ? pass(d) : fail(d);
}

Outcome stylization_effect() {
    std::shared_ptr<const guidance::ClipEncoder> loss_clip, metric_clip;
    std::shared_ptr<const guidance::VggFeatures> vgg;
    try {
        loss_clip = guidance::load_clip(guidance::EncoderRole::Loss);
        metric_clip = guidance::load_clip(guidance::EncoderRole::Metric);
        vgg = guidance::load_vgg();
    } catch (const WeightsUnavailableError& e) {
        return skip(fmt::format("released encoder weights unavailable ({}); run tools/fetch_weights.py and set "
                                "CLIPSPLAT_CACHE",
                                e.what()));
    }
    const auto ds = data::load_image(fs::path(CLIPSPLAT_FIXTURES) / "images" / "chelsea.png");
    train::FitConfig fit;
    fit.seed = 1;
    const auto base = train::fit_reconstruction(ds, fit);
    const auto condition = guidance::StyleCondition::text("Fire");
    auto cfg = train::preset("standard-2d");
    cfg.steps = 1000;
    cfg.seed = 1;
    const auto res = train::stylize(base, condition, ds, cfg, {loss_clip, vgg});

    const auto& view = ds.items[0].view;
    auto clip_s = [&](const splat::GaussianSet& m) {
        const auto img = data::to_image(render::render(m, view, ds.background));
        return metrics::evaluate(*metric_clip, {img}, condition).clip_s.value();
    };
    const double before = clip_s(base), after = clip_s(res.model);
    torch::NoGradGuard no_grad;
    const double lc_final = style::content_loss(*vgg, train::render_tensor(res.model, view, ds.background),
                                                guidance::to_tensor(ds.items[0].image))
                                .item<double>();
    const double lc_first = res.log.front().l_c;
    const auto d = fmt::format("CLIP-S {:.2f} -> {:.2f} (need +5); content loss final {:.4g} vs 3 x step-1 {:.4g}",
                               before, after, lc_final, 3 * lc_first);
    return after - before >= 5 && lc_final <= 3 * lc_first ? pass(d) : fail(d);
}

Outcome metric_fixed_points() {
    std::shared_ptr<const guidance::ClipEncoder> enc;
    std::string which = "released";
    try {
        enc = guidance::load_clip(guidance::EncoderRole::Metric);
    } catch (const WeightsUnavailableError&) {
        enc = guidance::load_clip(guidance::EncoderRole::Metric, synthetic_options());
        which = "synthetic";
    }
    std::vector<data::Image> frames;
    const auto video = fx::moving_disk_dataset(6);
    for (const auto& item : video.items) frames.push_back(item.image);
    const auto e = metrics::embed_frames(*enc, frames);
    const double f = metrics::clip_f(e, e);
    const double cons = metrics::clip_cons(e, e).value;
    double fof_max = 0;
    for (int k : {1, 2, 3}) fof_max = std::max(fof_max, metrics::fof_consistency(frames, frames, k));
    const auto style_img = data::read_image(fs::path(CLIPSPLAT_FIXTURES) / "images" / "astronaut.png");
    const auto rep = metrics::evaluate(*enc, {style_img, style_img, style_img},
                                       guidance::StyleCondition::from_image(style_img));
    const double s = rep.clip_s.value();
    const bool ok = std::abs(f - 100) <= 0.01 && std::abs(cons - 100) <= 0.01 && fof_max == 0.0 &&
                    std::abs(s - 100) <= 0.1;
    const auto d = fmt::format("{} metric encoder: clip_f {:.4f}, clip_cons {:.4f}, max fof {} (k=1..3), clip_s {:.4f}",
                               which, f, cons, fof_max, s);
    return ok ? pass(d) : fail(d);
}

Outcome interpolation() {
    bool ok = true;
    double worst_mid = 0;
    std::mt19937_64 rng(5);
    // dyadic means keep every midpoint representable in float32 storage
    std::uniform_int_distribution<int> grid(-65536, 65536);
    for (auto m : kModalities) {
        auto a = fx::random_model<float>(m, 40, 41), b = fx::random_model<float>(m, 40, 42);
        for (auto* s : {&a, &b}) {
            for (float& v : s->means) v = float(grid(rng)) / 1024.0f;
        }
        const auto at0 = splat::interpolate(a, b, 0.0), at1 = splat::interpolate(a, b, 1.0);
        ok = ok && same_params(at0, a) && same_params(at1, b);
        const auto mid = splat::interpolate(a, b, 0.5);
        for (std::size_t k = 0; k < a.means.size(); ++k) {
            worst_mid = std::max(worst_mid, std::abs(double(mid.means[k]) - (double(a.means[k]) + double(b.means[k])) / 2));
        }
        for (double t : {0.0, 0.13, 0.5, 0.77, 1.0}) ok = ok && splat::interpolate(a, b, t).size() == a.size();
    }
    ok = ok && worst_mid <= 1e-12;
    const auto d = fmt::format("endpoints bit-exact: {}; max |mid - arithmetic midpoint| = {:.3g}; counts preserved",
                               ok ? "yes" : "check failed", worst_mid);
    return ok ? pass(d) : fail(d);
}

Outcome reconstruction() {
    const auto image = fx::three_gaussian_dataset();
    train::FitConfig cfg;
    cfg.steps = 2000;
    cfg.num_gaussians = 50;
    const auto model = train::fit_reconstruction(image, cfg);
    const double p_img =
        train::psnr(data::to_image(render::render(model, image.items[0].view, image.background)), image.items[0].image);

    const auto video = fx::moving_disk_dataset(8);
    train::FitConfig vcfg;
    vcfg.steps = 4000;
    const auto vmodel = train::fit_reconstruction(video, vcfg);
    double p_min = std::numeric_limits<double>::infinity();
    for (const auto& item : video.items) {
        p_min = std::min(p_min, train::psnr(data::to_image(render::render(vmodel, item.view, video.background)), item.image));
    }
    const auto d = fmt::format("3-Gaussian image {:.2f} dB (need 30); moving disk min per-frame {:.2f} dB (need 25)",
                               p_img, p_min);
    return p_img >= 30 && p_min >= 25 ? pass(d) : fail(d);
}

std::map<std::string, std::vector<char>> snapshot_dir(const fs::path& dir) {
    std::map<std::string, std::vector<char>> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream f(e.path(), std::ios::binary);
        out[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(f), {}};
    }
    return out;
}

Outcome determinism() {
    const auto root = fs::temp_directory_path() / "clipsplat_acceptance_determinism";
    fs::remove_all(root);
    const auto inputs = root / "inputs";
    fs::create_directories(inputs / "video");
    data::write_png(inputs / "image.png", fx::three_gaussian_dataset().items[0].image);
    const auto vds = fx::moving_disk_dataset(4);
    for (std::size_t i = 0; i < vds.items.size(); ++i) {
        data::write_png(inputs / "video" / fmt::format("f{}.png", i), vds.items[i].image);
    }
    auto run_all = [&](const fs::path& out) {
        fs::create_directories(out);
        const std::string img = (inputs / "image.png").string(), vid = (inputs / "video").string();
        auto p = [&](const std::string& n) { return (out / n).string(); };
        const std::vector<std::vector<std::string>> commands = {
            {"--seed", "9", "fit", "-i", img, "-o", p("fit.ckpt"), "--steps", "30", "--num-gaussians", "60", "--log",
             p("fit.jsonl")},
            {"--seed", "9", "fit", "-i", vid, "-o", p("vfit.ckpt"), "--steps", "20", "--num-gaussians", "60"},
            {"--seed", "9", "--synthetic-encoders", "stylize", "-i", img, "-c", p("fit.ckpt"), "-o", p("fire.ckpt"),
             "--prompt", "Fire", "--steps", "5", "--patch_size", "32", "--num_patch", "4", "--log", p("fire.jsonl")},
            {"--seed", "9", "--synthetic-encoders", "stylize", "-i", img, "-c", p("fit.ckpt"), "-o", p("ice.ckpt"),
             "--prompt", "Ice", "--steps", "5", "--patch_size", "32", "--num_patch", "4"},
            {"--seed", "9", "--synthetic-encoders", "stylize", "-i", vid, "-c", p("vfit.ckpt"), "-o",
             p("vfire.ckpt"), "--prompt", "Fire", "--steps", "3", "--patch_size", "32", "--num_patch", "4"},
            {"render", "-c", p("fire.ckpt"), "-o", p("fire.png")},
            {"render", "-c", p("vfire.ckpt"), "-o", p("vframes"), "--frames", "4"},
            {"interpolate", "-a", p("fire.ckpt"), "-b", p("ice.ckpt"), "-o", p("interp"), "--steps", "3"},
            {"--synthetic-encoders", "metrics", "--gt", vid, "--styled", p("vframes"), "--prompt", "Fire", "--k", "1",
             "2", "--json", p("metrics.json"), "--text", p("metrics.txt")},
        };
        for (const auto& c : commands) {
            std::ostringstream o, e;
            const int code = cli::run(c, o, e);
            if (code != 0) throw std::runtime_error(fmt::format("'{}' exited {}: {}", fmt::join(c, " "), code, e.str()));
        }
        return snapshot_dir(out);
    };
    try {
        const auto a = run_all(root / "a"), b = run_all(root / "b");
        fs::remove_all(root);
        std::vector<std::string> differing;
        for (const auto& [name, bytes] : a) {
            const auto it = b.find(name);
            if (it == b.end() || it->second != bytes) differing.push_back(name);
        }
        const auto d = fmt::format("fit/stylize/render/interpolate/metrics run twice: {} output files, {} differ{}",
                                   a.size(), differing.size(),
                                   differing.empty() ? "" : fmt::format(" ({})", fmt::join(differing, ", ")));
        return differing.empty() && a.size() == b.size() ? pass(d) : fail(d);
    } catch (const std::exception& e) {
        fs::remove_all(root);
        return fail(e.what());
    }
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all = {
        {1, "renderer-oracle equivalence", renderer_equivalence},
        {2, "gradient correctness", gradient_correctness},
        {3, "loss identities", loss_identities},
        {4, "count/size invariance", count_invariance},
        {5, "video color-only contract", video_colors_only},
        {6, "desk-scale stylization effect", stylization_effect},
        {7, "metric fixed points", metric_fixed_points},
        {8, "interpolation", interpolation},
        {9, "stage-1 reconstruction", reconstruction},
        {10, "determinism", determinism},
    };
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
    if (selected.empty()) {
        for (const auto& c : all) selected.push_back(c.id);
    }

    int failed = 0, skipped = 0;
    for (int id : selected) {
        const auto it = std::find_if(all.begin(), all.end(), [&](const Criterion& c) { return c.id == id; });
        if (it == all.end()) {
            std::cerr << "unknown criterion " << id << "\n";
            return 2;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = it->run();
        } catch (const std::exception& e) {
            o = fail(fmt::format("exception: {}", e.what()));
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Skip ? "SKIP" : "FAIL";
        std::cout << fmt::format("criterion {:>2} {:<30} {}  {} [{:.1f} s]", id, it->name, tag, o.detail, secs)
                  << std::endl;
        failed += o.status == Status::Fail;
        skipped += o.status == Status::Skip;
    }
    if (failed) return 1;
    return skipped ? 77 : 0;
}
