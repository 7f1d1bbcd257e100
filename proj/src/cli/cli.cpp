#include "clipsplat/cli/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "clipsplat/data/dataset.hpp"
#include "clipsplat/errors.hpp"
#include "clipsplat/log.hpp"
#include "clipsplat/metrics/metrics.hpp"
#include "clipsplat/splat/checkpoint.hpp"
#include "clipsplat/splat/interpolate.hpp"
#include "clipsplat/train/trainer.hpp"

namespace clipsplat::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using splat::Modality;

namespace {

struct Common {
    std::uint64_t seed = 0;
    bool verbose = false;
    std::string cache_dir;
    bool synthetic_encoders = false;
};

struct DataArgs {
    std::string input;
    std::string modality;
    std::string mask_dir;
    std::vector<double> background;
};

struct FitArgs {
    DataArgs data;
    std::string output;
    std::string log;
    int steps = 2000;
    int num_gaussians = 0;
    int sh_degree = 0;
    double lambda_ssim = 0.2;
    int snapshot_every = 100;
};

struct StylizeArgs {
    DataArgs data;
    std::string checkpoint;
    std::string output;
    std::string log;
    std::string preset;
    std::string prompt;
    std::string style_image;
    std::string negative = "Photo";
    std::optional<int> steps;
    std::optional<double> feature_lr;
    std::optional<double> lambda_d, lambda_p, lambda_c, lambda_b;
    std::optional<int> patch_size, num_patch;
    std::optional<double> distortion_scale;
    std::vector<std::string> optimize;
    std::optional<int> snapshot_every;
};

struct RenderArgs {
    std::string checkpoint;
    std::string output;
    std::optional<int> frames;
    std::string cameras;
    std::optional<int> width, height;
    bool mirrored = false;
};

struct InterpolateArgs {
    std::string a, b, output;
    std::optional<double> t;
    std::optional<int> steps;
};

struct MetricsArgs {
    std::string gt, styled;
    std::string prompt, style_image;
    std::string negative = "Photo";
    std::vector<int> k = {1};
    std::string json, text;
};

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string config_hash(const ordered_json& j) { return fmt::format("{:016x}", fnv1a(j.dump())); }

render::Color color_arg(const std::vector<double>& v) {
    if (v.size() != 3) throw InvalidParameterError("background needs three values r,g,b");
    for (double c : v) {
        if (!(c >= 0 && c <= 1)) throw InvalidParameterError("background values must lie in [0, 1]");
    }
    return {v[0], v[1], v[2]};
}

Modality detect_modality(const DataArgs& a) {
    if (!a.modality.empty()) return splat::modality_from_string(a.modality);
    const fs::path p(a.input);
    if (p.extension() == ".json") return Modality::Scene3D;
    if (fs::is_directory(p)) return fs::exists(p / "transforms.json") ? Modality::Scene3D : Modality::Video;
    if (p.string().find_first_of("*?") != std::string::npos) return Modality::Video;
    return Modality::Image2D;
}

data::Dataset load_dataset(const DataArgs& a) {
    if (a.input.empty()) throw InvalidParameterError("--input is required");
    const bool pattern = a.input.find_first_of("*?") != std::string::npos;
    if (!pattern && !fs::exists(a.input)) throw DatasetError(fmt::format("input '{}' does not exist", a.input));
    data::LoadOptions opt;
    if (!a.mask_dir.empty()) opt.mask_dir = a.mask_dir;
    if (!a.background.empty()) opt.background = color_arg(a.background);
    switch (detect_modality(a)) {
        case Modality::Image2D: return data::load_image(a.input, opt);
        case Modality::Video: return data::load_video(a.input, opt);
        case Modality::Scene3D: break;
    }
    fs::path p(a.input);
    if (fs::is_directory(p)) p /= "transforms.json";
    return data::load_multiview(p, opt);
}

splat::RenderHints hints_of(const data::Dataset& ds) {
    splat::RenderHints h;
    h.width = ds.width();
    h.height = ds.height();
    if (ds.modality == Modality::Video) h.frames = int(ds.items.size());
    h.background = {float(ds.background[0]), float(ds.background[1]), float(ds.background[2])};
    return h;
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& p, const std::string& text) {
    ensure_parent(p);
    std::ofstream f(p, std::ios::binary);
    if (!f) throw InvalidParameterError(fmt::format("cannot write '{}'", p.string()));
    f << text;
}

guidance::EncoderOptions encoder_options(const Common& c) {
    guidance::EncoderOptions o;
    if (!c.cache_dir.empty()) o.cache_dir = c.cache_dir;
    o.allow_synthetic = c.synthetic_encoders;
    o.seed = c.seed;
    return o;
}

guidance::StyleCondition condition_of(const std::string& prompt, const std::string& style_image,
                                      const std::string& negative) {
    if (prompt.empty() == style_image.empty()) {
        throw InvalidParameterError("give exactly one of --prompt and --style-image");
    }
    if (!prompt.empty()) return guidance::StyleCondition::text(prompt, negative);
    if (!fs::exists(style_image)) throw DatasetError(fmt::format("style image '{}' does not exist", style_image));
    return guidance::StyleCondition::from_image(data::read_image(style_image), negative);
}

void save_diverged(const train::TrainingDiverged& e, const fs::path& output, splat::Stage stage,
                   const splat::Provenance& prov, std::ostream& err) {
    splat::Checkpoint ck{e.snapshot, stage, prov, std::nullopt};
    fs::path snap = output;
    snap += ".diverged";
    ensure_parent(snap);
    splat::save_checkpoint(ck, snap);
    err << fmt::format("last snapshot written to {}\n", snap.string());
}

int cmd_fit(const FitArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    const auto ds = load_dataset(a.data);
    train::FitConfig cfg;
    cfg.steps = a.steps;
    cfg.num_gaussians = a.num_gaussians;
    cfg.sh_degree = a.sh_degree;
    cfg.lambda_ssim = a.lambda_ssim;
    cfg.seed = c.seed;
    cfg.snapshot_every = a.snapshot_every;
    if (ds.modality == Modality::Scene3D) cfg.lr = train::FitConfig::scene_rates();

    const ordered_json resolved = {{"command", "fit"},         {"input", a.data.input},
                                   {"modality", splat::to_string(ds.modality)},
                                   {"steps", cfg.steps},        {"num_gaussians", cfg.num_gaussians},
                                   {"sh_degree", cfg.sh_degree}, {"lambda_ssim", cfg.lambda_ssim},
                                   {"seed", cfg.seed}};
    const splat::Provenance prov{config_hash(resolved), c.seed, std::uint64_t(cfg.steps)};

    std::string log;
    splat::GaussianSet model;
    try {
        model = train::fit_reconstruction(ds, cfg, [&](const train::FitRecord& r) {
            log += ordered_json{{"step", r.step}, {"loss", r.loss}}.dump() + "\n";
        });
    } catch (const train::TrainingDiverged& e) {
        save_diverged(e, a.output, splat::Stage::Reconstructed, prov, err);
        throw;
    }
    ensure_parent(a.output);
    splat::save_checkpoint({model, splat::Stage::Reconstructed, prov, hints_of(ds)}, a.output);
    if (!a.log.empty()) write_text(a.log, log);
    out << fmt::format("fitted {} Gaussians ({}) -> {}\n", model.size(), splat::to_string(ds.modality), a.output);
    return kOk;
}

int cmd_stylize(const StylizeArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    if (!fs::exists(a.checkpoint)) throw DatasetError(fmt::format("checkpoint '{}' does not exist", a.checkpoint));
    const auto in = splat::load_checkpoint(a.checkpoint);
    auto data_args = a.data;
    if (data_args.modality.empty()) data_args.modality = std::string(splat::to_string(in.model.modality));
    const auto ds = load_dataset(data_args);
    const auto condition = condition_of(a.prompt, a.style_image, a.negative);

    auto cfg = train::preset(a.preset.empty() ? train::default_preset(in.model.modality) : a.preset);
    if (a.steps) cfg.steps = *a.steps;
    if (a.feature_lr) cfg.lr.features = *a.feature_lr;
    if (a.lambda_d) cfg.weights.lambda_d = *a.lambda_d;
    if (a.lambda_p) cfg.weights.lambda_p = *a.lambda_p;
    if (a.lambda_c) cfg.weights.lambda_c = *a.lambda_c;
    if (a.lambda_b) cfg.weights.lambda_b = *a.lambda_b;
    if (a.patch_size) cfg.patch.patch_size = *a.patch_size;
    if (a.num_patch) cfg.patch.num_patch = *a.num_patch;
    if (a.distortion_scale) cfg.patch.distortion_scale = *a.distortion_scale;
    if (a.snapshot_every) cfg.snapshot_every = *a.snapshot_every;
    if (!a.optimize.empty()) {
        cfg.optimized.clear();
        for (const auto& g : a.optimize) cfg.optimized.push_back(splat::param_group_from_string(g));
    }
    cfg.seed = c.seed;
    cfg.validate(in.model.modality);

    ordered_json groups = ordered_json::array();
    for (auto g : cfg.optimized) groups.push_back(splat::to_string(g));
    const ordered_json resolved = {
        {"command", "stylize"},
        {"input", a.data.input},
        {"source", in.provenance.config_hash},
        {"preset", cfg.preset},
        {"condition", condition.kind == guidance::StyleCondition::Kind::Text ? condition.prompt : a.style_image},
        {"negative", condition.negative},
        {"steps", cfg.steps},
        {"feature_lr", cfg.lr.features},
        {"lambda_d", cfg.weights.lambda_d},
        {"lambda_p", cfg.weights.lambda_p},
        {"lambda_c", cfg.weights.lambda_c},
        {"lambda_b", cfg.weights.lambda_b},
        {"patch_size", cfg.patch.patch_size},
        {"num_patch", cfg.patch.num_patch},
        {"distortion_scale", cfg.patch.distortion_scale},
        {"optimize", groups},
        {"seed", cfg.seed}};
    const splat::Provenance prov{config_hash(resolved), c.seed, std::uint64_t(cfg.steps)};

    train::Encoders enc;
    if (cfg.steps > 0) {
        const auto opt = encoder_options(c);
        if (cfg.weights.lambda_d > 0 || cfg.weights.lambda_p > 0) {
            enc.clip = guidance::load_clip(guidance::EncoderRole::Loss, opt);
        }
        if (cfg.weights.lambda_c > 0) enc.vgg = guidance::load_vgg(opt);
    }
    train::StylizeResult res;
    try {
        res = train::stylize(in.model, condition, ds, cfg, enc);
    } catch (const train::TrainingDiverged& e) {
        save_diverged(e, a.output, splat::Stage::Stylized, prov, err);
        throw;
    }
    ensure_parent(a.output);
    splat::save_checkpoint({res.model, splat::Stage::Stylized, prov, in.hints ? in.hints : hints_of(ds)}, a.output);
    if (!a.log.empty()) write_text(a.log, train::to_jsonl(res.log));
    out << fmt::format("stylized {} Gaussians with {} for {} steps -> {}\n", res.model.size(), cfg.preset, cfg.steps,
                       a.output);
    return kOk;
}

int cmd_render(const RenderArgs& a, std::ostream& out) {
    if (!fs::exists(a.checkpoint)) throw DatasetError(fmt::format("checkpoint '{}' does not exist", a.checkpoint));
    const auto ck = splat::load_checkpoint(a.checkpoint);
    const auto hints = ck.hints.value_or(splat::RenderHints{});
    const int w = a.width.value_or(hints.width), h = a.height.value_or(hints.height);
    if (w <= 0 || h <= 0) throw InvalidParameterError("render size unknown; pass --width and --height");
    const render::Color bg{hints.background[0], hints.background[1], hints.background[2]};
    const fs::path dst(a.output);
    int written = 0;
    auto emit = [&](const render::View& view, const fs::path& file) {
        ensure_parent(file);
        data::write_png(file, data::to_image(render::render(ck.model, view, bg)));
        ++written;
    };
    switch (ck.model.modality) {
        case Modality::Image2D:
            emit(render::ImageView{w, h, a.mirrored}, dst.extension() == ".png" ? dst : dst / "render.png");
            break;
        case Modality::Video: {
            const int n = a.frames.value_or(hints.frames > 0 ? hints.frames : 1);
            if (n < 1) throw InvalidParameterError("--frames must be >= 1");
            for (int i = 0; i < n; ++i) {
                const double t = n > 1 ? double(i) / (n - 1) : 0.0;
                emit(render::VideoView{w, h, t}, dst / fmt::format("frame_{:04d}.png", i));
            }
            break;
        }
        case Modality::Scene3D: {
            if (a.cameras.empty()) throw InvalidParameterError("scene checkpoints need --cameras transforms.json");
            const auto cams = data::load_cameras(a.cameras, w, h);
            for (std::size_t i = 0; i < cams.size(); ++i) emit(cams[i], dst / fmt::format("view_{:04d}.png", i));
            break;
        }
    }
    out << fmt::format("wrote {} image(s) to {}\n", written, dst.string());
    return kOk;
}

int cmd_interpolate(const InterpolateArgs& a, std::ostream& out) {
    if (a.t.has_value() == a.steps.has_value()) throw InvalidParameterError("give exactly one of --t and --steps");
    for (const auto& p : {a.a, a.b}) {
        if (!fs::exists(p)) throw DatasetError(fmt::format("checkpoint '{}' does not exist", p));
    }
    const auto ca = splat::load_checkpoint(a.a), cb = splat::load_checkpoint(a.b);
    auto make = [&](double t) {
        splat::Checkpoint ck;
        ck.model = splat::interpolate(ca.model, cb.model, t);
        ck.stage = t >= 0.5 ? cb.stage : ca.stage;
        ck.provenance = ca.provenance;
        ck.provenance.config_hash = config_hash({{"command", "interpolate"},
                                                 {"a", ca.provenance.config_hash},
                                                 {"b", cb.provenance.config_hash},
                                                 {"t", t}});
        ck.hints = ca.hints;
        return ck;
    };
    if (a.t) {
        ensure_parent(a.output);
        splat::save_checkpoint(make(*a.t), a.output);
        out << fmt::format("t={} -> {}\n", *a.t, a.output);
        return kOk;
    }
    if (*a.steps < 2) throw InvalidParameterError("--steps must be >= 2");
    fs::create_directories(a.output);
    for (int i = 0; i < *a.steps; ++i) {
        const double t = double(i) / (*a.steps - 1);
        const auto file = fs::path(a.output) / fmt::format("interp_{:03d}.ckpt", i);
        splat::save_checkpoint(make(t), file);
        out << fmt::format("t={} -> {}\n", t, file.string());
    }
    return kOk;
}

std::vector<data::Image> load_frames(const std::string& dir) {
    std::vector<data::Image> frames;
    for (const auto& p : data::list_frames(dir)) frames.push_back(data::read_image(p));
    return frames;
}

int cmd_metrics(const MetricsArgs& a, const Common& c, std::ostream& out) {
    const auto condition = condition_of(a.prompt, a.style_image, a.negative);
    const auto styled = load_frames(a.styled);
    metrics::EvaluateOptions opt;
    if (!a.gt.empty()) opt.gts = load_frames(a.gt);
    if (!opt.gts.empty() && opt.gts.size() != styled.size()) {
        throw InvalidParameterError(
            fmt::format("frame counts differ: {} ground truth vs {} styled", opt.gts.size(), styled.size()));
    }
    opt.fof_gaps = a.k;
    for (int k : a.k) {
        if (k < 1) throw InvalidParameterError(fmt::format("--k values must be >= 1, got {}", k));
    }
    const auto enc = guidance::load_clip(guidance::EncoderRole::Metric, encoder_options(c));
    const auto rep = metrics::evaluate(*enc, styled, condition, opt);
    if (!a.json.empty()) write_text(a.json, rep.to_json());
    if (!a.text.empty()) write_text(a.text, rep.to_text());
    out << rep.to_text();
    return kOk;
}

int exit_code(const Error& e) {
    switch (e.category()) {
        case ErrorCategory::Input: return kInputError;
        case ErrorCategory::Compatibility: return kIncompatible;
        case ErrorCategory::Divergence: return kDiverged;
        case ErrorCategory::Internal: break;
    }
    return kInternal;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Style transfer for Gaussian splatting models guided by CLIP", "clipsplat"};
    app.set_config("--config", "", "TOML file with one section per subcommand; flags override it");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);
    app.fallthrough();

    Common common;
    app.add_option("--seed", common.seed, "Seed of every random choice")->capture_default_str();
    app.add_flag("-v,--verbose", common.verbose, "Log progress");
    app.add_option("--cache-dir", common.cache_dir, "Encoder weight cache (default $CLIPSPLAT_CACHE)");
    app.add_flag("--synthetic-encoders", common.synthetic_encoders,
                 "Fall back to seeded random encoders when weights are missing");

    auto add_data = [](CLI::App* sub, DataArgs& d, bool required) {
        auto* in = sub->add_option("-i,--input", d.input, "Image, frame directory/pattern or transforms.json");
        if (required) in->required();
        sub->add_option("--modality", d.modality, "image2d, video or scene3d (default: from the input)")
            ->check(CLI::IsMember({"image2d", "video", "scene3d"}));
        sub->add_option("--mask-dir", d.mask_dir, "Directory of object masks");
        sub->add_option("--background", d.background, "Background color r g b in [0, 1]")->expected(3);
    };

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a base model to images, a video or a multi-view scene");
    add_data(fit_cmd, fit.data, true);
    fit_cmd->add_option("-o,--output", fit.output, "Output checkpoint")->required();
    fit_cmd->add_option("--log", fit.log, "Per-step JSONL log");
    fit_cmd->add_option("--steps", fit.steps)->capture_default_str();
    fit_cmd->add_option("--num_gaussians,--num-gaussians", fit.num_gaussians, "0 picks the modality default");
    fit_cmd->add_option("--sh_degree,--sh-degree", fit.sh_degree)->capture_default_str();
    fit_cmd->add_option("--lambda_ssim,--lambda-ssim", fit.lambda_ssim)->capture_default_str();
    fit_cmd->add_option("--snapshot_every,--snapshot-every", fit.snapshot_every)->capture_default_str();

    StylizeArgs sty;
    auto* sty_cmd = app.add_subcommand("stylize", "Fine-tune a fitted model towards a text or image style");
    add_data(sty_cmd, sty.data, true);
    sty_cmd->add_option("-c,--checkpoint", sty.checkpoint, "Fitted checkpoint")->required();
    sty_cmd->add_option("-o,--output", sty.output, "Output checkpoint")->required();
    sty_cmd->add_option("--log", sty.log, "Per-step JSONL loss log");
    sty_cmd->add_option("--preset", sty.preset, "Hyperparameter preset")->check(CLI::IsMember(train::preset_names()));
    sty_cmd->add_option("--prompt", sty.prompt, "Text style");
    sty_cmd->add_option("--style-image,--style_image", sty.style_image, "Image style");
    sty_cmd->add_option("--negative", sty.negative, "Negative prompt")->capture_default_str();
    sty_cmd->add_option("--steps", sty.steps);
    sty_cmd->add_option("--feature_lr,--feature-lr", sty.feature_lr);
    sty_cmd->add_option("--lambda_d,--lambda-d", sty.lambda_d);
    sty_cmd->add_option("--lambda_p,--lambda-p", sty.lambda_p);
    sty_cmd->add_option("--lambda_c,--lambda-c", sty.lambda_c);
    sty_cmd->add_option("--lambda_b,--lambda-b", sty.lambda_b);
    sty_cmd->add_option("--patch_size,--patch-size", sty.patch_size);
    sty_cmd->add_option("--num_patch,--num-patch", sty.num_patch);
    sty_cmd->add_option("--distortion_scale,--distortion-scale", sty.distortion_scale);
    sty_cmd->add_option("--optimize", sty.optimize, "Parameter groups to update (default: preset)");
    sty_cmd->add_option("--snapshot_every,--snapshot-every", sty.snapshot_every);

    RenderArgs ren;
    auto* ren_cmd = app.add_subcommand("render", "Render a checkpoint to PNG");
    ren_cmd->add_option("-c,--checkpoint", ren.checkpoint)->required();
    ren_cmd->add_option("-o,--output", ren.output, "PNG file (image models) or directory")->required();
    ren_cmd->add_option("--frames", ren.frames, "Video frames at evenly spaced times in [0, 1]");
    ren_cmd->add_option("--cameras", ren.cameras, "transforms.json of the views to render (scenes)");
    ren_cmd->add_option("--width", ren.width);
    ren_cmd->add_option("--height", ren.height);
    ren_cmd->add_flag("--mirrored", ren.mirrored, "Render image models from behind");

    InterpolateArgs itp;
    auto* itp_cmd = app.add_subcommand("interpolate", "Blend two stylized checkpoints of the same base");
    itp_cmd->add_option("-a", itp.a, "Checkpoint at t = 0")->required();
    itp_cmd->add_option("-b", itp.b, "Checkpoint at t = 1")->required();
    itp_cmd->add_option("-o,--output", itp.output, "Checkpoint (with --t) or directory (with --steps)")->required();
    itp_cmd->add_option("--t", itp.t, "Blend weight in [0, 1]");
    itp_cmd->add_option("--steps", itp.steps, "Number of evenly spaced blends including both ends");

    MetricsArgs met;
    auto* met_cmd = app.add_subcommand("metrics", "Evaluate stylized frames");
    met_cmd->add_option("--gt", met.gt, "Ground-truth frame directory");
    met_cmd->add_option("--styled", met.styled, "Stylized frame directory")->required();
    met_cmd->add_option("--prompt", met.prompt, "Text style");
    met_cmd->add_option("--style-image,--style_image", met.style_image, "Image style");
    met_cmd->add_option("--negative", met.negative)->capture_default_str();
    met_cmd->add_option("--k", met.k, "Frame gaps of the flow consistency metric");
    met_cmd->add_option("--json", met.json, "Write the report as JSON");
    met_cmd->add_option("--text", met.text, "Write the report as a text table");

    for (auto* sub : {fit_cmd, sty_cmd, ren_cmd, itp_cmd, met_cmd}) sub->configurable();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInputError;
    }

    log::set_verbose(common.verbose);
    try {
        if (*fit_cmd) return cmd_fit(fit, common, out, err);
        if (*sty_cmd) return cmd_stylize(sty, common, out, err);
        if (*ren_cmd) return cmd_render(ren, out);
        if (*itp_cmd) return cmd_interpolate(itp, out);
        if (*met_cmd) return cmd_metrics(met, common, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kInternal;
    }
    return kInternal;
}

}  // namespace clipsplat::cli
