#include "clipsplat/metrics/metrics.hpp"

#include <cmath>

#include <fmt/format.h>
#include <json.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/video/tracking.hpp>

#include "clipsplat/errors.hpp"

namespace clipsplat::metrics {

namespace {

constexpr double kMinDirectionNorm = 1e-8;

torch::Tensor rows(const torch::Tensor& t, const char* what) {
    if (t.dim() != 2 || t.size(0) < 1) {
        throw InvalidParameterError(fmt::format("{} must be a nonempty N x D embedding matrix", what));
    }
    return t.detach().to(torch::kFloat64);
}

torch::Tensor vec(const torch::Tensor& t) { return t.detach().to(torch::kFloat64).reshape({-1}); }

void check_aligned(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes()) {
        throw InvalidParameterError(fmt::format("sequences are not aligned: {} vs {} frames", a.size(0), b.size(0)));
    }
}

void check_pairs(const torch::Tensor& t) {
    if (t.size(0) < 2) throw InvalidParameterError("metric needs at least 2 frames");
}

/// Plain cosine; 0 when either side is (numerically) zero.
double guarded_cosine(const torch::Tensor& a, const torch::Tensor& b, bool* guarded) {
    const double na = a.norm().item<double>(), nb = b.norm().item<double>();
    if (na < kMinDirectionNorm || nb < kMinDirectionNorm) {
        *guarded = true;
        return 0.0;
    }
    *guarded = false;
    return std::clamp((a * b).sum().item<double>() / (na * nb), -1.0, 1.0);
}

double cosine(const torch::Tensor& a, const torch::Tensor& b) {
    bool guarded = false;
    return guarded_cosine(a, b, &guarded);
}

cv::Mat gray(const data::Image& img) {
    cv::Mat rgb(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        auto* row = rgb.ptr<std::uint8_t>(y);
        for (int x = 0; x < img.width * 3; ++x) {
            const float v = img.rgb[std::size_t(y) * img.width * 3 + x];
            row[x] = std::uint8_t(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
        }
    }
    cv::Mat out;
    cv::cvtColor(rgb, out, cv::COLOR_RGB2GRAY);
    return out;
}

nlohmann::ordered_json score_json(const DirectionalScore& s) {
    return {{"value", s.value}, {"guarded", s.guarded}, {"terms", s.terms}, {"degenerate", s.degenerate()}};
}

}  // namespace

double clip_s(const torch::Tensor& renders, const torch::Tensor& style_pos) {
    const auto r = rows(renders, "renders");
    const auto pos = vec(style_pos);
    double sum = 0;
    for (int64_t i = 0; i < r.size(0); ++i) sum += cosine(r[i], pos);
    return 100.0 * sum / double(r.size(0));
}

DirectionalScore clip_sim(const torch::Tensor& renders, const torch::Tensor& gts, const torch::Tensor& style_pos,
                          const torch::Tensor& style_neg) {
    const auto r = rows(renders, "renders"), g = rows(gts, "ground truth");
    check_aligned(r, g);
    const auto dir = vec(style_pos) - vec(style_neg);
    DirectionalScore s;
    double sum = 0;
    for (int64_t i = 0; i < r.size(0); ++i) {
        bool guarded = false;
        sum += guarded_cosine(r[i] - g[i], dir, &guarded);
        s.guarded += guarded;
    }
    s.terms = int(r.size(0));
    s.value = 100.0 * sum / double(s.terms);
    return s;
}

double clip_f(const torch::Tensor& renders, const torch::Tensor& gts) {
    const auto r = rows(renders, "renders"), g = rows(gts, "ground truth");
    check_aligned(r, g);
    check_pairs(r);
    double num = 0, den = 0;
    for (int64_t i = 0; i + 1 < r.size(0); ++i) {
        num += cosine(r[i + 1], r[i]);
        den += cosine(g[i + 1], g[i]);
    }
    if (den == 0.0) throw UndefinedMetricError("CLIP-F is undefined: ground-truth consecutive similarity sums to 0");
    return 100.0 * num / den;
}

DirectionalScore clip_cons(const torch::Tensor& renders, const torch::Tensor& gts) {
    const auto r = rows(renders, "renders"), g = rows(gts, "ground truth");
    check_aligned(r, g);
    check_pairs(r);
    DirectionalScore s;
    double sum = 0;
    for (int64_t i = 0; i + 1 < r.size(0); ++i) {
        bool guarded = false;
        sum += guarded_cosine(r[i + 1] - r[i], g[i + 1] - g[i], &guarded);
        s.guarded += guarded;
    }
    s.terms = int(r.size(0) - 1);
    s.value = 100.0 * sum / double(s.terms);
    return s;
}

std::vector<float> flow_magnitude(const data::Image& a, const data::Image& b) {
    if (a.width != b.width || a.height != b.height) throw InvalidParameterError("flow needs frames of equal size");
    cv::Mat flow;
    cv::calcOpticalFlowFarneback(gray(a), gray(b), flow, 0.5, 3, 15, 3, 5, 1.2, 0);
    std::vector<float> mag(std::size_t(a.width) * a.height);
    for (int y = 0; y < a.height; ++y) {
        const auto* row = flow.ptr<cv::Vec2f>(y);
        for (int x = 0; x < a.width; ++x) mag[std::size_t(y) * a.width + x] = std::hypot(row[x][0], row[x][1]);
    }
    return mag;
}

double fof_consistency(const std::vector<data::Image>& gt, const std::vector<data::Image>& styled, int k) {
    if (k < 1) throw InvalidParameterError(fmt::format("frame gap must be >= 1, got {}", k));
    if (gt.size() != styled.size()) {
        throw InvalidParameterError(fmt::format("sequences are not aligned: {} vs {} frames", gt.size(), styled.size()));
    }
    if (gt.size() < std::size_t(k) + 1) {
        throw InvalidParameterError(fmt::format("{} frames are too few for gap {}", gt.size(), k));
    }
    double total = 0;
    const std::size_t pairs = gt.size() - std::size_t(k);
    for (std::size_t i = 0; i < pairs; ++i) {
        const auto fg = flow_magnitude(gt[i], gt[i + k]);
        const auto fs = flow_magnitude(styled[i], styled[i + k]);
        double sum = 0;
        for (std::size_t p = 0; p < fg.size(); ++p) sum += std::abs(double(fg[p]) - double(fs[p]));
        total += sum / double(fg.size());
    }
    return total / double(pairs);
}

torch::Tensor embed_frames(const guidance::ClipEncoder& encoder, const std::vector<data::Image>& frames) {
    if (frames.empty()) throw InvalidParameterError("no frames to embed");
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(encoder.embed_image(f).reshape({-1}));
    return torch::stack(out);
}

MetricsReport evaluate(const guidance::ClipEncoder& encoder, const std::vector<data::Image>& renders,
                       const guidance::StyleCondition& condition, const EvaluateOptions& options) {
    condition.validate();
    if (renders.empty()) throw InvalidParameterError("no rendered frames");
    const bool with_gt = !options.gts.empty();
    if (with_gt && options.gts.size() != renders.size()) {
        throw InvalidParameterError(
            fmt::format("{} rendered frames but {} ground-truth frames", renders.size(), options.gts.size()));
    }
    torch::NoGradGuard no_grad;
    MetricsReport rep;
    rep.frames = int(renders.size());
    rep.condition = condition.kind == guidance::StyleCondition::Kind::Text ? "text: " + condition.prompt : "image";
    rep.negative = condition.negative;
    rep.encoder = encoder.name();

    const auto style = encoder.embed_style(condition);
    const auto r = embed_frames(encoder, renders);
    rep.clip_s = clip_s(r, style.positive);
    if (with_gt) {
        const auto g = embed_frames(encoder, options.gts);
        rep.clip_sim = clip_sim(r, g, style.positive, style.negative);
        if (renders.size() >= 2) {
            rep.clip_f = clip_f(r, g);
            rep.clip_cons = clip_cons(r, g);
            for (int k : options.fof_gaps) {
                if (renders.size() > std::size_t(k)) rep.fof[k] = fof_consistency(options.gts, renders, k);
            }
        }
    }
    return rep;
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["frames"] = frames;
    j["condition"] = condition;
    j["negative"] = negative;
    j["encoder"] = encoder;
    j["scale"] = 100;
    j["clip_s"] = clip_s ? nlohmann::ordered_json(*clip_s) : nullptr;
    j["clip_sim"] = clip_sim ? score_json(*clip_sim) : nullptr;
    j["clip_f"] = clip_f ? nlohmann::ordered_json(*clip_f) : nullptr;
    j["clip_cons"] = clip_cons ? score_json(*clip_cons) : nullptr;
    auto fj = nlohmann::ordered_json::object();
    for (const auto& [k, v] : fof) fj[std::to_string(k)] = v;
    j["fof"] = fj;
    return j.dump(2) + "\n";
}

std::string MetricsReport::to_text() const {
    std::string out;
    auto line = [&](const std::string& name, const std::string& value) { out += fmt::format("{:<12}{:>14}\n", name, value); };
    auto num = [](double v) { return fmt::format("{:.4f}", v); };
    auto score = [&](const DirectionalScore& s) {
        return s.degenerate() ? std::string("degenerate") : num(s.value);
    };
    line("frames", std::to_string(frames));
    line("condition", condition);
    line("negative", negative);
    line("encoder", encoder);
    line("CLIP-S", clip_s ? num(*clip_s) : "n/a");
    line("CLIP-SIM", clip_sim ? score(*clip_sim) : "n/a");
    line("CLIP-F", clip_f ? num(*clip_f) : "n/a");
    line("CLIP-CONS", clip_cons ? score(*clip_cons) : "n/a");
    for (const auto& [k, v] : fof) line(fmt::format("FoF k={}", k), num(v));
    return out;
}

}  // namespace clipsplat::metrics
