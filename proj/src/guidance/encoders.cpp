#include "clipsplat/guidance/encoders.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <tuple>

#include <fmt/format.h>
#include <json.hpp>

#include "clipsplat/errors.hpp"
#include "clipsplat/log.hpp"
#include "clipsplat/guidance/tokenizer.hpp"

namespace clipsplat::guidance {

namespace F = torch::nn::functional;
namespace fs = std::filesystem;

namespace {

constexpr double kClipMean[] = {0.48145466, 0.4578275, 0.40821073};
constexpr double kClipStd[] = {0.26862954, 0.26130258, 0.27577711};
constexpr double kImageNetMean[] = {0.485, 0.456, 0.406};
constexpr double kImageNetStd[] = {0.229, 0.224, 0.225};
constexpr int kVggMinSide = 224;

torch::Tensor channel_constant(const double (&v)[3], torch::Dtype dtype) {
    return torch::tensor({v[0], v[1], v[2]}, torch::kFloat64).to(dtype).view({1, 3, 1, 1});
}

TensorMap parameter_map(torch::nn::Module& module) {
    TensorMap out;
    for (auto& p : module.named_parameters(true)) out.emplace(p.key(), p.value().detach());
    return out;
}

void check_images(const torch::Tensor& images) {
    if (images.dim() != 4 || images.size(1) != 3) {
        throw InvalidParameterError(fmt::format("expected B x 3 x H x W images, got {} dims", images.dim()));
    }
    if (!torch::isfinite(images.detach()).all().item<bool>()) throw DomainError("image contains non-finite pixels");
}

torch::Tensor normalize_rows(const torch::Tensor& e) { return e / e.norm(2, -1, true); }

std::string format_template(const std::string& tmpl, const std::string& prompt) {
    std::string out;
    std::size_t pos = 0;
    for (std::size_t hit; (hit = tmpl.find("{}", pos)) != std::string::npos; pos = hit + 2) {
        out.append(tmpl, pos, hit - pos).append(prompt);
    }
    return out.append(tmpl, pos);
}

ClipArch synthetic_arch(EncoderRole role) {
    ClipArch a;
    a.vision_width = 64;
    a.vision_layers = 2;
    a.vision_heads = 4;
    a.text_width = 64;
    a.text_layers = 2;
    a.text_heads = 4;
    a.embed_dim = role == EncoderRole::Loss ? 512 : 768;
    return a;
}

const std::vector<int> kSyntheticVggWidths = {8, 16, 32, 64, 64};

fs::path resolve_cache(const EncoderOptions& options) {
    if (options.cache_dir) return *options.cache_dir;
    if (const char* env = std::getenv("CLIPSPLAT_CACHE"); env && *env) return env;
    return {};
}

/// Verified weight file for `artifact`, or nullopt when the cache has no entry for it.
std::optional<fs::path> locate_artifact(const fs::path& cache, const std::string& artifact) {
    if (cache.empty()) return std::nullopt;
    const fs::path manifest_path = cache / "manifest.json";
    if (!fs::exists(manifest_path)) return std::nullopt;
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(std::ifstream(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw WeightsUnavailableError(fmt::format("{}: {}", manifest_path.string(), e.what()));
    }
    if (!manifest.contains(artifact)) return std::nullopt;
    const auto& entry = manifest[artifact];
    if (!entry.contains("file") || !entry.contains("sha256")) {
        throw WeightsUnavailableError(fmt::format("{}: entry '{}' needs file and sha256", manifest_path.string(), artifact));
    }
    const fs::path file = cache / entry["file"].get<std::string>();
    if (!fs::exists(file)) return std::nullopt;
    const std::string expected = entry["sha256"].get<std::string>();
    const std::string actual = sha256_file(file);
    if (actual != expected) {
        throw WeightsUnavailableError(
            fmt::format("checksum mismatch for '{}': expected {}, found {}", file.string(), expected, actual));
    }
    return file;
}

[[noreturn]] void unavailable(const std::string& artifact, const fs::path& cache) {
    throw WeightsUnavailableError(fmt::format(
        "weights '{}' not found (cache '{}'); set CLIPSPLAT_CACHE or allow synthetic encoders", artifact,
        cache.string()));
}

template <typename Value>
class LoadOnce {
public:
    template <typename Key, typename Make>
    std::shared_ptr<const Value> get(const Key& key, Make&& make) {
        std::lock_guard lock(mutex_);
        auto& slot = slots_[key];
        if (!slot) slot = make();
        return slot;
    }

private:
    std::mutex mutex_;
    std::map<std::tuple<int, std::string, bool, std::uint64_t>, std::shared_ptr<const Value>> slots_;
};

}  // namespace

StyleCondition StyleCondition::text(std::string prompt, std::string negative) {
    StyleCondition c;
    c.kind = Kind::Text;
    c.prompt = std::move(prompt);
    c.negative = std::move(negative);
    return c;
}

StyleCondition StyleCondition::from_image(data::Image image, std::string negative) {
    StyleCondition c;
    c.kind = Kind::Image;
    c.image = std::move(image);
    c.negative = std::move(negative);
    return c;
}

void StyleCondition::validate() const {
    if (kind == Kind::Text) {
        if (prompt.empty()) throw InvalidParameterError("text style condition needs a nonempty prompt");
        if (image) throw InvalidParameterError("text style condition must not carry an image");
    } else {
        if (!image || image->width <= 0 || image->height <= 0) {
            throw InvalidParameterError("image style condition needs a nonempty image");
        }
        if (!prompt.empty()) throw InvalidParameterError("image style condition must not carry a prompt");
    }
    if (negative.empty()) throw InvalidParameterError("negative prompt must be nonempty");
}

ClipEncoder::ClipEncoder(ClipModel model, std::string name, bool synthetic)
    : model_(std::move(model)), name_(std::move(name)), synthetic_(synthetic) {
    model_->eval();
    for (auto& p : model_->parameters()) p.set_requires_grad(false);
}

std::shared_ptr<ClipEncoder> ClipEncoder::from_file(const fs::path& path) {
    const auto weights = load_safetensors(path);
    ClipModel model(ClipArch::from_weights(weights));
    load_parameters(*model, weights, path.string());
    return std::make_shared<ClipEncoder>(model, path.filename().string(), false);
}

std::shared_ptr<ClipEncoder> ClipEncoder::with_dtype(torch::Dtype dtype) const {
    ClipModel copy(model_->arch());
    load_parameters(*copy, parameter_map(*model_), name_);
    copy->to(dtype);
    auto enc = std::make_shared<ClipEncoder>(copy, name_, synthetic_);
    enc->dtype_ = dtype;
    return enc;
}

torch::Tensor ClipEncoder::embed_images(const torch::Tensor& images) const {
    check_images(images);
    const int size = model_->arch().image_size;
    auto x = images.to(dtype_);
    const auto h = x.size(2), w = x.size(3);
    if (std::min(h, w) != size) {
        const auto short_side = std::min(h, w), long_side = std::max(h, w);
        const auto scaled_long = long_side * size / short_side;
        const std::vector<int64_t> out = h <= w ? std::vector<int64_t>{size, scaled_long}
                                                : std::vector<int64_t>{scaled_long, size};
        x = F::interpolate(x, F::InterpolateFuncOptions()
                                  .size(out)
                                  .mode(torch::kBicubic)
                                  .align_corners(false)
                                  .antialias(true));
    }
    const auto top = static_cast<int64_t>(std::lround((x.size(2) - size) / 2.0));
    const auto left = static_cast<int64_t>(std::lround((x.size(3) - size) / 2.0));
    x = x.slice(2, top, top + size).slice(3, left, left + size);
    x = (x - channel_constant(kClipMean, dtype_)) / channel_constant(kClipStd, dtype_);
    return normalize_rows(model_->encode_image(x));
}

torch::Tensor ClipEncoder::embed_image(const data::Image& image) const {
    torch::NoGradGuard no_grad;
    return embed_images(to_tensor(image)).squeeze(0);
}

torch::Tensor ClipEncoder::embed_token_ids(const torch::Tensor& ids) const {
    torch::NoGradGuard no_grad;
    return normalize_rows(model_->encode_text(ids));
}

torch::Tensor ClipEncoder::embed_text(const std::string& prompt, const std::vector<std::string>& templates) const {
    if (prompt.empty()) throw InvalidParameterError("prompt must be nonempty");
    if (templates.empty()) throw InvalidParameterError("at least one prompt template is required");

    // sorting makes the ensemble independent of template order down to the last bit
    std::vector<std::string> texts;
    texts.reserve(templates.size());
    for (const auto& t : templates) texts.push_back(format_template(t, prompt));
    std::sort(texts.begin(), texts.end());

    std::string key;
    for (const auto& t : texts) key.append(t).push_back('\x1f');

    std::lock_guard lock(cache_mutex_);
    if (auto it = text_cache_.find(key); it != text_cache_.end()) return it->second;

    const auto& tokenizer = Tokenizer::bundled();
    const int ctx = model_->arch().context_length;
    auto ids = torch::zeros({static_cast<int64_t>(texts.size()), ctx}, torch::kInt64);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        auto row = tokenizer.tokenize(texts[i]);
        row.resize(ctx, 0);
        if (row.back() != 0) row.back() = tokenizer.end_token();
        ids[static_cast<int64_t>(i)] = torch::tensor(row, torch::kInt64);
    }
    auto mean = embed_token_ids(ids).mean(0);
    auto result = (mean / mean.norm()).contiguous();
    text_cache_.emplace(key, result);
    return result;
}

EmbeddingPair ClipEncoder::embed_text(const std::string& prompt, const std::string& negative,
                                      const std::vector<std::string>& templates) const {
    return {embed_text(prompt, templates), embed_text(negative, templates)};
}

EmbeddingPair ClipEncoder::embed_style(const StyleCondition& condition, const std::vector<std::string>& templates) const {
    condition.validate();
    EmbeddingPair pair;
    pair.positive = condition.kind == StyleCondition::Kind::Text ? embed_text(condition.prompt, templates)
                                                                 : embed_image(*condition.image);
    pair.negative = embed_text(condition.negative, templates);
    return pair;
}

VggFeatures::VggFeatures(Vgg19 net, bool synthetic) : net_(std::move(net)), synthetic_(synthetic) {
    net_->eval();
    for (auto& p : net_->parameters()) p.set_requires_grad(false);
}

std::shared_ptr<VggFeatures> VggFeatures::from_file(const fs::path& path) {
    const auto weights = load_safetensors(path);
    Vgg19 net(Vgg19Impl::widths_from_weights(weights));
    load_parameters(*net, weights, path.string());
    return std::make_shared<VggFeatures>(net, false);
}

std::shared_ptr<VggFeatures> VggFeatures::with_dtype(torch::Dtype dtype) const {
    Vgg19 copy(Vgg19Impl::widths_from_weights(parameter_map(*net_)));
    load_parameters(*copy, parameter_map(*net_), "vgg19");
    copy->to(dtype);
    auto out = std::make_shared<VggFeatures>(copy, synthetic_);
    out->dtype_ = dtype;
    return out;
}

FeatureStack VggFeatures::features(const torch::Tensor& images) const {
    check_images(images);
    auto x = images.to(dtype_);
    const auto h = x.size(2), w = x.size(3);
    if (std::min(h, w) < kVggMinSide) {
        const double s = double(kVggMinSide) / double(std::min(h, w));
        const std::vector<int64_t> out = {std::max<int64_t>(kVggMinSide, std::lround(h * s)),
                                          std::max<int64_t>(kVggMinSide, std::lround(w * s))};
        x = F::interpolate(x, F::InterpolateFuncOptions().size(out).mode(torch::kBilinear).align_corners(false));
    }
    x = (x - channel_constant(kImageNetMean, dtype_)) / channel_constant(kImageNetStd, dtype_);
    auto [c4, c5] = net_->conv4_2_conv5_2(x);
    return {c4, c5};
}

std::string artifact_name(EncoderRole role) { return role == EncoderRole::Loss ? "clip-vit-b-32" : "clip-vit-l-14"; }

std::shared_ptr<const ClipEncoder> load_clip(EncoderRole role, const EncoderOptions& options) {
    static LoadOnce<ClipEncoder> registry;
    const fs::path cache = resolve_cache(options);
    const auto key = std::make_tuple(int(role), cache.string(), options.allow_synthetic, options.seed);
    return registry.get(key, [&]() -> std::shared_ptr<const ClipEncoder> {
        const std::string artifact = artifact_name(role);
        if (auto file = locate_artifact(cache, artifact)) {
            log::info(fmt::format("loading {} from {}", artifact, file->string()));
            auto enc = ClipEncoder::from_file(*file);
            const int expected = role == EncoderRole::Loss ? 512 : 768;
            if (enc->dim() != expected) {
                throw WeightsUnavailableError(
                    fmt::format("'{}' has embedding size {}, expected {}", file->string(), enc->dim(), expected));
            }
            return enc;
        }
        if (!options.allow_synthetic) unavailable(artifact, cache);
        log::warn(fmt::format("weights '{}' unavailable; using synthetic random encoder (seed {})", artifact, options.seed));
        ClipModel model(synthetic_arch(role));
        init_synthetic(*model, options.seed * 2 + (role == EncoderRole::Loss ? 0 : 1));
        return std::make_shared<ClipEncoder>(model, artifact + " (synthetic)", true);
    });
}

std::shared_ptr<const VggFeatures> load_vgg(const EncoderOptions& options) {
    static LoadOnce<VggFeatures> registry;
    const fs::path cache = resolve_cache(options);
    const auto key = std::make_tuple(0, cache.string(), options.allow_synthetic, options.seed);
    return registry.get(key, [&]() -> std::shared_ptr<const VggFeatures> {
        if (auto file = locate_artifact(cache, kVggArtifact)) {
            log::info(fmt::format("loading {} from {}", kVggArtifact, file->string()));
            return VggFeatures::from_file(*file);
        }
        if (!options.allow_synthetic) unavailable(kVggArtifact, cache);
        log::warn(fmt::format("weights '{}' unavailable; using synthetic random features (seed {})", kVggArtifact, options.seed));
        Vgg19 net(kSyntheticVggWidths);
        init_synthetic(*net, options.seed * 2 + 7);
        return std::make_shared<VggFeatures>(net, true);
    });
}

torch::Tensor to_tensor(const data::Image& image) {
    auto hwc = torch::from_blob(const_cast<float*>(image.rgb.data()), {image.height, image.width, 3}, torch::kFloat32);
    return hwc.permute({2, 0, 1}).unsqueeze(0).contiguous();
}

data::Image to_image(const torch::Tensor& chw) {
    auto t = chw.detach().to(torch::kFloat32);
    if (t.dim() == 4) t = t.squeeze(0);
    if (t.dim() != 3 || t.size(0) != 3) throw InvalidParameterError("expected a 3 x H x W tensor");
    auto hwc = t.permute({1, 2, 0}).contiguous();
    data::Image img;
    img.height = int(hwc.size(0));
    img.width = int(hwc.size(1));
    img.rgb.assign(hwc.data_ptr<float>(), hwc.data_ptr<float>() + hwc.numel());
    return img;
}

double cosine(const torch::Tensor& a, const torch::Tensor& b) {
    auto x = a.detach().to(torch::kFloat64).flatten(), y = b.detach().to(torch::kFloat64).flatten();
    return (x.dot(y) / (x.norm() * y.norm())).item<double>();
}

}  // namespace clipsplat::guidance
