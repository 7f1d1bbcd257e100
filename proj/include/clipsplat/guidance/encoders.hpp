#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "clipsplat/data/dataset.hpp"
#include "clipsplat/guidance/networks.hpp"

namespace clipsplat::guidance {

/// Which CLIP model: ViT-B/32 drives the losses, ViT-L/14 scores the metrics.
enum class EncoderRole { Loss, Metric };

struct EncoderOptions {
    /// Weight cache holding manifest.json; falls back to $CLIPSPLAT_CACHE.
    std::optional<std::filesystem::path> cache_dir;
    /// Use seeded random weights when the cache or its manifest is missing.
    bool allow_synthetic = false;
    std::uint64_t seed = 0;
};

/// The 80 ImageNet prompt templates released with CLIP, each containing one `{}`.
const std::vector<std::string>& imagenet_templates();

struct StyleCondition {
    enum class Kind { Text, Image };

    Kind kind = Kind::Text;
    std::string prompt;
    std::optional<data::Image> image;
    std::string negative = "Photo";

    static StyleCondition text(std::string prompt, std::string negative = "Photo");
    static StyleCondition from_image(data::Image image, std::string negative = "Photo");

    /// Throws InvalidParameterError unless exactly the field matching `kind` is set.
    void validate() const;
};

struct EmbeddingPair {
    torch::Tensor positive;
    torch::Tensor negative;
};

/// Frozen CLIP encoder. Embeddings are unit-norm float32 vectors.
class ClipEncoder {
public:
    ClipEncoder(ClipModel model, std::string name, bool synthetic);

    /// Loads a Hugging Face style safetensors checkpoint, inferring the architecture.
    static std::shared_ptr<ClipEncoder> from_file(const std::filesystem::path& path);

    /// Copy running in `dtype` (float64 for finite-difference checks). Shares no state.
    std::shared_ptr<ClipEncoder> with_dtype(torch::Dtype dtype) const;

    int dim() const { return model_->arch().embed_dim; }
    torch::Dtype dtype() const { return dtype_; }
    const std::string& name() const { return name_; }
    bool synthetic() const { return synthetic_; }

    /// `images`: B x 3 x H x W in [0, 1]. Resizes the short side to the encoder resolution
    /// (bicubic, antialiased), center-crops and normalizes. Differentiable w.r.t. `images`.
    /// Returns B x dim. Throws DomainError on non-finite pixels.
    torch::Tensor embed_images(const torch::Tensor& images) const;
    torch::Tensor embed_image(const data::Image& image) const;

    /// Ensemble over `templates` with `{}` replaced by the prompt. Results are cached per
    /// (prompt, template set) and the same tensor is returned on later calls.
    torch::Tensor embed_text(const std::string& prompt, const std::vector<std::string>& templates) const;
    EmbeddingPair embed_text(const std::string& prompt, const std::string& negative,
                             const std::vector<std::string>& templates) const;

    EmbeddingPair embed_style(const StyleCondition& condition,
                              const std::vector<std::string>& templates = imagenet_templates()) const;

    /// Raw text tower on token ids (B x context), unit-normalized. The end token must carry the
    /// largest id of each row.
    torch::Tensor embed_token_ids(const torch::Tensor& ids) const;

private:
    mutable ClipModel model_;
    std::string name_;
    bool synthetic_;
    torch::Dtype dtype_ = torch::kFloat32;
    mutable std::mutex cache_mutex_;
    mutable std::map<std::string, torch::Tensor> text_cache_;
};

struct FeatureStack {
    torch::Tensor conv4_2;
    torch::Tensor conv5_2;
};

/// Frozen VGG-19 feature extractor.
class VggFeatures {
public:
    VggFeatures(Vgg19 net, bool synthetic);

    static std::shared_ptr<VggFeatures> from_file(const std::filesystem::path& path);

    std::shared_ptr<VggFeatures> with_dtype(torch::Dtype dtype) const;
    torch::Dtype dtype() const { return dtype_; }

    bool synthetic() const { return synthetic_; }

    /// `images`: B x 3 x H x W in [0, 1]. Inputs whose short side is below 224 are upscaled
    /// bilinearly to 224; larger inputs run at native size. Differentiable w.r.t. `images`.
    FeatureStack features(const torch::Tensor& images) const;

private:
    mutable Vgg19 net_;
    bool synthetic_;
    torch::Dtype dtype_ = torch::kFloat32;
};

/// Shared, load-once encoders. Reads `manifest.json` ({"<artifact>": {"file", "sha256"}}) from
/// the cache directory. A checksum mismatch always throws WeightsUnavailableError; a missing
/// cache or manifest entry throws unless synthetic weights are allowed.
std::shared_ptr<const ClipEncoder> load_clip(EncoderRole role, const EncoderOptions& options = {});
std::shared_ptr<const VggFeatures> load_vgg(const EncoderOptions& options = {});

/// Manifest artifact names.
std::string artifact_name(EncoderRole role);
inline constexpr const char* kVggArtifact = "vgg19";

/// H x W x 3 image to a 1 x 3 x H x W tensor and back.
torch::Tensor to_tensor(const data::Image& image);
data::Image to_image(const torch::Tensor& chw);

/// Cosine similarity of two embeddings (1-D tensors).
double cosine(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace clipsplat::guidance
