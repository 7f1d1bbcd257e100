#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "clipsplat/guidance/safetensors.hpp"

namespace clipsplat::guidance {

/// Shape of a CLIP dual encoder. Attention heads are 64 wide in every released model.
struct ClipArch {
    int image_size = 224;
    int patch_size = 32;
    int vision_width = 768;
    int vision_layers = 12;
    int vision_heads = 12;
    int text_width = 512;
    int text_layers = 12;
    int text_heads = 8;
    int vocab_size = 49408;
    int context_length = 77;
    int embed_dim = 512;

    static ClipArch vit_b32();
    static ClipArch vit_l14();
    /// Infers the architecture from tensor shapes in the Hugging Face key layout.
    static ClipArch from_weights(const TensorMap& weights);
};

/// Pre-norm transformer block with quick-GELU MLP.
class ClipLayerImpl : public torch::nn::Module {
public:
    ClipLayerImpl(int width, int heads);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& attn_mask = {});

private:
    int heads_;
    torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};
    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
    torch::nn::LayerNorm layer_norm1{nullptr}, layer_norm2{nullptr};
};
TORCH_MODULE(ClipLayer);

/// CLIP image and text towers. Parameter names follow the Hugging Face checkpoint layout so
/// released weights load by name.
class ClipModelImpl : public torch::nn::Module {
public:
    explicit ClipModelImpl(const ClipArch& arch);

    /// `pixels`: B x 3 x S x S, already normalized. Returns unnormalized B x embed_dim.
    torch::Tensor encode_image(const torch::Tensor& pixels);
    /// `ids`: B x context_length token ids, end token has the largest id. Returns B x embed_dim.
    torch::Tensor encode_text(const torch::Tensor& ids);

    const ClipArch& arch() const { return arch_; }

private:
    ClipArch arch_;
    torch::Tensor class_embedding_;
    torch::nn::Conv2d patch_embedding_{nullptr};
    torch::nn::Embedding vision_positions_{nullptr};
    torch::nn::LayerNorm pre_layrnorm_{nullptr}, post_layernorm_{nullptr};
    torch::nn::ModuleList vision_layers_{nullptr};
    torch::nn::Embedding token_embedding_{nullptr}, text_positions_{nullptr};
    torch::nn::ModuleList text_layers_{nullptr};
    torch::nn::LayerNorm final_layer_norm_{nullptr};
    torch::nn::Linear visual_projection_{nullptr}, text_projection_{nullptr};
};
TORCH_MODULE(ClipModel);

/// Convolutional trunk of VGG-19 with torchvision layer indices (`features.N`).
class Vgg19Impl : public torch::nn::Module {
public:
    /// Channel widths of the five blocks; {64, 128, 256, 512, 512} for the released model.
    explicit Vgg19Impl(std::vector<int> widths = {64, 128, 256, 512, 512});

    /// Activations after the ReLUs following conv4_2 and conv5_2 for an ImageNet-normalized
    /// input. The trunk stops after conv5_2.
    std::pair<torch::Tensor, torch::Tensor> conv4_2_conv5_2(const torch::Tensor& x);

    static std::vector<int> widths_from_weights(const TensorMap& weights);

private:
    torch::nn::Sequential features_{nullptr};
};
TORCH_MODULE(Vgg19);

/// Copies `weights` into the module's parameters by name. Throws FormatError on missing keys or
/// shape mismatches; keys absent from the module are ignored.
void load_parameters(torch::nn::Module& module, const TensorMap& weights, const std::string& origin);

/// Deterministic random initialization used when released weights are unavailable.
void init_synthetic(torch::nn::Module& module, std::uint64_t seed);

}  // namespace clipsplat::guidance
