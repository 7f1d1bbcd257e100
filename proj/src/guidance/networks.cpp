#include "clipsplat/guidance/networks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <regex>

#include <ATen/CPUGeneratorImpl.h>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "clipsplat/errors.hpp"

namespace clipsplat::guidance {

namespace F = torch::nn::functional;

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr int kHeadWidth = 64;

std::shared_ptr<torch::nn::Module> holder(torch::nn::Module& parent, const std::string& name) {
    return parent.register_module(name, std::make_shared<torch::nn::Module>());
}

torch::nn::LayerNorm layer_norm(int width) {
    return torch::nn::LayerNorm(torch::nn::LayerNormOptions({width}).eps(kLayerNormEps));
}

torch::Tensor quick_gelu(const torch::Tensor& x) { return x * torch::sigmoid(1.702 * x); }

int count_layers(const TensorMap& w, const std::string& prefix) {
    const std::regex re(prefix + R"(\.encoder\.layers\.(\d+)\.)");
    int n = 0;
    for (const auto& [name, _] : w) {
        std::smatch m;
        if (std::regex_search(name, m, re)) n = std::max(n, std::stoi(m[1]) + 1);
    }
    return n;
}

const torch::Tensor& require(const TensorMap& w, const std::string& key) {
    auto it = w.find(key);
    if (it == w.end()) throw FormatError(fmt::format("weights lack tensor '{}'", key));
    return it->second;
}

// conv indices of features.N in the VGG-19 trunk; pools sit at 4, 9, 18, 27
constexpr int kVggConvs[] = {0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28, 30};
constexpr int kVggBlockOf[] = {0, 0, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 4, 4};
constexpr int kReluAfterConv4_2 = 22;
constexpr int kReluAfterConv5_2 = 31;

}  // namespace

ClipArch ClipArch::vit_b32() { return ClipArch{}; }

ClipArch ClipArch::vit_l14() {
    ClipArch a;
    a.patch_size = 14;
    a.vision_width = 1024;
    a.vision_layers = 24;
    a.vision_heads = 16;
    a.text_width = 768;
    a.text_layers = 12;
    a.text_heads = 12;
    a.embed_dim = 768;
    return a;
}

ClipArch ClipArch::from_weights(const TensorMap& w) {
    ClipArch a;
    const auto& patch = require(w, "vision_model.embeddings.patch_embedding.weight");
    a.vision_width = int(patch.size(0));
    a.patch_size = int(patch.size(2));
    const auto tokens = require(w, "vision_model.embeddings.position_embedding.weight").size(0);
    a.image_size = int(std::lround(std::sqrt(double(tokens - 1)))) * a.patch_size;
    a.vision_layers = count_layers(w, "vision_model");
    a.vision_heads = std::max(1, a.vision_width / kHeadWidth);
    const auto& tok = require(w, "text_model.embeddings.token_embedding.weight");
    a.vocab_size = int(tok.size(0));
    a.text_width = int(tok.size(1));
    a.context_length = int(require(w, "text_model.embeddings.position_embedding.weight").size(0));
    a.text_layers = count_layers(w, "text_model");
    a.text_heads = std::max(1, a.text_width / kHeadWidth);
    a.embed_dim = int(require(w, "visual_projection.weight").size(0));
    if (a.vision_layers == 0 || a.text_layers == 0) throw FormatError("weights contain no transformer layers");
    return a;
}

ClipLayerImpl::ClipLayerImpl(int width, int heads) : heads_(heads) {
    auto attn = holder(*this, "self_attn");
    q_proj = attn->register_module("q_proj", torch::nn::Linear(width, width));
    k_proj = attn->register_module("k_proj", torch::nn::Linear(width, width));
    v_proj = attn->register_module("v_proj", torch::nn::Linear(width, width));
    out_proj = attn->register_module("out_proj", torch::nn::Linear(width, width));
    layer_norm1 = register_module("layer_norm1", layer_norm(width));
    auto mlp = holder(*this, "mlp");
    fc1 = mlp->register_module("fc1", torch::nn::Linear(width, 4 * width));
    fc2 = mlp->register_module("fc2", torch::nn::Linear(4 * width, width));
    layer_norm2 = register_module("layer_norm2", layer_norm(width));
}

torch::Tensor ClipLayerImpl::forward(const torch::Tensor& x, const torch::Tensor& attn_mask) {
    const auto b = x.size(0), n = x.size(1), w = x.size(2);
    const auto hd = w / heads_;
    auto h = layer_norm1(x);
    auto split = [&](const torch::Tensor& t) { return t.view({b, n, heads_, hd}).transpose(1, 2); };
    auto q = split(q_proj(h) * (1.0 / std::sqrt(double(hd))));
    auto k = split(k_proj(h));
    auto v = split(v_proj(h));
    auto scores = torch::matmul(q, k.transpose(-2, -1));
    if (attn_mask.defined()) scores = scores + attn_mask;
    auto ctx = torch::matmul(torch::softmax(scores, -1), v).transpose(1, 2).reshape({b, n, w});
    auto y = x + out_proj(ctx);
    return y + fc2(quick_gelu(fc1(layer_norm2(y))));
}

ClipModelImpl::ClipModelImpl(const ClipArch& arch) : arch_(arch) {
    auto vision = holder(*this, "vision_model");
    auto vemb = holder(*vision, "embeddings");
    class_embedding_ = vemb->register_parameter("class_embedding", torch::zeros({arch.vision_width}));
    patch_embedding_ = vemb->register_module(
        "patch_embedding",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(3, arch.vision_width, arch.patch_size).stride(arch.patch_size).bias(false)));
    const int grid = arch.image_size / arch.patch_size;
    vision_positions_ = vemb->register_module("position_embedding", torch::nn::Embedding(grid * grid + 1, arch.vision_width));
    pre_layrnorm_ = vision->register_module("pre_layrnorm", layer_norm(arch.vision_width));
    vision_layers_ = holder(*vision, "encoder")->register_module("layers", torch::nn::ModuleList());
    for (int l = 0; l < arch.vision_layers; ++l) vision_layers_->push_back(ClipLayer(arch.vision_width, arch.vision_heads));
    post_layernorm_ = vision->register_module("post_layernorm", layer_norm(arch.vision_width));

    auto text = holder(*this, "text_model");
    auto temb = holder(*text, "embeddings");
    token_embedding_ = temb->register_module("token_embedding", torch::nn::Embedding(arch.vocab_size, arch.text_width));
    text_positions_ = temb->register_module("position_embedding", torch::nn::Embedding(arch.context_length, arch.text_width));
    text_layers_ = holder(*text, "encoder")->register_module("layers", torch::nn::ModuleList());
    for (int l = 0; l < arch.text_layers; ++l) text_layers_->push_back(ClipLayer(arch.text_width, arch.text_heads));
    final_layer_norm_ = text->register_module("final_layer_norm", layer_norm(arch.text_width));

    visual_projection_ = register_module(
        "visual_projection", torch::nn::Linear(torch::nn::LinearOptions(arch.vision_width, arch.embed_dim).bias(false)));
    text_projection_ = register_module(
        "text_projection", torch::nn::Linear(torch::nn::LinearOptions(arch.text_width, arch.embed_dim).bias(false)));
}

torch::Tensor ClipModelImpl::encode_image(const torch::Tensor& pixels) {
    auto x = patch_embedding_(pixels).flatten(2).transpose(1, 2);  // B x P x W
    auto cls = class_embedding_.view({1, 1, -1}).expand({x.size(0), 1, x.size(2)});
    x = torch::cat({cls, x}, 1) + vision_positions_->weight.unsqueeze(0);
    x = pre_layrnorm_(x);
    for (const auto& layer : *vision_layers_) x = layer->as<ClipLayer>()->forward(x);
    return visual_projection_(post_layernorm_(x.select(1, 0)));
}

torch::Tensor ClipModelImpl::encode_text(const torch::Tensor& ids) {
    const auto n = ids.size(1);
    auto x = token_embedding_(ids) + text_positions_->weight.slice(0, 0, n).unsqueeze(0);
    auto mask = torch::full({n, n}, -std::numeric_limits<double>::infinity(), x.options()).triu(1);
    for (const auto& layer : *text_layers_) x = layer->as<ClipLayer>()->forward(x, mask);
    x = final_layer_norm_(x);
    const auto eot = ids.argmax(-1);
    auto pooled = x.index({torch::arange(x.size(0)), eot});
    return text_projection_(pooled);
}

Vgg19Impl::Vgg19Impl(std::vector<int> widths) {
    if (widths.size() != 5) throw InvalidParameterError("VGG-19 needs five block widths");
    features_ = register_module("features", torch::nn::Sequential());
    int in = 3;
    std::size_t conv = 0;
    for (int idx = 0; idx <= kReluAfterConv5_2; ++idx) {
        if (conv < std::size(kVggConvs) && kVggConvs[conv] == idx) {
            const int out = widths[kVggBlockOf[conv]];
            features_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)));
            in = out;
            ++conv;
        } else if (idx == 4 || idx == 9 || idx == 18 || idx == 27) {
            features_->push_back(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2).stride(2)));
        } else {
            features_->push_back(torch::nn::ReLU());
        }
    }
}

std::pair<torch::Tensor, torch::Tensor> Vgg19Impl::conv4_2_conv5_2(const torch::Tensor& input) {
    torch::Tensor x = input;
    torch::Tensor c4;
    int idx = 0;
    for (auto& layer : *features_) {
        x = layer.forward(x);
        if (idx++ == kReluAfterConv4_2) c4 = x;
    }
    return {c4, x};
}

std::vector<int> Vgg19Impl::widths_from_weights(const TensorMap& w) {
    std::vector<int> widths(5);
    for (int b = 0; b < 5; ++b) {
        const int first_conv_of_block[] = {0, 5, 10, 19, 28};
        widths[b] = int(require(w, fmt::format("features.{}.weight", first_conv_of_block[b])).size(0));
    }
    return widths;
}

void load_parameters(torch::nn::Module& module, const TensorMap& weights, const std::string& origin) {
    torch::NoGradGuard no_grad;
    for (auto& p : module.named_parameters(true)) {
        auto it = weights.find(p.key());
        if (it == weights.end()) throw FormatError(fmt::format("{}: missing tensor '{}'", origin, p.key()));
        if (it->second.sizes() != p.value().sizes()) {
            throw FormatError(fmt::format("{}: tensor '{}' has shape {}, expected {}", origin, p.key(),
                                          fmt::join(it->second.sizes(), "x"), fmt::join(p.value().sizes(), "x")));
        }
        p.value().copy_(it->second);
    }
}

void init_synthetic(torch::nn::Module& module, std::uint64_t seed) {
    torch::NoGradGuard no_grad;
    auto gen = at::detail::createCPUGenerator(seed);
    for (auto& p : module.named_parameters(true)) {
        auto& t = p.value();
        const std::string& name = p.key();
        const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
        const bool is_norm = name.find("norm") != std::string::npos || name.find("layrnorm") != std::string::npos;
        if (is_norm) {
            t.fill_(is_bias ? 0.0 : 1.0);
        } else if (is_bias) {
            t.zero_();
        } else if (t.dim() == 4) {
            // He initialization keeps activations alive through the deep ReLU trunk
            const double fan_in = double(t.size(1) * t.size(2) * t.size(3));
            t.copy_(at::normal(0.0, std::sqrt(2.0 / fan_in), t.sizes(), gen));
        } else {
            t.copy_(at::normal(0.0, 0.02, t.sizes(), gen));
        }
    }
}

}  // namespace clipsplat::guidance
