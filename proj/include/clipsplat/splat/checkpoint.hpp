#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "clipsplat/splat/gaussian_set.hpp"

namespace clipsplat::splat {

enum class Stage { Reconstructed, Stylized };

std::string_view to_string(Stage s);

struct Provenance {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::uint64_t steps = 0;
};

/// Render defaults recorded next to the parameters so a checkpoint can be rendered without
/// the dataset it was fitted on.
struct RenderHints {
    int width = 0;
    int height = 0;
    int frames = 0;  // video only
    std::array<float, 3> background{0.f, 0.f, 0.f};
};

struct Checkpoint {
    static constexpr int kFormatVersion = 1;

    GaussianSet model;
    Stage stage = Stage::Reconstructed;
    Provenance provenance;
    std::optional<RenderHints> hints;
};

inline constexpr char kCheckpointMagic[8] = {'C', 'L', 'S', 'P', 'L', 'A', 'T', '1'};

/// File layout: 8-byte magic "CLSPLAT1", uint32 little-endian header length, UTF-8 JSON header
/// (version, modality, stage, provenance, array table), then little-endian float32 arrays in the
/// order the header lists them.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace clipsplat::splat
