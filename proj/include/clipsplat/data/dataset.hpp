#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "clipsplat/render/render.hpp"
#include "clipsplat/splat/gaussian_set.hpp"

namespace clipsplat::data {

/// RGB image with float samples in [0, 1], H x W x 3 row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> rgb;

    static Image filled(int width, int height, const render::Color& color);

    float& at(int x, int y, int c) { return rgb[(std::size_t(y) * width + x) * 3 + c]; }
    float at(int x, int y, int c) const { return rgb[(std::size_t(y) * width + x) * 3 + c]; }
};

/// Binary mask, 1 = foreground.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values;

    double coverage() const;
};

struct Item {
    Image image;
    std::optional<Mask> mask;
    render::View view;
    std::string source;
};

struct Dataset {
    splat::Modality modality = splat::Modality::Image2D;
    std::vector<Item> items;
    render::Color background{0, 0, 0};

    int width() const { return items.empty() ? 0 : items.front().image.width; }
    int height() const { return items.empty() ? 0 : items.front().image.height; }
    bool has_masks() const;
};

struct LoadOptions {
    /// Directory of single-channel PNG masks named after the image stems. Used only for images
    /// without an alpha channel.
    std::optional<std::filesystem::path> mask_dir;
    /// Defaults to white when any item carries a mask and black otherwise.
    std::optional<render::Color> background;
};

/// Single image. An alpha channel becomes the mask and the color is composited over the
/// background. Throws DatasetError naming the path on unreadable or empty files.
Dataset load_image(const std::filesystem::path& path, const LoadOptions& options = {});

/// Directory of frames, or a filename pattern with `*` / `?` wildcards. Frames are ordered
/// lexicographically and get normalized times i / (N - 1).
Dataset load_video(const std::filesystem::path& dir_or_pattern, const LoadOptions& options = {});

/// NeRF-synthetic style transforms.json: `camera_angle_x` and `frames[].transform_matrix`
/// (camera-to-world, OpenGL axes). Poses are converted to world-to-camera, OpenCV axes.
Dataset load_multiview(const std::filesystem::path& transforms_json, const LoadOptions& options = {});

/// Camera list of a transforms.json without decoding any images.
std::vector<splat::Camera> load_cameras(const std::filesystem::path& transforms_json, int width, int height);

/// Frame files of a directory or pattern in time order.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir_or_pattern);

/// Canonical byte encoding, identical for identical inputs.
std::vector<std::uint8_t> serialize(const Dataset& dataset);

/// Decodes any 8/16-bit image OpenCV understands; grayscale is replicated to RGB.
/// When `alpha` is given it receives the alpha channel (empty if the file has none).
Image read_image(const std::filesystem::path& path, std::vector<float>* alpha = nullptr);

/// Writes an 8-bit RGB PNG (values clamped to [0, 1] and rounded).
void write_png(const std::filesystem::path& path, const Image& image);

/// Render output as an Image.
template <typename T>
Image to_image(const render::BasicRenderOutput<T>& out);

}  // namespace clipsplat::data
