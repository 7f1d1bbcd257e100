#include "clipsplat/data/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fnmatch.h>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "clipsplat/errors.hpp"

namespace clipsplat::data {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kImageExtensions = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp"};

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return std::find(kImageExtensions.begin(), kImageExtensions.end(), ext) != kImageExtensions.end();
}

Mask mask_from_alpha(const std::vector<float>& alpha, int width, int height) {
    Mask m{width, height, std::vector<std::uint8_t>(alpha.size())};
    for (std::size_t k = 0; k < alpha.size(); ++k) m.values[k] = alpha[k] >= 0.5f ? 1 : 0;
    return m;
}

void composite(Image& image, const std::vector<float>& alpha, const render::Color& bg) {
    for (std::size_t p = 0; p < alpha.size(); ++p) {
        for (int c = 0; c < 3; ++c) {
            float& v = image.rgb[3 * p + c];
            v = v * alpha[p] + static_cast<float>(bg[c]) * (1.f - alpha[p]);
        }
    }
}

std::optional<Mask> sidecar_mask(const LoadOptions& options, const fs::path& image_path, int width, int height) {
    if (!options.mask_dir) return std::nullopt;
    const fs::path candidate = *options.mask_dir / (image_path.stem().string() + ".png");
    if (!fs::exists(candidate)) return std::nullopt;
    const cv::Mat raw = cv::imread(candidate.string(), cv::IMREAD_GRAYSCALE);
    if (raw.empty()) throw DatasetError(fmt::format("cannot decode mask '{}'", candidate.string()));
    if (raw.cols != width || raw.rows != height) {
        throw DatasetError(fmt::format("mask '{}' is {}x{}, image is {}x{}", candidate.string(), raw.cols,
                                       raw.rows, width, height));
    }
    Mask m{width, height, std::vector<std::uint8_t>(std::size_t(width) * height)};
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) m.values[std::size_t(y) * width + x] = raw.at<std::uint8_t>(y, x) >= 128;
    }
    return m;
}

/// Decodes an image and its mask (alpha first, then sidecar). Color stays un-composited.
struct Decoded {
    Image image;
    std::vector<float> alpha;
    std::optional<Mask> mask;
};

Decoded decode_with_mask(const fs::path& path, const LoadOptions& options) {
    Decoded d;
    d.image = read_image(path, &d.alpha);
    if (!d.alpha.empty()) {
        d.mask = mask_from_alpha(d.alpha, d.image.width, d.image.height);
    } else {
        d.mask = sidecar_mask(options, path, d.image.width, d.image.height);
    }
    return d;
}

/// Applies the background default and composites alpha once the background is known.
void finish(Dataset& ds, std::vector<Decoded>& decoded, const LoadOptions& options) {
    const bool any_mask = std::any_of(decoded.begin(), decoded.end(), [](const Decoded& d) { return d.mask.has_value(); });
    ds.background = options.background.value_or(any_mask ? render::Color{1, 1, 1} : render::Color{0, 0, 0});
    for (std::size_t i = 0; i < decoded.size(); ++i) {
        if (!decoded[i].alpha.empty()) composite(decoded[i].image, decoded[i].alpha, ds.background);
        ds.items[i].image = std::move(decoded[i].image);
        ds.items[i].mask = std::move(decoded[i].mask);
    }
}

void check_same_size(const Image& first, const Image& other, const fs::path& path) {
    if (first.width != other.width || first.height != other.height) {
        throw DatasetError(fmt::format("'{}' is {}x{} but the dataset is {}x{}", path.string(), other.width,
                                       other.height, first.width, first.height));
    }
}

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void append_f64(std::vector<std::uint8_t>& out, double v) { append_u64(out, std::bit_cast<std::uint64_t>(v)); }

}  // namespace

Image Image::filled(int width, int height, const render::Color& color) {
    Image img{width, height, std::vector<float>(std::size_t(width) * height * 3)};
    for (std::size_t p = 0; p < std::size_t(width) * height; ++p) {
        for (int c = 0; c < 3; ++c) img.rgb[3 * p + c] = static_cast<float>(color[c]);
    }
    return img;
}

double Mask::coverage() const {
    if (values.empty()) return 0.0;
    std::size_t on = 0;
    for (auto v : values) on += v;
    return double(on) / double(values.size());
}

bool Dataset::has_masks() const {
    return !items.empty() && std::all_of(items.begin(), items.end(), [](const Item& i) { return i.mask.has_value(); });
}

Image read_image(const fs::path& path, std::vector<float>* alpha) {
    if (!fs::exists(path)) throw DatasetError(fmt::format("image '{}' does not exist", path.string()));
    const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty() || raw.cols == 0 || raw.rows == 0) {
        throw DatasetError(fmt::format("cannot decode image '{}'", path.string()));
    }
    double scale = 1.0;
    switch (raw.depth()) {
        case CV_8U: scale = 1.0 / 255.0; break;
        case CV_16U: scale = 1.0 / 65535.0; break;
        case CV_32F: scale = 1.0; break;
        default: throw DatasetError(fmt::format("unsupported sample type in '{}'", path.string()));
    }
    cv::Mat f;
    raw.convertTo(f, CV_32F, scale);

    cv::Mat rgb;
    cv::Mat a;
    switch (f.channels()) {
        case 1: cv::cvtColor(f, rgb, cv::COLOR_GRAY2RGB); break;
        case 2: {
            std::vector<cv::Mat> planes;
            cv::split(f, planes);
            cv::cvtColor(planes[0], rgb, cv::COLOR_GRAY2RGB);
            a = planes[1];
            break;
        }
        case 3: cv::cvtColor(f, rgb, cv::COLOR_BGR2RGB); break;
        case 4: {
            cv::cvtColor(f, rgb, cv::COLOR_BGRA2RGB);
            cv::extractChannel(f, a, 3);
            break;
        }
        default: throw DatasetError(fmt::format("unsupported channel count in '{}'", path.string()));
    }

    Image img{rgb.cols, rgb.rows, std::vector<float>(std::size_t(rgb.cols) * rgb.rows * 3)};
    for (int y = 0; y < rgb.rows; ++y) {
        std::memcpy(&img.rgb[std::size_t(y) * rgb.cols * 3], rgb.ptr<float>(y), sizeof(float) * rgb.cols * 3);
    }
    if (alpha) {
        alpha->clear();
        if (!a.empty()) {
            alpha->resize(std::size_t(a.cols) * a.rows);
            for (int y = 0; y < a.rows; ++y) std::memcpy(&(*alpha)[std::size_t(y) * a.cols], a.ptr<float>(y), sizeof(float) * a.cols);
        }
    }
    return img;
}

void write_png(const fs::path& path, const Image& image) {
    cv::Mat out(image.height, image.width, CV_8UC3);
    for (int y = 0; y < image.height; ++y) {
        auto* row = out.ptr<std::uint8_t>(y);
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(image.at(x, y, c), 0.f, 1.f);
                // OpenCV stores BGR
                row[3 * x + (2 - c)] = static_cast<std::uint8_t>(std::lround(v * 255.f));
            }
        }
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), out)) throw DatasetError(fmt::format("cannot write '{}'", path.string()));
}

template <typename T>
Image to_image(const render::BasicRenderOutput<T>& out) {
    Image img{out.width, out.height, std::vector<float>(out.rgb.begin(), out.rgb.end())};
    return img;
}

template Image to_image(const render::BasicRenderOutput<float>&);
template Image to_image(const render::BasicRenderOutput<double>&);

Dataset load_image(const fs::path& path, const LoadOptions& options) {
    Dataset ds;
    ds.modality = splat::Modality::Image2D;
    std::vector<Decoded> decoded;
    decoded.push_back(decode_with_mask(path, options));
    ds.items.resize(1);
    ds.items[0].view = render::ImageView{decoded[0].image.width, decoded[0].image.height, false};
    ds.items[0].source = path.string();
    finish(ds, decoded, options);
    return ds;
}

std::vector<fs::path> list_frames(const fs::path& dir_or_pattern) {
    std::vector<fs::path> frames;
    if (fs::is_directory(dir_or_pattern)) {
        for (const auto& e : fs::directory_iterator(dir_or_pattern)) {
            if (e.is_regular_file() && is_image_file(e.path())) frames.push_back(e.path());
        }
    } else {
        const fs::path dir = dir_or_pattern.has_parent_path() ? dir_or_pattern.parent_path() : fs::path(".");
        const std::string pattern = dir_or_pattern.filename().string();
        if (!fs::is_directory(dir)) throw DatasetError(fmt::format("frame directory '{}' does not exist", dir.string()));
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && fnmatch(pattern.c_str(), e.path().filename().c_str(), 0) == 0) {
                frames.push_back(e.path());
            }
        }
    }
    std::sort(frames.begin(), frames.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    return frames;
}

Dataset load_video(const fs::path& dir_or_pattern, const LoadOptions& options) {
    const auto frames = list_frames(dir_or_pattern);
    if (frames.size() < 2) {
        throw DatasetError(fmt::format("video '{}' needs at least 2 frames, found {}", dir_or_pattern.string(),
                                       frames.size()));
    }
    Dataset ds;
    ds.modality = splat::Modality::Video;
    std::vector<Decoded> decoded;
    ds.items.resize(frames.size());
    const double last = double(frames.size() - 1);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        decoded.push_back(decode_with_mask(frames[i], options));
        check_same_size(decoded.front().image, decoded.back().image, frames[i]);
        ds.items[i].view = render::VideoView{decoded[i].image.width, decoded[i].image.height, double(i) / last};
        ds.items[i].source = frames[i].string();
    }
    finish(ds, decoded, options);
    return ds;
}

namespace {

struct FrameSpec {
    fs::path image;
    Eigen::Matrix4d c2w;
};

struct Transforms {
    double fov_x = 0;
    std::optional<double> fov_y;
    std::vector<FrameSpec> frames;
};

Transforms parse_transforms(const fs::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw DatasetError(fmt::format("cannot read '{}'", json_path.string()));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(fmt::format("'{}' is not valid JSON: {}", json_path.string(), e.what()));
    }
    Transforms t;
    const fs::path base = json_path.parent_path();
    try {
        t.fov_x = j.at("camera_angle_x").get<double>();
        if (j.contains("camera_angle_y")) t.fov_y = j["camera_angle_y"].get<double>();
        const auto& frames = j.at("frames");
        for (std::size_t f = 0; f < frames.size(); ++f) {
            FrameSpec spec;
            fs::path rel = frames[f].at("file_path").get<std::string>();
            fs::path p = base / rel;
            if (!p.has_extension() || !fs::exists(p)) {
                const fs::path with_png = fs::path(p.string() + ".png");
                if (fs::exists(with_png)) p = with_png;
            }
            spec.image = p.lexically_normal();
            const auto m = frames[f].at("transform_matrix").get<std::vector<std::vector<double>>>();
            if (m.size() != 4) throw DatasetError(fmt::format("frame {} transform_matrix is not 4x4", f));
            for (int r = 0; r < 4; ++r) {
                if (m[r].size() != 4) throw DatasetError(fmt::format("frame {} transform_matrix is not 4x4", f));
                for (int c = 0; c < 4; ++c) spec.c2w(r, c) = m[r][c];
            }
            t.frames.push_back(spec);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(fmt::format("'{}': missing or malformed field: {}", json_path.string(), e.what()));
    }
    if (t.frames.empty()) throw DatasetError(fmt::format("'{}' lists no frames", json_path.string()));
    return t;
}

splat::Camera camera_for(const Transforms& t, std::size_t f, int width, int height) {
    // OpenGL camera axes (y up, z backward) to OpenCV (y down, z forward)
    Eigen::Matrix4d c2w = t.frames[f].c2w;
    c2w.col(1) *= -1.0;
    c2w.col(2) *= -1.0;
    const Eigen::Matrix3d r = c2w.topLeftCorner<3, 3>();
    if (!c2w.allFinite() || std::abs(r.determinant()) < 1e-9) {
        throw DatasetError(fmt::format("frame {} ('{}') has a non-invertible transform", f, t.frames[f].image.string()));
    }
    // nearest rotation; exported poses carry rounding noise
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d rot = svd.matrixU() * svd.matrixV().transpose();
    if (rot.determinant() < 0) {
        throw DatasetError(fmt::format("frame {} ('{}') has a reflecting transform", f, t.frames[f].image.string()));
    }
    const Eigen::Matrix3d w2c_rot = rot.transpose();
    const Eigen::Vector3d w2c_t = -w2c_rot * c2w.topRightCorner<3, 1>();
    auto cam = splat::camera_from_fov(t.fov_x, width, height, w2c_rot, w2c_t);
    if (t.fov_y) cam.fy = 0.5 * height / std::tan(0.5 * *t.fov_y);
    cam.validate();
    return cam;
}

}  // namespace

std::vector<splat::Camera> load_cameras(const fs::path& transforms_json, int width, int height) {
    const auto t = parse_transforms(transforms_json);
    std::vector<splat::Camera> cams;
    for (std::size_t f = 0; f < t.frames.size(); ++f) cams.push_back(camera_for(t, f, width, height));
    return cams;
}

Dataset load_multiview(const fs::path& transforms_json, const LoadOptions& options) {
    const auto t = parse_transforms(transforms_json);
    Dataset ds;
    ds.modality = splat::Modality::Scene3D;
    ds.items.resize(t.frames.size());
    std::vector<Decoded> decoded;
    for (std::size_t f = 0; f < t.frames.size(); ++f) {
        const auto& path = t.frames[f].image;
        if (!fs::exists(path)) {
            throw DatasetError(fmt::format("frame {} references missing image '{}'", f, path.string()));
        }
        decoded.push_back(decode_with_mask(path, options));
        check_same_size(decoded.front().image, decoded.back().image, path);
        ds.items[f].view = camera_for(t, f, decoded[f].image.width, decoded[f].image.height);
        ds.items[f].source = path.string();
    }
    finish(ds, decoded, options);
    return ds;
}

std::vector<std::uint8_t> serialize(const Dataset& ds) {
    std::vector<std::uint8_t> out;
    const std::string tag = std::string(splat::to_string(ds.modality));
    out.insert(out.end(), tag.begin(), tag.end());
    for (double c : ds.background) append_f64(out, c);
    append_u64(out, ds.items.size());
    for (const auto& item : ds.items) {
        append_u64(out, std::uint64_t(item.image.width));
        append_u64(out, std::uint64_t(item.image.height));
        for (float v : item.image.rgb) append_u32(out, std::bit_cast<std::uint32_t>(v));
        append_u64(out, item.mask ? 1 : 0);
        if (item.mask) out.insert(out.end(), item.mask->values.begin(), item.mask->values.end());
        if (const auto* v = std::get_if<render::VideoView>(&item.view)) {
            append_f64(out, v->time);
        } else if (const auto* cam = std::get_if<splat::Camera>(&item.view)) {
            for (int k = 0; k < 9; ++k) append_f64(out, cam->rotation(k));
            for (int k = 0; k < 3; ++k) append_f64(out, cam->translation(k));
            for (double v : {cam->fx, cam->fy, cam->cx, cam->cy}) append_f64(out, v);
        }
    }
    return out;
}

}  // namespace clipsplat::data
