#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include <Eigen/Core>
#include <fmt/format.h>

#include "clipsplat/errors.hpp"
#include "clipsplat/render/render.hpp"
#include "clipsplat/splat/covariance.hpp"
#include "sh.hpp"

namespace clipsplat::render {

using splat::BasicGaussianSet;
using splat::Modality;

int view_width(const View& v) {
    return std::visit([](const auto& x) { return x.width; }, v);
}

int view_height(const View& v) {
    return std::visit([](const auto& x) { return x.height; }, v);
}

namespace detail {

template <typename T>
using Mat3 = Eigen::Matrix<T, 3, 3>;
template <typename T>
using Vec3 = Eigen::Matrix<T, 3, 1>;

/// Screen-space footprint of one Gaussian.
template <typename T>
struct Splat {
    int index = 0;
    T mx = 0, my = 0;
    T conic_a = 0, conic_b = 0, conic_c = 0;
    T opacity = 0;
    std::array<T, 3> color{};
    std::array<bool, 3> color_active{};
    T depth = 0;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

template <typename T>
struct SplatGrad {
    T mx = 0, my = 0;
    T conic_a = 0, conic_b = 0, conic_c = 0;
    T opacity = 0;
    std::array<T, 3> color{};
};

template <typename T>
struct ForwardState {
    std::vector<Splat<T>> splats;  // visible, in compositing order
    std::vector<std::vector<int>> tiles;
    int tiles_x = 0;
    int tiles_y = 0;
    Color background{};
    RasterSettings settings;
};

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
std::array<T, 4> quat_at(const BasicGaussianSet<T>& m, std::size_t i) {
    return {m.rotations[4 * i], m.rotations[4 * i + 1], m.rotations[4 * i + 2], m.rotations[4 * i + 3]};
}

/// R * diag(exp(log_scale)) for Gaussian i.
template <typename T>
Mat3<T> scaled_rotation(const BasicGaussianSet<T>& m, std::size_t i, Vec3<T>& scale) {
    const Mat3<T> r = splat::rotation_matrix(quat_at(m, i));
    scale = Vec3<T>(std::exp(m.log_scales[3 * i]), std::exp(m.log_scales[3 * i + 1]),
                    std::exp(m.log_scales[3 * i + 2]));
    return r * scale.asDiagonal();
}

/// Gradient of the unnormalized quaternion given dL/dR.
template <typename T>
std::array<T, 4> quat_backward(const std::array<T, 4>& q, const Mat3<T>& g) {
    const T norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    const T w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
    std::array<T, 4> dn;
    dn[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    dn[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                 w * g(2, 1) - 2 * x * g(2, 2));
    dn[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                 z * g(2, 1) - 2 * y * g(2, 2));
    dn[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
                 x * g(2, 0) + y * g(2, 1));
    const T qn[4] = {w, x, y, z};
    T dot = 0;
    for (int c = 0; c < 4; ++c) dot += qn[c] * dn[c];
    std::array<T, 4> out;
    for (int c = 0; c < 4; ++c) out[c] = (dn[c] - qn[c] * dot) / norm;
    return out;
}

/// Accumulates rotation and log-scale gradients from dL/dSigma3 (symmetric) for Sigma3 = M M^T.
template <typename T>
void covariance_backward(const BasicGaussianSet<T>& m, std::size_t i, const Mat3<T>& d_sigma,
                         BasicGaussianSet<T>& grad) {
    Vec3<T> scale;
    const Mat3<T> mm = scaled_rotation(m, i, scale);
    const Mat3<T> r = splat::rotation_matrix(quat_at(m, i));
    const Mat3<T> d_m = T(2) * d_sigma * mm;
    Mat3<T> d_r;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) d_r(a, b) = d_m(a, b) * scale(b);
    for (int b = 0; b < 3; ++b) {
        T ds = 0;
        for (int a = 0; a < 3; ++a) ds += d_m(a, b) * r(a, b);
        grad.log_scales[3 * i + b] += ds * scale(b);
    }
    const auto dq = quat_backward(quat_at(m, i), d_r);
    for (int c = 0; c < 4; ++c) grad.rotations[4 * i + c] += dq[c];
}

template <typename T>
bool finalize_footprint(Splat<T>& s, T cov_a, T cov_b, T cov_c, int width, int height, T cutoff) {
    const T det = cov_a * cov_c - cov_b * cov_b;
    if (!(det > T(0)) || !(s.opacity > cutoff)) return false;
    s.conic_a = cov_c / det;
    s.conic_b = -cov_b / det;
    s.conic_c = cov_a / det;
    const T mid = T(0.5) * (cov_a + cov_c);
    const T lambda_max = mid + std::sqrt(std::max(T(0), mid * mid - det));
    const T radius = std::sqrt(T(2) * std::log(s.opacity / cutoff) * lambda_max);
    s.x0 = std::max(0, static_cast<int>(std::ceil(s.mx - radius)));
    s.x1 = std::min(width - 1, static_cast<int>(std::floor(s.mx + radius)));
    s.y0 = std::max(0, static_cast<int>(std::ceil(s.my - radius)));
    s.y1 = std::min(height - 1, static_cast<int>(std::floor(s.my + radius)));
    return s.x0 <= s.x1 && s.y0 <= s.y1 && std::isfinite(static_cast<double>(radius));
}

template <typename T>
void flat_color(const BasicGaussianSet<T>& m, std::size_t i, Splat<T>& s) {
    for (int c = 0; c < 3; ++c) {
        const T v = T(sh::kC0) * m.sh[3 * i + c] + T(0.5);
        s.color_active[c] = v > T(0);
        s.color[c] = s.color_active[c] ? v : T(0);
    }
}

/// Orthographic footprint shared by image2d and video. Returns false when invisible.
template <typename T>
bool project_orthographic(const BasicGaussianSet<T>& m, std::size_t i, int width, int height, bool mirrored,
                          const VideoView* video, T cutoff, Splat<T>& s) {
    Vec3<T> scale;
    const Mat3<T> mm = scaled_rotation(m, i, scale);
    const Mat3<T> sigma = mm * mm.transpose();
    T a = sigma(0, 0), b = sigma(0, 1), c = sigma(1, 1);
    if (mirrored) b = -b;
    if (a * c - b * b < T(kDegenerateDet)) {
        a += T(kDilation);
        c += T(kDilation);
    }
    s.index = static_cast<int>(i);
    s.mx = mirrored ? T(width - 1) - m.means[3 * i] : m.means[3 * i];
    s.my = m.means[3 * i + 1];
    s.depth = mirrored ? -m.means[3 * i + 2] : m.means[3 * i + 2];
    s.opacity = sigmoid(m.opacity_logits[i]);
    if (video) {
        const T dt = T(video->time) - m.time_centers[i];
        const T st = std::exp(m.log_time_scales[i]);
        s.mx += m.velocities[2 * i] * dt;
        s.my += m.velocities[2 * i + 1] * dt;
        s.opacity *= std::exp(T(-0.5) * dt * dt / (st * st));
    }
    flat_color(m, i, s);
    return finalize_footprint(s, a, b, c, width, height, cutoff);
}

template <typename T>
struct CameraT {
    Mat3<T> w;
    Vec3<T> t;
    Vec3<T> center;
    T fx, fy, cx, cy;
};

template <typename T>
CameraT<T> camera_cast(const splat::Camera& cam) {
    CameraT<T> c;
    c.w = cam.rotation.cast<T>();
    c.t = cam.translation.cast<T>();
    c.center = cam.center().cast<T>();
    c.fx = T(cam.fx);
    c.fy = T(cam.fy);
    c.cx = T(cam.cx);
    c.cy = T(cam.cy);
    return c;
}

template <typename T>
bool project_perspective(const BasicGaussianSet<T>& m, std::size_t i, const splat::Camera& camera,
                         const CameraT<T>& cam, T cutoff, Splat<T>& s) {
    const Vec3<T> mean(m.means[3 * i], m.means[3 * i + 1], m.means[3 * i + 2]);
    const Vec3<T> p = cam.w * mean + cam.t;
    if (!(p.z() > T(kNearPlane))) return false;
    const T iz = T(1) / p.z();
    Eigen::Matrix<T, 2, 3> jac;
    jac << cam.fx * iz, 0, -cam.fx * p.x() * iz * iz, 0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
    Vec3<T> scale;
    const Mat3<T> mm = scaled_rotation(m, i, scale);
    const Mat3<T> sigma = mm * mm.transpose();
    const Eigen::Matrix<T, 2, 3> tr = jac * cam.w;
    const Eigen::Matrix<T, 2, 2> cov = tr * sigma * tr.transpose();

    s.index = static_cast<int>(i);
    s.mx = cam.fx * p.x() * iz + cam.cx;
    s.my = cam.fy * p.y() * iz + cam.cy;
    s.depth = p.z();
    s.opacity = sigmoid(m.opacity_logits[i]);

    Vec3<T> dir = mean - cam.center;
    dir /= dir.norm();
    const auto basis = sh::basis<T>(m.sh_degree, dir.x(), dir.y(), dir.z());
    const int k_count = m.sh_coeffs();
    for (int c = 0; c < 3; ++c) {
        T v = T(0.5);
        for (int k = 0; k < k_count; ++k) v += basis[k] * m.sh[(i * k_count + k) * 3 + c];
        s.color_active[c] = v > T(0);
        s.color[c] = s.color_active[c] ? v : T(0);
    }
    return finalize_footprint(s, cov(0, 0) + T(kDilation), cov(0, 1), cov(1, 1) + T(kDilation),
                              camera.width, camera.height, cutoff);
}

}  // namespace detail

template <typename T>
Rasterizer<T>::~Rasterizer() = default;
template <typename T>
Rasterizer<T>::Rasterizer(Rasterizer&&) noexcept = default;
template <typename T>
Rasterizer<T>& Rasterizer<T>::operator=(Rasterizer&&) noexcept = default;

namespace {

template <typename T>
void check_model_view(const BasicGaussianSet<T>& model, const View& view) {
    if (const auto* iv = std::get_if<ImageView>(&view)) {
        if (model.modality != Modality::Image2D) {
            throw IncompatibleModelsError(
                fmt::format("image view requested for a {} model", splat::to_string(model.modality)));
        }
        if (iv->width < 1 || iv->height < 1) throw InvalidParameterError("viewport must be at least 1x1");
    } else if (const auto* vv = std::get_if<VideoView>(&view)) {
        if (model.modality != Modality::Video) {
            throw IncompatibleModelsError(
                fmt::format("video view requested for a {} model", splat::to_string(model.modality)));
        }
        if (vv->width < 1 || vv->height < 1) throw InvalidParameterError("viewport must be at least 1x1");
        if (!(vv->time >= 0.0 && vv->time <= 1.0)) {
            throw DomainError(fmt::format("video time {} outside [0, 1]", vv->time));
        }
    } else {
        const auto& cam = std::get<splat::Camera>(view);
        if (model.modality != Modality::Scene3D) {
            throw IncompatibleModelsError(
                fmt::format("camera view requested for a {} model", splat::to_string(model.modality)));
        }
        cam.validate();
    }
}

}  // namespace

template <typename T>
Rasterizer<T>::Rasterizer(const BasicGaussianSet<T>& model, const View& view, const Color& background,
                          const RasterSettings& settings)
    : model_(&model), state_(std::make_unique<detail::ForwardState<T>>()) {
    check_model_view(model, view);
    const int width = view_width(view);
    const int height = view_height(view);
    auto& st = *state_;
    st.background = background;
    st.settings = settings;
    const T cutoff = T(settings.alpha_cutoff);

    st.splats.reserve(model.size());
    const auto* iv = std::get_if<ImageView>(&view);
    const auto* vv = std::get_if<VideoView>(&view);
    const auto* cam = std::get_if<splat::Camera>(&view);
    std::optional<detail::CameraT<T>> cam_t;
    if (cam) cam_t = detail::camera_cast<T>(*cam);
    for (std::size_t i = 0; i < model.size(); ++i) {
        detail::Splat<T> s;
        bool visible = false;
        if (iv) {
            visible = detail::project_orthographic(model, i, width, height, iv->mirrored, nullptr, cutoff, s);
        } else if (vv) {
            visible = detail::project_orthographic(model, i, width, height, false, vv, cutoff, s);
        } else {
            visible = detail::project_perspective(model, i, *cam, *cam_t, cutoff, s);
        }
        if (visible) st.splats.push_back(s);
    }
    std::stable_sort(st.splats.begin(), st.splats.end(),
                     [](const auto& a, const auto& b) { return a.depth < b.depth; });

    const int ts = settings.tile_size;
    st.tiles_x = (width + ts - 1) / ts;
    st.tiles_y = (height + ts - 1) / ts;
    st.tiles.assign(std::size_t(st.tiles_x) * st.tiles_y, {});
    for (int pos = 0; pos < static_cast<int>(st.splats.size()); ++pos) {
        const auto& s = st.splats[pos];
        for (int ty = s.y0 / ts; ty <= s.y1 / ts; ++ty)
            for (int tx = s.x0 / ts; tx <= s.x1 / ts; ++tx) st.tiles[std::size_t(ty) * st.tiles_x + tx].push_back(pos);
    }

    output_.width = width;
    output_.height = height;
    output_.view = view;
    output_.rgb.assign(std::size_t(width) * height * 3, T(0));
    output_.alpha.assign(std::size_t(width) * height, T(0));
    const T min_t = T(settings.min_transmittance);
    for (int py = 0; py < height; ++py) {
        for (int px = 0; px < width; ++px) {
            const auto& tile = st.tiles[std::size_t(py / ts) * st.tiles_x + px / ts];
            T trans = 1;
            T acc[3] = {0, 0, 0};
            for (int pos : tile) {
                const auto& s = st.splats[pos];
                if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) continue;
                const T dx = T(px) - s.mx, dy = T(py) - s.my;
                const T power = T(-0.5) * (s.conic_a * dx * dx + s.conic_c * dy * dy) - s.conic_b * dx * dy;
                const T w = s.opacity * std::exp(power);
                if (w < cutoff) continue;
                const T alpha = std::min(T(kMaxAlpha), w);
                for (int c = 0; c < 3; ++c) acc[c] += trans * alpha * s.color[c];
                trans *= T(1) - alpha;
                if (trans < min_t) break;
            }
            const std::size_t p = std::size_t(py) * width + px;
            for (int c = 0; c < 3; ++c) output_.rgb[3 * p + c] = acc[c] + trans * T(background[c]);
            output_.alpha[p] = T(1) - trans;
        }
    }
}

template <typename T>
BasicGaussianSet<T> Rasterizer<T>::backward(std::span<const T> d_rgb, std::span<const T> d_alpha) const {
    const auto& st = *state_;
    const auto& model = *model_;
    const int width = output_.width;
    const int height = output_.height;
    const std::size_t npix = std::size_t(width) * height;
    if (d_rgb.size() != 3 * npix || (!d_alpha.empty() && d_alpha.size() != npix)) {
        throw InvalidParameterError("render gradient does not match the rendered image size");
    }
    const T cutoff = T(st.settings.alpha_cutoff);
    const T min_t = T(st.settings.min_transmittance);
    const int ts = st.settings.tile_size;

    std::vector<detail::SplatGrad<T>> sg(st.splats.size());
    struct Hit {
        int pos;
        T alpha;
        T falloff;
        T trans;
        T dx, dy;
        bool clamped;
    };
    std::vector<Hit> hits;
    for (int py = 0; py < height; ++py) {
        for (int px = 0; px < width; ++px) {
            const std::size_t p = std::size_t(py) * width + px;
            const T dc[3] = {d_rgb[3 * p], d_rgb[3 * p + 1], d_rgb[3 * p + 2]};
            const T da = d_alpha.empty() ? T(0) : d_alpha[p];
            if (dc[0] == T(0) && dc[1] == T(0) && dc[2] == T(0) && da == T(0)) continue;

            hits.clear();
            const auto& tile = st.tiles[std::size_t(py / ts) * st.tiles_x + px / ts];
            T trans = 1;
            for (int pos : tile) {
                const auto& s = st.splats[pos];
                if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) continue;
                const T dx = T(px) - s.mx, dy = T(py) - s.my;
                const T power = T(-0.5) * (s.conic_a * dx * dx + s.conic_c * dy * dy) - s.conic_b * dx * dy;
                const T g = std::exp(power);
                const T w = s.opacity * g;
                if (w < cutoff) continue;
                const bool clamped = w > T(kMaxAlpha);
                const T alpha = clamped ? T(kMaxAlpha) : w;
                hits.push_back({pos, alpha, g, trans, dx, dy, clamped});
                trans *= T(1) - alpha;
                if (trans < min_t) break;
            }

            T behind[3] = {T(st.background[0]), T(st.background[1]), T(st.background[2])};
            T behind_alpha = 0;
            for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
                const auto& s = st.splats[it->pos];
                auto& g = sg[it->pos];
                T d_alpha_k = da * (T(1) - behind_alpha);
                for (int c = 0; c < 3; ++c) {
                    g.color[c] += it->trans * it->alpha * dc[c];
                    d_alpha_k += dc[c] * (s.color[c] - behind[c]);
                }
                d_alpha_k *= it->trans;
                for (int c = 0; c < 3; ++c) behind[c] = it->alpha * s.color[c] + (T(1) - it->alpha) * behind[c];
                behind_alpha = it->alpha + (T(1) - it->alpha) * behind_alpha;
                if (it->clamped) continue;
                g.opacity += d_alpha_k * it->falloff;
                const T d_power = d_alpha_k * s.opacity * it->falloff;
                const T dx = it->dx, dy = it->dy;
                // d(pixel - mean) = -d(mean)
                g.mx += d_power * (s.conic_a * dx + s.conic_b * dy);
                g.my += d_power * (s.conic_b * dx + s.conic_c * dy);
                g.conic_a += d_power * T(-0.5) * dx * dx;
                g.conic_b += d_power * (-dx * dy);
                g.conic_c += d_power * T(-0.5) * dy * dy;
            }
        }
    }

    BasicGaussianSet<T> grad = model.zeros_like();
    const auto* iv = std::get_if<ImageView>(&output_.view);
    const auto* vv = std::get_if<VideoView>(&output_.view);
    const auto* cam = std::get_if<splat::Camera>(&output_.view);
    std::optional<detail::CameraT<T>> cam_t;
    if (cam) cam_t = detail::camera_cast<T>(*cam);

    for (std::size_t pos = 0; pos < st.splats.size(); ++pos) {
        const auto& s = st.splats[pos];
        const auto& g = sg[pos];
        const std::size_t i = static_cast<std::size_t>(s.index);

        // conic -> 2D covariance
        Eigen::Matrix<T, 2, 2> k;
        k << s.conic_a, s.conic_b, s.conic_b, s.conic_c;
        Eigen::Matrix<T, 2, 2> gk;
        gk << g.conic_a, T(0.5) * g.conic_b, T(0.5) * g.conic_b, g.conic_c;
        const Eigen::Matrix<T, 2, 2> gcov = -(k * gk * k);  // symmetric gradient w.r.t. the 2x2 covariance

        const T sig = detail::sigmoid(model.opacity_logits[i]);

        if (iv || vv) {
            const bool mirrored = iv && iv->mirrored;
            detail::Mat3<T> d_sigma = detail::Mat3<T>::Zero();
            d_sigma(0, 0) = gcov(0, 0);
            d_sigma(1, 1) = gcov(1, 1);
            d_sigma(0, 1) = d_sigma(1, 0) = mirrored ? -gcov(0, 1) : gcov(0, 1);
            detail::covariance_backward(model, i, d_sigma, grad);
            grad.means[3 * i] += mirrored ? -g.mx : g.mx;
            grad.means[3 * i + 1] += g.my;
            T d_sig = g.opacity;
            if (vv) {
                const T dt = T(vv->time) - model.time_centers[i];
                const T st_ = std::exp(model.log_time_scales[i]);
                const T temporal = std::exp(T(-0.5) * dt * dt / (st_ * st_));
                d_sig = g.opacity * temporal;
                const T d_temporal = g.opacity * sig;
                // d temporal / d tc = temporal * dt / st^2 ; d temporal / d log st = temporal * dt^2 / st^2
                grad.time_centers[i] += d_temporal * temporal * dt / (st_ * st_);
                grad.log_time_scales[i] += d_temporal * temporal * dt * dt / (st_ * st_);
                grad.velocities[2 * i] += g.mx * dt;
                grad.velocities[2 * i + 1] += g.my * dt;
                grad.time_centers[i] -= g.mx * model.velocities[2 * i] + g.my * model.velocities[2 * i + 1];
            }
            grad.opacity_logits[i] += d_sig * sig * (T(1) - sig);
            for (int c = 0; c < 3; ++c) {
                if (s.color_active[c]) grad.sh[3 * i + c] += g.color[c] * T(sh::kC0);
            }
        } else {
            const auto& c = *cam_t;
            const detail::Vec3<T> mean(model.means[3 * i], model.means[3 * i + 1], model.means[3 * i + 2]);
            const detail::Vec3<T> p = c.w * mean + c.t;
            const T iz = T(1) / p.z();
            const T iz2 = iz * iz;
            Eigen::Matrix<T, 2, 3> jac;
            jac << c.fx * iz, 0, -c.fx * p.x() * iz2, 0, c.fy * iz, -c.fy * p.y() * iz2;
            detail::Vec3<T> scale;
            const detail::Mat3<T> mm = detail::scaled_rotation(model, i, scale);
            const detail::Mat3<T> sigma = mm * mm.transpose();
            const Eigen::Matrix<T, 2, 3> tr = jac * c.w;

            const detail::Mat3<T> d_sigma = tr.transpose() * gcov * tr;
            detail::covariance_backward(model, i, d_sigma, grad);

            const Eigen::Matrix<T, 2, 3> d_tr = T(2) * gcov * tr * sigma;
            const Eigen::Matrix<T, 2, 3> d_jac = d_tr * c.w.transpose();
            detail::Vec3<T> d_p;
            d_p.x() = d_jac(0, 2) * (-c.fx * iz2) + g.mx * c.fx * iz;
            d_p.y() = d_jac(1, 2) * (-c.fy * iz2) + g.my * c.fy * iz;
            d_p.z() = d_jac(0, 0) * (-c.fx * iz2) + d_jac(0, 2) * (T(2) * c.fx * p.x() * iz2 * iz) +
                      d_jac(1, 1) * (-c.fy * iz2) + d_jac(1, 2) * (T(2) * c.fy * p.y() * iz2 * iz) -
                      g.mx * c.fx * p.x() * iz2 - g.my * c.fy * p.y() * iz2;
            detail::Vec3<T> d_mean = c.w.transpose() * d_p;

            // view-dependent color
            const detail::Vec3<T> offset = mean - c.center;
            const T dist = offset.norm();
            const detail::Vec3<T> dir = offset / dist;
            const auto basis = sh::basis<T>(model.sh_degree, dir.x(), dir.y(), dir.z());
            const auto jb = sh::basis_jacobian<T>(model.sh_degree, dir.x(), dir.y(), dir.z());
            const int kc = model.sh_coeffs();
            detail::Vec3<T> d_dir = detail::Vec3<T>::Zero();
            for (int ch = 0; ch < 3; ++ch) {
                if (!s.color_active[ch]) continue;
                for (int kk = 0; kk < kc; ++kk) {
                    const std::size_t idx = (i * kc + kk) * 3 + ch;
                    grad.sh[idx] += g.color[ch] * basis[kk];
                    const T coeff = model.sh[idx] * g.color[ch];
                    for (int a = 0; a < 3; ++a) d_dir(a) += coeff * jb[kk][a];
                }
            }
            d_mean += (d_dir - dir * dir.dot(d_dir)) / dist;
            for (int a = 0; a < 3; ++a) grad.means[3 * i + a] += d_mean(a);
            grad.opacity_logits[i] += g.opacity * sig * (T(1) - sig);
        }
    }
    return grad;
}

template <typename T>
BasicRenderOutput<T> render(const BasicGaussianSet<T>& model, const View& view, const Color& background) {
    Rasterizer<T> r(model, view, background);
    return r.output();
}

template <typename T>
BasicRenderOutput<T> render_image2d(const BasicGaussianSet<T>& model, int width, int height, const Color& background,
                                    bool mirrored) {
    return render(model, View{ImageView{width, height, mirrored}}, background);
}

template <typename T>
BasicRenderOutput<T> render_video_frame(const BasicGaussianSet<T>& model, double t, int width, int height,
                                        const Color& background) {
    return render(model, View{VideoView{width, height, t}}, background);
}

template <typename T>
BasicRenderOutput<T> render_3d(const BasicGaussianSet<T>& model, const splat::Camera& camera,
                               const Color& background) {
    return render(model, View{camera}, background);
}

#define CLIPSPLAT_INSTANTIATE(T)                                                                                 \
    template class Rasterizer<T>;                                                                                \
    template BasicRenderOutput<T> render(const BasicGaussianSet<T>&, const View&, const Color&);                 \
    template BasicRenderOutput<T> render_image2d(const BasicGaussianSet<T>&, int, int, const Color&, bool);      \
    template BasicRenderOutput<T> render_video_frame(const BasicGaussianSet<T>&, double, int, int, const Color&); \
    template BasicRenderOutput<T> render_3d(const BasicGaussianSet<T>&, const splat::Camera&, const Color&);

CLIPSPLAT_INSTANTIATE(float)
CLIPSPLAT_INSTANTIATE(double)

#undef CLIPSPLAT_INSTANTIATE

}  // namespace clipsplat::render
