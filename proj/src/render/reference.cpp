#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "clipsplat/errors.hpp"
#include "clipsplat/render/render.hpp"
#include "sh.hpp"

namespace clipsplat::render {

namespace {

using splat::BasicGaussianSet;
using splat::Modality;

template <typename T>
struct Footprint {
    bool visible = false;
    Eigen::Matrix<T, 2, 1> mean;
    Eigen::Matrix<T, 2, 2> inv_cov;
    T opacity = 0;
    Eigen::Matrix<T, 3, 1> color;
    T depth = 0;
};

template <typename T>
Eigen::Matrix<T, 3, 3> world_covariance(const BasicGaussianSet<T>& m, std::size_t i) {
    Eigen::Quaternion<T> q(m.rotations[4 * i], m.rotations[4 * i + 1], m.rotations[4 * i + 2],
                           m.rotations[4 * i + 3]);
    q.normalize();
    Eigen::Matrix<T, 3, 1> s2;
    for (int a = 0; a < 3; ++a) s2(a) = std::exp(T(2) * m.log_scales[3 * i + a]);
    const Eigen::Matrix<T, 3, 3> r = q.toRotationMatrix();
    return r * s2.asDiagonal() * r.transpose();
}

template <typename T>
Eigen::Matrix<T, 2, 2> clamp_degenerate(Eigen::Matrix<T, 2, 2> cov) {
    if (cov.determinant() < T(kDegenerateDet)) cov += T(kDilation) * Eigen::Matrix<T, 2, 2>::Identity();
    return cov;
}

template <typename T>
Eigen::Matrix<T, 3, 1> clamped_flat_color(const BasicGaussianSet<T>& m, std::size_t i) {
    Eigen::Matrix<T, 3, 1> c;
    for (int ch = 0; ch < 3; ++ch) c(ch) = std::max(T(0), T(sh::kC0) * m.sh[3 * i + ch] + T(0.5));
    return c;
}

template <typename T>
T logistic(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
Footprint<T> image_footprint(const BasicGaussianSet<T>& m, std::size_t i, const ImageView& v) {
    Footprint<T> f;
    Eigen::Matrix<T, 2, 2> cov = world_covariance(m, i).template topLeftCorner<2, 2>();
    f.mean = {m.means[3 * i], m.means[3 * i + 1]};
    f.depth = m.means[3 * i + 2];
    if (v.mirrored) {
        const Eigen::Matrix<T, 2, 2> flip = Eigen::Matrix<T, 2, 1>(-1, 1).asDiagonal();
        cov = flip * cov * flip;
        f.mean.x() = T(v.width - 1) - f.mean.x();
        f.depth = -f.depth;
    }
    f.inv_cov = clamp_degenerate(cov).inverse();
    f.opacity = logistic(m.opacity_logits[i]);
    f.color = clamped_flat_color(m, i);
    f.visible = true;
    return f;
}

template <typename T>
Footprint<T> video_footprint(const BasicGaussianSet<T>& m, std::size_t i, const VideoView& v) {
    // Space-time covariance over (x, y, t) whose conditional at the time center is the spatial
    // covariance and whose regression of position on time is the velocity.
    const Eigen::Matrix<T, 2, 2> spatial = world_covariance(m, i).template topLeftCorner<2, 2>();
    const Eigen::Matrix<T, 2, 1> vel(m.velocities[2 * i], m.velocities[2 * i + 1]);
    const T var_t = std::exp(T(2) * m.log_time_scales[i]);
    Eigen::Matrix<T, 3, 3> st;
    st.template topLeftCorner<2, 2>() = spatial + vel * vel.transpose() * var_t;
    st.template topRightCorner<2, 1>() = vel * var_t;
    st.template bottomLeftCorner<1, 2>() = (vel * var_t).transpose();
    st(2, 2) = var_t;

    const T dt = T(v.time) - m.time_centers[i];
    const Eigen::Matrix<T, 2, 1> cross = st.template topRightCorner<2, 1>();
    const T stt = st(2, 2);
    Footprint<T> f;
    f.mean = Eigen::Matrix<T, 2, 1>(m.means[3 * i], m.means[3 * i + 1]) + cross * (dt / stt);
    const Eigen::Matrix<T, 2, 2> cond = st.template topLeftCorner<2, 2>() - cross * cross.transpose() / stt;
    f.inv_cov = clamp_degenerate(cond).inverse();
    f.opacity = logistic(m.opacity_logits[i]) * std::exp(T(-0.5) * dt * dt / stt);
    f.depth = m.means[3 * i + 2];
    f.color = clamped_flat_color(m, i);
    f.visible = true;
    return f;
}

template <typename T>
Footprint<T> camera_footprint(const BasicGaussianSet<T>& m, std::size_t i, const splat::Camera& cam) {
    Footprint<T> f;
    const Eigen::Matrix<T, 3, 3> w = cam.rotation.cast<T>();
    const Eigen::Matrix<T, 3, 1> x(m.means[3 * i], m.means[3 * i + 1], m.means[3 * i + 2]);
    const Eigen::Matrix<T, 3, 1> p = w * x + cam.translation.cast<T>();
    if (!(p.z() > T(kNearPlane))) return f;
    Eigen::Matrix<T, 2, 3> jac = Eigen::Matrix<T, 2, 3>::Zero();
    jac(0, 0) = T(cam.fx) / p.z();
    jac(0, 2) = -T(cam.fx) * p.x() / (p.z() * p.z());
    jac(1, 1) = T(cam.fy) / p.z();
    jac(1, 2) = -T(cam.fy) * p.y() / (p.z() * p.z());
    Eigen::Matrix<T, 2, 2> cov = jac * w * world_covariance(m, i) * w.transpose() * jac.transpose();
    cov += T(kDilation) * Eigen::Matrix<T, 2, 2>::Identity();
    f.inv_cov = cov.inverse();
    f.mean = {T(cam.fx) * p.x() / p.z() + T(cam.cx), T(cam.fy) * p.y() / p.z() + T(cam.cy)};
    f.depth = p.z();
    f.opacity = logistic(m.opacity_logits[i]);

    const Eigen::Matrix<T, 3, 1> dir = (x - cam.center().cast<T>()).normalized();
    const auto basis = sh::basis<T>(m.sh_degree, dir.x(), dir.y(), dir.z());
    const int kc = m.sh_coeffs();
    for (int ch = 0; ch < 3; ++ch) {
        T v = T(0.5);
        for (int k = 0; k < kc; ++k) v += basis[k] * m.sh[(i * kc + k) * 3 + ch];
        f.color(ch) = std::max(T(0), v);
    }
    f.visible = true;
    return f;
}

}  // namespace

template <typename T>
BasicRenderOutput<T> render_reference(const BasicGaussianSet<T>& model, const View& view, const Color& background) {
    // shares the fast path's view validation by running a zero-size check through it
    const int width = view_width(view);
    const int height = view_height(view);
    {
        BasicGaussianSet<T> empty = BasicGaussianSet<T>::zeros(model.modality, 0, model.sh_degree);
        Rasterizer<T> check(empty, view, background);
    }

    std::vector<Footprint<T>> fps(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        if (const auto* iv = std::get_if<ImageView>(&view)) {
            fps[i] = image_footprint(model, i, *iv);
        } else if (const auto* vv = std::get_if<VideoView>(&view)) {
            fps[i] = video_footprint(model, i, *vv);
        } else {
            fps[i] = camera_footprint(model, i, std::get<splat::Camera>(view));
        }
    }
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < model.size(); ++i) {
        if (fps[i].visible) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(fps[a].depth, a) < std::tie(fps[b].depth, b);
    });

    BasicRenderOutput<T> out;
    out.width = width;
    out.height = height;
    out.view = view;
    out.rgb.resize(std::size_t(width) * height * 3);
    out.alpha.resize(std::size_t(width) * height);
    for (int py = 0; py < height; ++py) {
        for (int px = 0; px < width; ++px) {
            Eigen::Matrix<T, 3, 1> acc = Eigen::Matrix<T, 3, 1>::Zero();
            T trans = 1;
            for (std::size_t i : order) {
                const auto& f = fps[i];
                const Eigen::Matrix<T, 2, 1> d = Eigen::Matrix<T, 2, 1>(T(px), T(py)) - f.mean;
                const T weight = f.opacity * std::exp(T(-0.5) * d.dot(f.inv_cov * d));
                const T alpha = std::min(T(kMaxAlpha), weight);
                acc += trans * alpha * f.color;
                trans *= T(1) - alpha;
            }
            const std::size_t p = std::size_t(py) * width + px;
            for (int c = 0; c < 3; ++c) out.rgb[3 * p + c] = acc(c) + trans * T(background[c]);
            out.alpha[p] = T(1) - trans;
        }
    }
    return out;
}

template BasicRenderOutput<float> render_reference(const BasicGaussianSet<float>&, const View&, const Color&);
template BasicRenderOutput<double> render_reference(const BasicGaussianSet<double>&, const View&, const Color&);

}  // namespace clipsplat::render
