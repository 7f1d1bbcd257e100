#include "clipsplat/splat/camera.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "clipsplat/errors.hpp"

namespace clipsplat::splat {

void Camera::validate() const {
    if (width < 1 || height < 1) {
        throw InvalidCameraError(fmt::format("camera image size {}x{} is empty", width, height));
    }
    if (!std::isfinite(fx) || !std::isfinite(fy) || fx == 0.0 || fy == 0.0) {
        throw InvalidCameraError("camera focal length must be finite and non-zero");
    }
    if (!std::isfinite(cx) || !std::isfinite(cy) || !rotation.allFinite() || !translation.allFinite()) {
        throw InvalidCameraError("camera parameters must be finite");
    }
    const double err = (rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (err > 1e-6 || rotation.determinant() < 0.0) {
        throw InvalidCameraError(fmt::format("camera rotation is not orthonormal (error {:.3g})", err));
    }
}

Camera camera_from_fov(double fov_x, int width, int height, const Eigen::Matrix3d& rotation,
                       const Eigen::Vector3d& translation) {
    Camera cam;
    cam.rotation = rotation;
    cam.translation = translation;
    cam.width = width;
    cam.height = height;
    cam.fx = 0.5 * width / std::tan(0.5 * fov_x);
    cam.fy = cam.fx;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    return cam;
}

}  // namespace clipsplat::splat
