#pragma once

#include <Eigen/Core>

namespace clipsplat::splat {

/// Pinhole camera. Pose maps world to camera coordinates (x right, y down, z forward).
struct Camera {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    /// Throws InvalidCameraError when the rotation is not orthonormal, the focal length is
    /// zero or non-finite, or the image size is empty.
    void validate() const;

    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
};

/// Camera with intrinsics derived from a horizontal field of view: fx = fy = (W/2) / tan(fov/2),
/// principal point at the image center (pixel centers sit on integer coordinates).
Camera camera_from_fov(double fov_x, int width, int height, const Eigen::Matrix3d& rotation,
                       const Eigen::Vector3d& translation);

}  // namespace clipsplat::splat
