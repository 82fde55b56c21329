#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "mmscan/common.hpp"

namespace mmscan {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

/// SE(3) pose: rotation in millimeter-free units, translation in mm.
/// Applies as x' = R x + t.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }

    /// Exponential-map construction; `axis_angle` is direction * angle (rad).
    static RigidTransform from_axis_angle(const Vec3& axis_angle, const Vec3& t);

    /// Logarithm of the rotation part, magnitude in [0, pi].
    Vec3 axis_angle() const;

    Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
    RigidTransform inverse() const;
    Mat4 matrix() const;

    /// Frobenius orthonormality defect and determinant distance from +1.
    double orthonormality_error() const;

    /// Nearest rotation by polar decomposition (projects drifted matrices
    /// back onto SO(3)).
    void reorthonormalize();
};

RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) { return compose(a, b); }

/// Rotation matrix for an axis-angle vector.
Mat3 rotation_from_axis_angle(const Vec3& axis_angle);

/// Geodesic angle (rad) between two rotations.
double rotation_angle_between(const Mat3& a, const Mat3& b);

/// Pinhole camera (or projector-as-inverse-camera). `pose` maps device
/// coordinates to world coordinates; projection works on world points.
struct CameraModel {
    double fu = 0.0;
    double fv = 0.0;
    double cu = 0.0;
    double cv = 0.0;
    RigidTransform pose;  // device -> world
    int width = 0;
    int height = 0;
    std::optional<std::array<double, 2>> distortion;  // radial k1, k2

    Mat3 intrinsic_matrix() const;

    /// K [R|t] mapping world homogeneous points to image homogeneous points.
    Mat34 projection_matrix() const;

    bool in_image(const Vec2& px, double margin = 0.0) const {
        return px.x() >= -margin && px.x() <= width - 1 + margin && px.y() >= -margin &&
               px.y() <= height - 1 + margin;
    }

    void validate() const;
};

/// Perspective projection of a world point. Throws PointBehindCamera when the
/// depth in the device frame is <= 0.
Vec2 project(const CameraModel& cam, const Vec3& world_point);

/// Projection of a homogeneous world point via the 3x4 matrix route
/// (scale-invariant; used by property tests and the DLT machinery).
Vec2 project_homogeneous(const CameraModel& cam, const Vec4& world_point_h);

/// Depth of a world point along the device optical axis.
double depth_in_camera(const CameraModel& cam, const Vec3& world_point);

/// Inverse of project at a known device-frame depth (distortion-aware).
Vec3 backproject(const CameraModel& cam, const Vec2& px, double depth);

struct TriangulationResult {
    Vec3 point = Vec3::Zero();
    double reprojection_rms_px = 0.0;
};

/// Multi-view triangulation: normalized DLT followed by one Gauss-Newton
/// step on pixel reprojection error. Throws DegenerateRays when the linear
/// system is rank deficient (parallel or repeated rays).
TriangulationResult triangulate(const std::vector<std::pair<CameraModel, Vec2>>& observations);

/// Root-mean-square pixel reprojection error over (world point, pixel) pairs.
double reprojection_rms(const CameraModel& cam, const std::vector<std::pair<Vec3, Vec2>>& pairs);

}  // namespace mmscan
