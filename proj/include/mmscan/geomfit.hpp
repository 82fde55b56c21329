#pragma once

#include <vector>

#include "mmscan/geometry.hpp"
#include "mmscan/pointcloud.hpp"

namespace mmscan {

struct PlaneModel {
    Vec3 normal = Vec3::UnitZ();  // unit
    double offset = 0.0;          // plane: normal . x = offset (mm)

    double distance(const Vec3& p) const { return normal.dot(p) - offset; }
};

struct SphereModel {
    Vec3 center = Vec3::Zero();
    double radius = 0.0;

    double distance(const Vec3& p) const { return (p - center).norm() - radius; }
};

struct CylinderModel {
    Vec3 axis_point = Vec3::Zero();
    Vec3 axis_dir = Vec3::UnitZ();  // unit
    double radius = 0.0;

    double distance(const Vec3& p) const {
        const Vec3 d = p - axis_point;
        return (d - axis_dir.dot(d) * axis_dir).norm() - radius;
    }
};

template <typename Model>
struct FitResult {
    Model model;
    double rms = 0.0;  // mm, orthogonal distances
};

/// Total least squares plane: centroid plus smallest principal direction.
/// Throws DegenerateInput for < 3 points or collinear input.
FitResult<PlaneModel> fit_plane(const std::vector<Vec3>& points);

/// Algebraic sphere fit refined by geometric LM on radial residuals.
/// Throws DegenerateInput for < 4 points or coplanar input.
FitResult<SphereModel> fit_sphere(const std::vector<Vec3>& points);

/// Cylinder fit: PCA axis candidates, then LM over axis point (kept on the
/// plane through the centroid orthogonal to the axis), axis direction and
/// radius. Throws DegenerateInput on planar/degenerate spread and
/// NonConvergence when no candidate refines.
FitResult<CylinderModel> fit_cylinder(const std::vector<Vec3>& points);

struct CylinderGap {
    double d = 0.0;              // r_outer - r_inner along the outer axis (mm)
    double axis_angle_deg = 0.0; // angle between the two axes
    double axis_offset = 0.0;    // distance between axes near the inner axis point (mm)
};

/// Radial gap between two near-parallel cylinders. Throws DegenerateInput
/// when the axes differ by more than `max_axis_angle_deg`.
CylinderGap cylinder_gap(const CylinderModel& inner, const CylinderModel& outer,
                         double max_axis_angle_deg = 5.0);

inline FitResult<PlaneModel> fit_plane(const PointCloud& cloud) { return fit_plane(cloud.points); }
inline FitResult<SphereModel> fit_sphere(const PointCloud& cloud) { return fit_sphere(cloud.points); }
inline FitResult<CylinderModel> fit_cylinder(const PointCloud& cloud) { return fit_cylinder(cloud.points); }

}  // namespace mmscan
