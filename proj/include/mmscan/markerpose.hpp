#pragma once

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include "mmscan/geometry.hpp"
#include "mmscan/image.hpp"

namespace mmscan {

/// Three-circle tracking target: c0 at the origin, c1 on +x at d01, c2 on +y
/// at d02, all in the target plane z = 0.
struct MarkerGeometry {
    double d01 = 40.0;    // mm
    double d02 = 40.0;    // mm
    double radius = 7.5;  // mm

    std::array<Vec3, 3> centers() const {
        return {Vec3(0, 0, 0), Vec3(d01, 0, 0), Vec3(0, d02, 0)};
    }
    void validate() const {
        if (radius <= 0 || d01 <= 2 * radius || d02 <= 2 * radius)
            throw InvalidArgument("marker circles overlap or have non-positive radius");
    }
};

/// Dark connected component that may be a printed circle.
struct Blob {
    double cx = 0.0;  // centroid (px)
    double cy = 0.0;
    double area = 0.0;
    int min_x = 0, max_x = 0, min_y = 0, max_y = 0;
};

/// Candidate dark regions: connected components below the adaptive threshold
/// mean - 2 sigma, kept when area lies in [50, 20000] px^2 and the region
/// fills its moment ellipse (fill ratio > 0.8, non-degenerate minor axis).
std::vector<Blob> detect_blobs(const ImageU8& image);

struct EllipseFit {
    Vec2 center = Vec2::Zero();
    double semi_major = 0.0;  // px
    double semi_minor = 0.0;  // px
    double angle = 0.0;       // rad, major axis vs +x
    double residual_px = 0.0; // RMS gradient-normalized algebraic distance
};

/// Direct least-squares conic fit constrained to ellipses (stable
/// Halir-Flusser formulation). Throws InvalidArgument for < 5 points and
/// DegenerateInput for near-degenerate scatter.
EllipseFit fit_ellipse(const std::vector<Vec2>& contour_points);

/// Subpixel center of a blob: edge crossings sampled along rays from the
/// centroid, then ellipse-fitted. Returns nullopt when too few edge samples
/// survive (blob clipped by the border, hollow region, ...).
std::optional<EllipseFit> refine_center(const ImageU8& image, const Blob& blob);

/// A labeled detection in one view.
struct MarkerDetection {
    std::array<Vec2, 3> centers{};  // indexed by ID 0, 1, 2
    int view = 0;                   // 0 = cam1, 1 = cam2
    double residual_px = 0.0;       // worst ellipse-fit residual
};

/// Label three candidate centers: c0 is the vertex nearest a right angle;
/// c1/c2 are ordered so the implied marker normal faces the camera. Throws
/// AmbiguousTarget when no angle is within 20 degrees of 90.
std::array<Vec2, 3> label_centers(const std::array<Vec2, 3>& candidates);

/// Label both views; IDs agree across views by the shared geometric rule.
std::pair<MarkerDetection, MarkerDetection> assign_ids(const std::array<Vec2, 3>& view1,
                                                       const std::array<Vec2, 3>& view2);

struct TargetPose {
    RigidTransform pose;               // target {T} -> world {W}
    double triangulation_residual_px = 0.0;
    double d01_measured = 0.0;         // mm, triangulated c0-c1 distance
    double d02_measured = 0.0;
    bool scale_ok = true;              // within 5% of the configured geometry
};

/// Stereo pose of the target: triangulate the three centers, orthonormalize
/// the in-plane axes and assemble R = [x, y, x cross y], t = C0.
TargetPose estimate_pose(const MarkerDetection& det1, const MarkerDetection& det2,
                         const CameraModel& cam1, const CameraModel& cam2,
                         const MarkerGeometry& geometry);

/// Detector interface so a learned center detector can replace the classical
/// one without touching the pose machinery.
class CenterDetector {
public:
    virtual ~CenterDetector() = default;
    /// Unlabeled candidate centers, or nullopt when not exactly three remain.
    virtual std::optional<std::array<Vec2, 3>> detect(const ImageU8& image) const = 0;
};

/// Blob + ray-sampled-edge + ellipse-fit implementation of CenterDetector.
class ClassicalCenterDetector : public CenterDetector {
public:
    std::optional<std::array<Vec2, 3>> detect(const ImageU8& image) const override;
    /// Residual of the worst ellipse fit in the last successful detect call.
    double last_residual_px() const { return last_residual_; }

private:
    mutable double last_residual_ = 0.0;
};

/// Full stereo tracking step: detect in both views, label, estimate pose.
TargetPose track_target(const CenterDetector& detector, const ImageU8& view1, const ImageU8& view2,
                        const CameraModel& cam1, const CameraModel& cam2,
                        const MarkerGeometry& geometry);

}  // namespace mmscan
