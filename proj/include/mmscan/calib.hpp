#pragma once

#include <vector>

#include "mmscan/geometry.hpp"
#include "mmscan/levenberg.hpp"
#include "mmscan/slcodec.hpp"

namespace mmscan {

enum class DeviceId { Cam1 = 0, Cam2 = 1, Projector = 2 };

/// Planar asymmetric-circle target. Point (row i, col j) sits at
/// ((2j + i % 2) * spacing, i * spacing, 0) in the board frame (mm).
struct CalibrationBoard {
    int rows = 11;
    int cols = 4;
    double spacing = 24.0;       // mm
    double circle_radius = 7.0;  // mm, used by the renderer and detector

    std::vector<Vec3> grid() const;
    void validate() const;
};

/// Detected board points for one device in one pose; sparse so dropped
/// points (masked phase, failed detection) stay representable.
struct ViewObservation {
    DeviceId device = DeviceId::Cam1;
    int pose_index = 0;
    std::vector<std::pair<int, Vec2>> points;  // (grid index, pixel)
};

using ViewPoints = std::vector<std::pair<int, Vec2>>;

/// Hartley-normalized DLT homography (board plane -> image), ||H||_F = 1,
/// sign fixed so H(2,2) >= 0. Throws DegenerateInput for < 4 or collinear
/// correspondences.
Mat3 estimate_homography(const std::vector<Vec2>& board_xy, const std::vector<Vec2>& image_px);

/// Closed-form zero-skew intrinsics from >= 3 homographies via the
/// absolute-conic constraints. Throws IllConditioned when the constraint
/// system has condition number above 1e12 (e.g. all views fronto-parallel).
Mat3 intrinsics_from_homographies(const std::vector<Mat3>& homographies);

/// Board pose (board -> device) from K and H; rotation recovered from
/// K^-1 H columns and projected onto SO(3), translation sign fixed so the
/// board sits in front of the device.
RigidTransform pose_from_homography(const Mat3& k, const Mat3& h);

/// Joint Levenberg-Marquardt refinement result over one or more devices
/// sharing board poses. Device 0 is the reference: its pose is pinned to
/// the identity and defines the world frame.
struct JointCalibration {
    std::vector<CameraModel> devices;         // pose = device -> world
    std::vector<RigidTransform> board_poses;  // board -> world
    std::vector<double> device_rms;           // px
    std::vector<std::vector<double>> per_view_rms;
    double total_rms = 0.0;
    LmReport lm;
};

/// Minimize total squared reprojection error over intrinsics, per-view board
/// poses and (for devices > 0) the device extrinsics. `observations[d][v]`
/// lists the points device d sees in view v (may be empty).
JointCalibration refine_lm(const std::vector<Vec3>& grid,
                           const std::vector<std::vector<ViewPoints>>& observations,
                           const std::vector<CameraModel>& init_devices,
                           const std::vector<RigidTransform>& init_board_poses,
                           int max_iterations = 200);

/// Zhang-style single device calibration: homographies, closed-form K,
/// per-view poses, then refine_lm. The returned device pose is identity.
JointCalibration calibrate_device(const std::vector<Vec3>& grid,
                                  const std::vector<ViewPoints>& views, int width, int height);

/// Two-device calibration: per-device Zhang init, robust relative-pose
/// average, then joint refinement in the reference device frame.
JointCalibration calibrate_pair(const std::vector<Vec3>& grid,
                                const std::vector<ViewPoints>& views_ref,
                                const std::vector<ViewPoints>& views_other, int width_ref,
                                int height_ref, int width_other, int height_other);

/// Projector pixels of board points (the projector as an inverse camera):
/// sample the vertical/horizontal absolute phase maps at each camera-detected
/// center by bilinear interpolation over valid pixels. Points on masked
/// phase are dropped.
ViewPoints projector_correspondences(const ViewPoints& cam_points, const PhaseMap& absolute_vertical,
                                     const PhaseMap& absolute_horizontal, double pitch_vertical,
                                     double pitch_horizontal);

struct RelativePoseStats {
    RigidTransform mean;          // device2 -> device1
    double rotation_spread_deg = 0.0;
    double translation_spread_mm = 0.0;
};

/// Robust average (quaternion mean, translation mean) of per-view relative
/// poses from shared views; spread diagnostics flag inconsistent inputs.
/// Throws DegenerateInput when no shared views exist.
RelativePoseStats stereo_extrinsics(const std::vector<RigidTransform>& board_poses_device1,
                                    const std::vector<RigidTransform>& board_poses_device2);

}  // namespace mmscan
