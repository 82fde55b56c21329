#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mmscan/calib.hpp"
#include "mmscan/geometry.hpp"
#include "mmscan/image.hpp"
#include "mmscan/markerpose.hpp"
#include "mmscan/slcodec.hpp"
#include "mmscan/usfreehand.hpp"

namespace mmscan {

/// Dark circles printed on a plane (calibration boards, tracking targets).
struct CircleTexture {
    std::vector<Vec2> centers;  // plane coordinates (mm)
    double radius = 5.0;        // mm
    double circle_albedo = 0.1;
};

/// Bounded rectangle in its local z = 0 plane, normal +z.
struct PlaneSurface {
    RigidTransform pose;  // plane -> world
    double half_width = 1e9;
    double half_height = 1e9;
    double albedo = 0.9;
    std::optional<CircleTexture> texture;
};

struct SphereSurface {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;
    double albedo = 0.9;
};

/// Finite open tube.
struct CylinderSurface {
    Vec3 axis_point = Vec3::Zero();
    Vec3 axis_dir = Vec3::UnitX();
    double radius = 1.0;
    double half_length = 1e9;
    double albedo = 0.9;
};

/// |x/a|^n + |y/b|^n + |z/c|^n = 1 in the local frame.
struct SuperellipsoidSurface {
    RigidTransform pose;  // local -> world
    Vec3 semi_axes = Vec3(85.0, 65.0, 55.0);
    double exponent = 2.5;
    double albedo = 0.9;

    /// Implicit value in world coordinates (< 0 inside).
    double implicit(const Vec3& world_point) const;
};

using Surface = std::variant<PlaneSurface, SphereSurface, CylinderSurface, SuperellipsoidSurface>;

struct SurfaceHit {
    double t = 0.0;
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();  // oriented toward the ray origin
    double albedo = 0.9;
    int surface_index = -1;
};

/// Nearest analytic intersection along origin + t * dir (dir normalized).
std::optional<SurfaceHit> raycast(const std::vector<Surface>& surfaces, const Vec3& origin,
                                  const Vec3& dir, double t_min = 1e-6);

/// Counter-based deterministic noise: every draw is a pure function of
/// (seed, stream, index), so renders are bit-identical regardless of how
/// pixels are partitioned across threads or calls.
class DeterministicNoise {
public:
    explicit DeterministicNoise(std::uint64_t seed) : seed_(seed) {}
    double uniform(std::uint64_t stream, std::uint64_t index) const;   // [0, 1)
    double gaussian(std::uint64_t stream, std::uint64_t index) const;  // N(0, 1)
    Vec3 gaussian3(std::uint64_t stream, std::uint64_t index) const;
    Vec3 unit_vector(std::uint64_t stream, std::uint64_t index) const;

private:
    std::uint64_t seed_;
};

struct NoiseModel {
    double pixel_sigma = 0.0;         // additive camera noise (gray levels)
    double pose_rot_sigma_deg = 0.0;  // tracked-pose rotation noise
    double pose_trans_sigma_mm = 0.0;
    double speckle_sigma = 0.0;       // multiplicative log-normal US speckle
    double segmentation_sigma_px = 0.0;
};

/// Synthetic acquisition setup: surfaces, calibrated devices, the tracking
/// marker, a noise model and the seed that fixes every stochastic draw.
struct Scene {
    std::vector<Surface> surfaces;
    CameraModel cam1;       // world frame lives here
    CameraModel cam2;
    CameraModel projector;
    MarkerGeometry marker;
    NoiseModel noise;
    std::uint64_t seed = 1;
};

/// Devices at the default rig: cameras/projector 700 mm from the working
/// volume with a 150 mm baseline, cam1 at the world origin.
Scene make_default_scene(int cam_width = 1280, int cam_height = 1024, int proj_width = 1280,
                         int proj_height = 800);

/// Per-camera-pixel geometry shared by every pattern of an SL acquisition:
/// the projector coordinate of the surface point, shading and depth.
struct ProjectorSample {
    bool valid = false;  // hit, illuminated, inside the projector image
    double xp = 0.0;
    double yp = 0.0;
    double shade = 0.0;  // albedo * Lambert factor, (0, 1]
    double depth = 0.0;  // camera-frame z (mm)
};

std::vector<ProjectorSample> project_geometry(const Scene& scene, const CameraModel& cam);

struct FringeRender {
    std::vector<ImageU8> captures;       // one per pattern image, in stack order
    MapF64 true_phase;                   // absolute phase of the vertical fringe set
    MapF64 true_depth;                   // camera-frame depth (mm)
    std::vector<std::uint8_t> true_mask;
};

/// Render every image of the given pattern sets as seen by `cam`;
/// `truth_pitch` selects the fringe pitch used for the ground-truth phase.
FringeRender render_fringe_views(const Scene& scene, const CameraModel& cam,
                                 const std::vector<PatternSet>& sets, double truth_pitch,
                                 std::uint64_t frame_base = 0);

/// Surface albedo under uniform illumination (tracking and board frames).
/// Supersampled 4x4, optional gain and horizontal box motion blur.
ImageU8 render_flat_view(const Scene& scene, const CameraModel& cam, double gain = 1.0,
                         int blur_len = 0, std::uint64_t frame_index = 0);

struct MarkerViews {
    ImageU8 view1;
    ImageU8 view2;
    std::array<Vec2, 3> truth_cam1{};  // projected circle centers
    std::array<Vec2, 3> truth_cam2{};
};

/// Stereo views of the tracking target at `target_pose` (target -> world).
/// Throws DegenerateInput when a circle center leaves either frustum.
MarkerViews render_marker_views(const Scene& scene, const RigidTransform& target_pose,
                                double gain = 1.0, int blur_len = 0, std::uint64_t frame_index = 0);

/// Stereo views of the calibration board plus the true projected centers.
struct BoardViews {
    ImageU8 view1;
    ImageU8 view2;
    ViewPoints truth_cam1;
    ViewPoints truth_cam2;
};
BoardViews render_board_views(const Scene& scene, const CalibrationBoard& board,
                              const RigidTransform& board_pose, std::uint64_t frame_index = 0);

/// Cross-wire B-scan: Gaussian echo at the image-plane coordinates of the
/// cross point. `truth_pixel` receives the analytic spot position;
/// `intersects` is false (blank image) when the plane misses the wire.
struct BScanRender {
    TrackedBScan scan;        // pose already carries tracking noise
    RigidTransform true_pose; // noise-free ^W T_T
    Vec2 truth_pixel = Vec2::Zero();  // analytic, noise-free
    Vec2 noisy_pixel = Vec2::Zero();  // truth plus segmentation noise (spot location)
    bool intersects = false;
};

BScanRender render_bscan_cross(const Scene& scene, const RigidTransform& true_probe_pose,
                               const ProbeCalibration& truth_cal, const Vec3& cross_point,
                               int us_width, int us_height, std::uint64_t frame_index);

/// Ring B-scan of a cylinder or sphere phantom: wall echo rendered as a
/// Gaussian profile of the 3D distance to the surface.
struct RingPhantom {
    bool is_sphere = false;
    Vec3 center_or_axis_point = Vec3::Zero();
    Vec3 axis_dir = Vec3::UnitX();
    double radius = 10.0;
};

BScanRender render_bscan_ring(const Scene& scene, const RigidTransform& true_probe_pose,
                              const ProbeCalibration& truth_cal, const RingPhantom& phantom,
                              int us_width, int us_height, std::uint64_t frame_index);

/// Probe calibration ground truth used by generated datasets.
ProbeCalibration default_probe_truth();

struct ProbeDatasetTruth {
    ProbeCalibration calibration;
    Vec3 cross_point = Vec3::Zero();
    std::vector<RigidTransform> true_poses;
    std::vector<Vec2> true_pixels;
};

/// Synthetic cross-wire dataset: diverse probe poses whose image planes all
/// pass through the cross point; poses and segmented pixels carry the
/// scene's noise model. `bscans` optionally receives rendered images.
CalibrationDataset generate_probe_dataset(const Scene& scene, int frames, std::uint64_t stream,
                                          ProbeDatasetTruth* truth = nullptr,
                                          std::vector<BScanRender>* bscans = nullptr,
                                          int us_width = 321, int us_height = 408,
                                          double nominal_depth_mm = 50.0);

struct SweepTruth {
    ProbeCalibration calibration;
    RingPhantom phantom;
    std::vector<RigidTransform> true_poses;
};

/// Tracked B-scan sweep along a ring phantom (stations along the axis with
/// small orientation jitter).
std::vector<BScanRender> generate_ring_sweep(const Scene& scene, const RingPhantom& phantom,
                                             int frames, double station_min, double station_max,
                                             std::uint64_t stream, SweepTruth* truth = nullptr,
                                             int us_width = 321, int us_height = 408);

/// Deterministic board poses with enough tilt diversity for calibration.
std::vector<RigidTransform> board_pose_sweep(const CalibrationBoard& board, int count,
                                             std::uint64_t seed, double stand_off_mm = 700.0);

/// The five evaluation plane poses (fronto plus tilted, spanning the
/// reference measurement volume).
std::vector<RigidTransform> plane_pose_set();

/// Default fringe recipe: `steps`-step phase shifting plus gray code with
/// white/black references, optionally a centerline frame. Returned sets are
/// ordered [phase, gray, white, black, (centerline)].
struct SlRecipe {
    int phase_steps = 8;
    int gray_bits = 7;
    double pitch = 18.0;
    bool centerline = true;
};
std::vector<PatternSet> make_pattern_stack(const SlRecipe& recipe, int proj_width, int proj_height,
                                           FringeOrientation orientation = FringeOrientation::Vertical);

/// On-disk protocol runner; see README for the dataset layout.
struct ProtocolOptions {
    std::string name;  // probe-calib-5x30 | plane-5poses | sphere |
                       // concentric-cylinders | breast-analog | calib-board
    std::uint64_t seed = 1;
    NoiseModel noise;
    int cam_width = 1280, cam_height = 1024;
    int proj_width = 1280, proj_height = 800;
    int us_width = 321, us_height = 408;
    SlRecipe recipe;
    int calib_poses = 34;        // calib-board
    int probe_calibrations = 5;  // probe-calib datasets
    int probe_frames = 30;       // frames per probe calibration
    int sweep_frames = 94;       // concentric-cylinders
    bool marker_frames = false;  // also render stereo tracking frames
};

void run_protocol(const ProtocolOptions& options, const std::string& out_dir);

/// Writes a calibration file (cameras + projector) in the persistent
/// key-value schema; `path` conventions match the CLI.
void write_device_calibration(const Scene& scene, const std::string& path,
                              const std::vector<double>& reprojection_rms = {});

}  // namespace mmscan
