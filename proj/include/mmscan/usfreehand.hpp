#pragma once

#include <vector>

#include "mmscan/geometry.hpp"
#include "mmscan/image.hpp"
#include "mmscan/levenberg.hpp"

namespace mmscan {

/// Freehand-US probe calibration: image frame {I} -> transducer frame {T}
/// plus the pixel pitches that convert B-scan pixels to mm.
struct ProbeCalibration {
    RigidTransform t_T_I;  // image -> transducer
    double sx = 0.1;       // mm/px
    double sy = 0.1;

    /// B-scan pixel to the transducer frame: T_TI . (sx u, sy v, 0).
    Vec3 map_to_transducer(const Vec2& px) const {
        return t_T_I.apply(Vec3(sx * px.x(), sy * px.y(), 0.0));
    }

    void validate() const {
        if (sx <= 0.0 || sy <= 0.0) throw InvalidArgument("pixel scales must be positive");
        if (sx < 0.01 || sx > 1.0 || sy < 0.01 || sy > 1.0)
            throw InvalidArgument("pixel scales outside the plausible [0.01, 1.0] mm/px range");
    }
};

/// One B-scan with the probe pose ^W T_T at capture time.
struct TrackedBScan {
    ImageU8 image;
    RigidTransform probe_pose;  // transducer -> world
    double timestamp = 0.0;
};

/// Cross-wire point phantom; only the wire-crossing position is observable,
/// so the phantom frame carries no rotation.
struct PhantomModel {
    Vec3 cross_point_world = Vec3::Zero();  // mm
};

/// (pose, segmented pixel) pairs feeding the calibration solve.
struct CalibrationObservation {
    RigidTransform probe_pose;  // ^W T_T
    Vec2 pixel;                 // segmented cross-point (px)
};

struct CalibrationDataset {
    std::vector<CalibrationObservation> observations;
    int image_width = 321;
    int image_height = 408;
    double nominal_depth_mm = 50.0;  // imaging depth used to seed the scales
};

/// Subpixel cross-wire echo position: intensity-weighted centroid of the
/// brightest connected region above 0.5 * max. Throws DegenerateInput when
/// no pixel rises above the threshold.
Vec2 segment_cross_point(const ImageU8& bscan);

/// Wall-echo peak extraction for ring-like cross sections: per-column and
/// per-row intensity peaks above `threshold_frac` * max, refined to subpixel
/// by a log-parabola. Used to turn B-scans of cylinder/sphere phantoms into
/// surface samples.
std::vector<Vec2> segment_echo_peaks(const ImageU8& bscan, double threshold_frac = 0.5);

struct ProbeSolveResult {
    ProbeCalibration calibration;
    PhantomModel phantom;
    double rms_mm = 0.0;  // sqrt(mean |residual|^2) over frames
    std::vector<double> per_frame_residual_mm;
    LmReport lm;
};

/// Levenberg-Marquardt over the 11 unknowns (6 for T_TI, two scales, the
/// cross-point world position), minimizing
///   sum_i | ^W T_T,i . T_TI . (sx u_i, sy v_i, 0) - p_F |^2.
/// Scales seed from the nominal depth, T_TI from the best of 24 canonical
/// orientations, p_F from the mapped-point mean. Throws
/// UnderconstrainedMotion without >= 6 frames spanning >= 3 orientations
/// (> 30 degrees extreme spread) and NonConvergence past 500 iterations.
ProbeSolveResult solve_calibration(const CalibrationDataset& data);

/// X_W = ^W T_T . T_TI . (sx u, sy v, 0).
Vec3 map_pixel_to_world(const ProbeCalibration& cal, const RigidTransform& probe_pose, const Vec2& px);

/// Reproducibility of a trial pixel across calibrations, mean over all
/// calibration pairs (transducer-frame distance, mm).
double cr1(const std::vector<ProbeCalibration>& calibrations, const Vec2& trial_pixel);

/// Reproducibility as mean distance to the mean reconstructed point (mm).
double cr2(const std::vector<ProbeCalibration>& calibrations, const Vec2& trial_pixel);

/// The five standard trial points: image center and the four corners.
std::vector<Vec2> cr_trial_points(int width, int height);

}  // namespace mmscan
