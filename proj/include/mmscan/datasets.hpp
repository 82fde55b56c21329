#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmscan/geometry.hpp"
#include "mmscan/kvfile.hpp"
#include "mmscan/usfreehand.hpp"

namespace mmscan {

/// poses.txt line: frame id followed by the 9 row-major rotation entries and
/// the 3 translation components.
struct PoseRecord {
    int frame_id = 0;
    RigidTransform pose;
};

std::vector<PoseRecord> read_pose_file(const std::string& path);
void write_pose_file(const std::vector<PoseRecord>& poses, const std::string& path);

/// Pose serialization shared by poses.txt and the key-value calibrations.
std::vector<double> pose_to_numbers(const RigidTransform& pose);
RigidTransform pose_from_numbers(const std::vector<double>& numbers);

/// Device calibration file (mmscan-calib-v1): intrinsics, image size,
/// optional distortion, device -> world pose and reprojection RMS per device.
void write_camera_entry(KeyValueFile& kv, const std::string& name, const CameraModel& cam,
                        double reprojection_rms = -1.0);
CameraModel read_camera_entry(const KeyValueFile& kv, const std::string& name);
void save_device_calibration(const std::map<std::string, CameraModel>& devices,
                             const std::map<std::string, double>& rms, const std::string& path);
std::map<std::string, CameraModel> load_device_calibration(const std::string& path);

/// Probe calibration file (mmscan-probecalib-v1).
void save_probe_calibration(const ProbeCalibration& cal, const Vec3& cross_point, double rms_mm,
                            const std::string& path);
struct ProbeCalibrationFile {
    ProbeCalibration calibration;
    Vec3 cross_point = Vec3::Zero();
    double rms_mm = 0.0;
};
ProbeCalibrationFile load_probe_calibration(const std::string& path);

/// Create a directory (and parents); no-op when it exists.
void make_directories(const std::string& path);

}  // namespace mmscan
