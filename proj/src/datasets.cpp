#include "mmscan/datasets.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mmscan {

std::vector<double> pose_to_numbers(const RigidTransform& pose) {
    std::vector<double> n(12);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) n[r * 3 + c] = pose.rotation(r, c);
    for (int i = 0; i < 3; ++i) n[9 + i] = pose.translation(i);
    return n;
}

RigidTransform pose_from_numbers(const std::vector<double>& numbers) {
    if (numbers.size() != 12) throw IoError("pose needs 12 numbers (9 rotation + 3 translation)");
    RigidTransform pose;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) pose.rotation(r, c) = numbers[r * 3 + c];
    for (int i = 0; i < 3; ++i) pose.translation(i) = numbers[9 + i];
    if (pose.orthonormality_error() > 1e-6) throw IoError("pose rotation is not orthonormal");
    return pose;
}

std::vector<PoseRecord> read_pose_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<PoseRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream is(line);
        PoseRecord rec;
        if (!(is >> rec.frame_id)) continue;
        std::vector<double> numbers(12);
        for (double& v : numbers)
            if (!(is >> v)) throw IoError(path + ": truncated pose row");
        rec.pose = pose_from_numbers(numbers);
        out.push_back(rec);
    }
    return out;
}

void write_pose_file(const std::vector<PoseRecord>& poses, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot create " + path);
    out << "# frame_id r11 r12 r13 r21 r22 r23 r31 r32 r33 tx ty tz\n";
    char buf[64];
    for (const auto& rec : poses) {
        out << rec.frame_id;
        for (double v : pose_to_numbers(rec.pose)) {
            std::snprintf(buf, sizeof(buf), " %.17g", v);
            out << buf;
        }
        out << "\n";
    }
    if (!out) throw IoError("short write to " + path);
}

void write_camera_entry(KeyValueFile& kv, const std::string& name, const CameraModel& cam,
                        double reprojection_rms) {
    const std::string p = "device." + name + ".";
    kv.set_vector(p + "image_size", {static_cast<double>(cam.width), static_cast<double>(cam.height)});
    kv.set_vector(p + "intrinsics", {cam.fu, cam.fv, cam.cu, cam.cv});
    if (cam.distortion) kv.set_vector(p + "distortion", {(*cam.distortion)[0], (*cam.distortion)[1]});
    kv.set_vector(p + "pose", pose_to_numbers(cam.pose));
    if (reprojection_rms >= 0.0) kv.set(p + "reprojection_rms_px", reprojection_rms);
}

CameraModel read_camera_entry(const KeyValueFile& kv, const std::string& name) {
    const std::string p = "device." + name + ".";
    CameraModel cam;
    const auto size = kv.get_vector(p + "image_size");
    const auto intr = kv.get_vector(p + "intrinsics");
    if (size.size() != 2 || intr.size() != 4) throw IoError("malformed camera entry " + name);
    cam.width = static_cast<int>(size[0]);
    cam.height = static_cast<int>(size[1]);
    cam.fu = intr[0];
    cam.fv = intr[1];
    cam.cu = intr[2];
    cam.cv = intr[3];
    if (kv.has(p + "distortion")) {
        const auto d = kv.get_vector(p + "distortion");
        if (d.size() != 2) throw IoError("malformed distortion entry " + name);
        cam.distortion = std::array<double, 2>{d[0], d[1]};
    }
    cam.pose = pose_from_numbers(kv.get_vector(p + "pose"));
    cam.validate();
    return cam;
}

void save_device_calibration(const std::map<std::string, CameraModel>& devices,
                             const std::map<std::string, double>& rms, const std::string& path) {
    KeyValueFile kv;
    kv.set("format", "mmscan-calib-v1");
    std::string names;
    for (const auto& [name, cam] : devices) {
        if (!names.empty()) names += " ";
        names += name;
    }
    kv.set("devices", names);
    for (const auto& [name, cam] : devices) {
        const auto it = rms.find(name);
        write_camera_entry(kv, name, cam, it == rms.end() ? -1.0 : it->second);
    }
    kv.save(path);
}

std::map<std::string, CameraModel> load_device_calibration(const std::string& path) {
    const KeyValueFile kv = KeyValueFile::load(path);
    if (kv.get_or("format", "") != "mmscan-calib-v1")
        throw IoError(path + " is not an mmscan calibration file");
    std::istringstream names(kv.get("devices"));
    std::map<std::string, CameraModel> out;
    std::string name;
    while (names >> name) out[name] = read_camera_entry(kv, name);
    return out;
}

void save_probe_calibration(const ProbeCalibration& cal, const Vec3& cross_point, double rms_mm,
                            const std::string& path) {
    KeyValueFile kv;
    kv.set("format", "mmscan-probecalib-v1");
    kv.set("probe.sx_mm_per_px", cal.sx);
    kv.set("probe.sy_mm_per_px", cal.sy);
    kv.set_vector("probe.t_T_I", pose_to_numbers(cal.t_T_I));
    kv.set_vector("probe.cross_point_world_mm", {cross_point.x(), cross_point.y(), cross_point.z()});
    kv.set("probe.rms_mm", rms_mm);
    kv.save(path);
}

ProbeCalibrationFile load_probe_calibration(const std::string& path) {
    const KeyValueFile kv = KeyValueFile::load(path);
    if (kv.get_or("format", "") != "mmscan-probecalib-v1")
        throw IoError(path + " is not an mmscan probe calibration file");
    ProbeCalibrationFile out;
    out.calibration.sx = kv.get_double("probe.sx_mm_per_px");
    out.calibration.sy = kv.get_double("probe.sy_mm_per_px");
    out.calibration.t_T_I = pose_from_numbers(kv.get_vector("probe.t_T_I"));
    const auto pf = kv.get_vector("probe.cross_point_world_mm");
    if (pf.size() == 3) out.cross_point = Vec3(pf[0], pf[1], pf[2]);
    out.rms_mm = kv.get_double_or("probe.rms_mm", 0.0);
    out.calibration.validate();
    return out;
}

void make_directories(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

}  // namespace mmscan
