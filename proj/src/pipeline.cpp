#include "mmscan/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "mmscan/calib.hpp"
#include "mmscan/datasets.hpp"
#include "mmscan/geomfit.hpp"
#include "mmscan/markerpose.hpp"

namespace fs = std::filesystem;

namespace mmscan {

namespace {

std::string pose_dir_name(const std::string& base, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "/pose_%02d", index);
    return base + buf;
}

std::vector<std::string> sorted_files(const std::string& dir, const std::string& prefix) {
    std::vector<std::string> names;
    if (!fs::exists(dir)) return names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind(prefix, 0) == 0 && name.size() > 4 &&
            name.substr(name.size() - 4) == ".pgm")
            names.push_back(entry.path().string());
    }
    std::sort(names.begin(), names.end());
    return names;
}

void stamp(KeyValueFile& kv, bool deterministic) {
    if (deterministic) return;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    kv.set("generated_at", static_cast<int>(now));
}

}  // namespace

SlRecipe load_recipe(const std::string& dataset_dir) {
    const KeyValueFile kv = KeyValueFile::load(dataset_dir + "/protocol.txt");
    SlRecipe recipe;
    recipe.phase_steps = kv.get_int_or("recipe.phase_steps", recipe.phase_steps);
    recipe.gray_bits = kv.get_int_or("recipe.gray_bits", recipe.gray_bits);
    recipe.pitch = kv.get_double_or("recipe.pitch_px", recipe.pitch);
    recipe.centerline = kv.get_int_or("recipe.centerline", recipe.centerline ? 1 : 0) != 0;
    return recipe;
}

CaptureStack load_capture_stack(const std::string& pose_dir, const SlRecipe& recipe,
                                const std::string& prefix) {
    const auto files = sorted_files(pose_dir, prefix);
    const std::size_t expected =
        recipe.phase_steps + recipe.gray_bits + 2 + (recipe.centerline ? 1 : 0);
    if (files.size() != expected)
        throw IoError(pose_dir + ": expected " + std::to_string(expected) + " captures, found " +
                      std::to_string(files.size()));

    CaptureStack stack;
    std::size_t i = 0;
    for (int n = 0; n < recipe.phase_steps; ++n) stack.phase.push_back(read_pgm(files[i++]));
    for (int b = 0; b < recipe.gray_bits; ++b) stack.gray.push_back(read_pgm(files[i++]));
    stack.white = read_pgm(files[i++]);
    stack.black = read_pgm(files[i++]);
    if (recipe.centerline) stack.centerline = read_pgm(files[i++]);
    return stack;
}

void cmd_simulate(const ProtocolOptions& options, const std::string& out_dir) {
    run_protocol(options, out_dir);
}

namespace {

// match detected subpixel centers to reference projections (nearest within
// a gate); the board topology itself is known, so identity comes from the
// reference, geometry from the detection
ViewPoints match_detections(const ViewPoints& reference, const std::vector<EllipseFit>& detections,
                            double gate_px = 4.0) {
    ViewPoints out;
    for (const auto& [j, ref] : reference) {
        double best = gate_px;
        const EllipseFit* hit = nullptr;
        for (const auto& det : detections) {
            const double d = (det.center - ref).norm();
            if (d < best) {
                best = d;
                hit = &det;
            }
        }
        if (hit) out.emplace_back(j, hit->center);
    }
    return out;
}

std::vector<EllipseFit> detect_board_centers(const ImageU8& image) {
    std::vector<EllipseFit> fits;
    for (const auto& blob : detect_blobs(image)) {
        const auto fit = refine_center(image, blob);
        if (fit && fit->residual_px < 0.5) fits.push_back(*fit);
    }
    return fits;
}

ViewPoints load_truth_points(const KeyValueFile& kv, int pose, const char* cam) {
    ViewPoints out;
    const auto flat = kv.get_vector("proj." + std::to_string(pose) + "." + cam);
    for (std::size_t i = 0; i + 2 < flat.size(); i += 3)
        out.emplace_back(static_cast<int>(flat[i]), Vec2(flat[i + 1], flat[i + 2]));
    return out;
}

void calibrate_probe_dataset(const std::string& dataset_dir, const std::string& out_path,
                             bool deterministic) {
    const auto poses = read_pose_file(dataset_dir + "/poses.txt");
    CalibrationDataset data;
    for (const auto& rec : poses) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "/bscans/frame_%03d.pgm", rec.frame_id);
        const ImageU8 img = read_pgm(dataset_dir + buf);
        if (data.observations.empty()) {
            data.image_width = img.width();
            data.image_height = img.height();
        }
        CalibrationObservation obs;
        obs.probe_pose = rec.pose;
        obs.pixel = segment_cross_point(img);
        data.observations.push_back(obs);
    }

    const ProbeSolveResult result = solve_calibration(data);
    save_probe_calibration(result.calibration, result.phantom.cross_point_world, result.rms_mm,
                           out_path);
    KeyValueFile kv = KeyValueFile::load(out_path);
    kv.set("report.frames", static_cast<int>(data.observations.size()));
    kv.set("report.rms_mm", result.rms_mm);
    for (std::size_t i = 0; i < result.per_frame_residual_mm.size(); ++i)
        kv.set("report.residual_mm." + std::to_string(i), result.per_frame_residual_mm[i]);
    stamp(kv, deterministic);
    kv.save(out_path);
}

void calibrate_board_dataset(const std::string& dataset_dir, CalibrateMode mode,
                             const std::string& out_path, bool deterministic) {
    const KeyValueFile proto = KeyValueFile::load(dataset_dir + "/protocol.txt");
    const KeyValueFile truth = KeyValueFile::load(dataset_dir + "/truth/board_truth.txt");
    const int num_poses = truth.get_int("poses");
    const SlRecipe recipe = load_recipe(dataset_dir);
    const auto proj_size = proto.get_vector("projector_size");

    CalibrationBoard board;
    board.rows = truth.get_int("board.rows");
    board.cols = truth.get_int("board.cols");
    board.spacing = truth.get_double("board.spacing_mm");
    board.circle_radius = truth.get_double("board.circle_radius_mm");
    const auto grid = board.grid();

    std::vector<ViewPoints> views1(num_poses), views2(num_poses), views_proj(num_poses);
    int cam_w = 0, cam_h = 0;
    for (int v = 0; v < num_poses; ++v) {
        const std::string pose_dir = pose_dir_name(dataset_dir + "/board", v);
        const ImageU8 img1 = read_pgm(pose_dir + "/cam1.pgm");
        cam_w = img1.width();
        cam_h = img1.height();
        views1[v] = match_detections(load_truth_points(truth, v, "cam1"), detect_board_centers(img1));

        if (mode == CalibrateMode::Stereo) {
            const ImageU8 img2 = read_pgm(pose_dir + "/cam2.pgm");
            views2[v] =
                match_detections(load_truth_points(truth, v, "cam2"), detect_board_centers(img2));
        } else {
            // decode both fringe orientations and lift centers to projector pixels
            const std::string fringe_dir = pose_dir_name(dataset_dir + "/fringes", v);
            const CaptureStack sv = load_capture_stack(fringe_dir, recipe, "cap_v_");
            const CaptureStack sh = load_capture_stack(fringe_dir, recipe, "cap_h_");
            const PhaseMap abs_v =
                unwrap_absolute(wrapped_phase(sv.phase), decode_gray(sv.gray, sv.white, sv.black));
            const PhaseMap abs_h =
                unwrap_absolute(wrapped_phase(sh.phase), decode_gray(sh.gray, sh.white, sh.black));
            views_proj[v] =
                projector_correspondences(views1[v], abs_v, abs_h, recipe.pitch, recipe.pitch);
            if (views_proj[v].size() < 4) views_proj[v].clear();  // drop the pose
        }
    }

    KeyValueFile kv;
    kv.set("format", "mmscan-calib-v1");
    if (mode == CalibrateMode::Stereo) {
        const JointCalibration joint =
            calibrate_pair(grid, views1, views2, cam_w, cam_h, cam_w, cam_h);
        kv.set("devices", "cam1 cam2");
        write_camera_entry(kv, "cam1", joint.devices[0], joint.device_rms[0]);
        write_camera_entry(kv, "cam2", joint.devices[1], joint.device_rms[1]);
        kv.set("report.total_rms_px", joint.total_rms);
        for (int v = 0; v < num_poses; ++v) {
            kv.set_vector("report.view_rms_px." + std::to_string(v),
                          {joint.per_view_rms[0][v], joint.per_view_rms[1][v]});
        }
    } else {
        const JointCalibration joint =
            calibrate_pair(grid, views1, views_proj, cam_w, cam_h, static_cast<int>(proj_size[0]),
                           static_cast<int>(proj_size[1]));
        kv.set("devices", "cam1 projector");
        write_camera_entry(kv, "cam1", joint.devices[0], joint.device_rms[0]);
        write_camera_entry(kv, "projector", joint.devices[1], joint.device_rms[1]);
        kv.set("report.total_rms_px", joint.total_rms);
    }
    stamp(kv, deterministic);
    kv.save(out_path);
}

}  // namespace

void cmd_calibrate(const std::string& dataset_dir, CalibrateMode mode, const std::string& out_path,
                   bool deterministic) {
    if (mode == CalibrateMode::Probe) {
        calibrate_probe_dataset(dataset_dir, out_path, deterministic);
    } else {
        calibrate_board_dataset(dataset_dir, mode, out_path, deterministic);
    }
}

ReconstructReport cmd_reconstruct(const std::string& dataset_dir, const std::string& calib_path,
                                  int pose_index, UnwrapMethod method, const std::string& out_ply,
                                  bool binary_ply) {
    const SlRecipe recipe = load_recipe(dataset_dir);
    const auto devices = load_device_calibration(calib_path);
    if (!devices.count("cam1") || !devices.count("projector"))
        throw IoError(calib_path + " lacks cam1/projector entries needed for reconstruction");
    const CameraModel& cam = devices.at("cam1");
    const CameraModel& projector = devices.at("projector");

    const CaptureStack stack =
        load_capture_stack(pose_dir_name(dataset_dir + "/cam1", pose_index), recipe);

    const PhaseMap wrapped = wrapped_phase(stack.phase);
    PhaseMap absolute;
    if (method == UnwrapMethod::GrayCode) {
        absolute = unwrap_absolute(wrapped, decode_gray(stack.gray, stack.white, stack.black));
    } else {
        if (stack.centerline.empty())
            throw InvalidArgument("dataset recipe has no centerline frame");
        const double center_phase =
            kTwoPi * centerline_coordinate(projector.width) / recipe.pitch;
        absolute = unwrap_centerline(wrapped, stack.centerline, center_phase);
    }

    const PointCloud cloud = reconstruct(absolute, cam, projector, recipe.pitch);
    write_ply(cloud, out_ply, binary_ply);

    ReconstructReport report;
    report.point_count = cloud.size();
    if (cloud.empty()) {
        std::cerr << "warning: reconstruction produced an empty cloud (no valid phase)\n";
    } else {
        const auto [lo, hi] = cloud.bounding_box();
        report.bbox_min = lo;
        report.bbox_max = hi;
    }
    return report;
}

void cmd_track(const std::string& dataset_dir, const std::string& calib_path,
               const std::string& out_poses, const MarkerGeometry& marker) {
    const auto devices = load_device_calibration(calib_path);
    if (!devices.count("cam1") || !devices.count("cam2"))
        throw IoError(calib_path + " lacks cam1/cam2 entries needed for tracking");

    const auto frames1 = sorted_files(dataset_dir + "/cam1_frames", "frame_");
    const auto frames2 = sorted_files(dataset_dir + "/cam2_frames", "frame_");
    if (frames1.empty() || frames1.size() != frames2.size())
        throw IoError(dataset_dir + ": missing or mismatched stereo frame directories");

    ClassicalCenterDetector detector;
    std::vector<PoseRecord> poses;
    for (std::size_t i = 0; i < frames1.size(); ++i) {
        try {
            const TargetPose pose = track_target(detector, read_pgm(frames1[i]), read_pgm(frames2[i]),
                                                 devices.at("cam1"), devices.at("cam2"), marker);
            poses.push_back({static_cast<int>(i), pose.pose});
        } catch (const DegenerateInput& e) {
            std::cerr << "warning: frame " << i << " skipped (" << e.what() << ")\n";
        }
    }
    if (poses.empty()) throw DegenerateInput("target tracked in no frame");
    write_pose_file(poses, out_poses);
}

FuseReport cmd_fuse(const std::vector<std::string>& sl_ply_paths, const std::string& us_dataset_dir,
                    const std::string& probe_calib_path, const std::string& out_ply,
                    bool binary_ply) {
    PointCloud fused;
    fused.frame = "W";
    for (const auto& path : sl_ply_paths) {
        const PointCloud cloud = read_ply(path);
        if (cloud.frame != "W")
            throw InvalidArgument(path + ": frame tag '" + cloud.frame +
                                  "' does not match the world frame");
        for (const auto& p : cloud.points) fused.append(p, SourceTag::SL);
    }

    FuseReport report;
    report.sl_points = fused.size();

    const ProbeCalibrationFile probe = load_probe_calibration(probe_calib_path);
    std::vector<PoseRecord> poses;
    if (fs::exists(us_dataset_dir + "/poses.txt"))
        poses = read_pose_file(us_dataset_dir + "/poses.txt");

    for (const auto& rec : poses) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "/bscans/frame_%03d.pgm", rec.frame_id);
        const std::string path = us_dataset_dir + buf;
        if (!fs::exists(path)) continue;
        const ImageU8 img = read_pgm(path);
        for (const auto& px : segment_echo_peaks(img)) {
            fused.append(map_pixel_to_world(probe.calibration, rec.pose, px), SourceTag::US);
            ++report.us_points;
        }
    }
    if (report.us_points == 0)
        std::cerr << "warning: no US points mapped; exporting SL-only result\n";

    write_ply(fused, out_ply, binary_ply);
    return report;
}

namespace {

PointCloud filter_by_tag(const PointCloud& cloud, SourceTag tag) {
    PointCloud out;
    out.frame = cloud.frame;
    for (std::size_t i = 0; i < cloud.points.size(); ++i)
        if (i < cloud.tags.size() && cloud.tags[i] == tag) out.append(cloud.points[i]);
    return out;
}

void evaluate_planes(const std::vector<std::string>& inputs, const KeyValueFile& truth,
                     KeyValueFile& report) {
    (void)truth;
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const PointCloud cloud = read_ply(inputs[i]);
        const auto fit = fit_plane(cloud);
        const auto [lo, hi] = cloud.bounding_box();
        const std::string p = "plane." + std::to_string(i) + ".";
        report.set(p + "rms_mm", fit.rms);
        report.set_vector(p + "x_range_mm", {lo.x(), hi.x()});
        report.set_vector(p + "y_range_mm", {lo.y(), hi.y()});
        report.set_vector(p + "z_range_mm", {lo.z(), hi.z()});
        worst = std::max(worst, fit.rms);
    }
    report.set("plane.worst_rms_mm", worst);
}

void evaluate_sphere(const std::vector<std::string>& inputs, const KeyValueFile& truth,
                     KeyValueFile& report) {
    const PointCloud cloud = read_ply(inputs.at(0));
    const auto fit = fit_sphere(cloud);
    const double r_true = truth.get_double("sphere.radius_mm");
    report.set("sphere.radius_mm", fit.model.radius);
    report.set("sphere.radius_true_mm", r_true);
    report.set("sphere.radius_error_mm", std::abs(fit.model.radius - r_true));
    report.set("sphere.rms_mm", fit.rms);
}

void evaluate_cylinders(const std::vector<std::string>& inputs, const KeyValueFile& truth,
                        KeyValueFile& report) {
    const PointCloud fused = read_ply(inputs.at(0));
    const PointCloud sl = filter_by_tag(fused, SourceTag::SL);
    const PointCloud us = filter_by_tag(fused, SourceTag::US);
    if (sl.empty() || us.empty())
        throw DegenerateInput("fused cloud lacks one of the modalities");

    const auto outer = fit_cylinder(sl);
    const auto inner = fit_cylinder(us);
    const CylinderGap gap = cylinder_gap(inner.model, outer.model);
    const double d_true = truth.get_double("cylinder.d_true_mm");

    report.set("cylinder.outer_radius_mm", outer.model.radius);
    report.set("cylinder.outer_rms_mm", outer.rms);
    report.set("cylinder.inner_radius_mm", inner.model.radius);
    report.set("cylinder.inner_rms_mm", inner.rms);
    report.set("cylinder.d_mm", gap.d);
    report.set("cylinder.d_true_mm", d_true);
    report.set("cylinder.d_error_mm", std::abs(gap.d - d_true));
    report.set("cylinder.axis_angle_deg", gap.axis_angle_deg);
    report.set("cylinder.axis_offset_mm", gap.axis_offset);
}

void evaluate_breast(const std::vector<std::string>& inputs, const KeyValueFile& truth,
                     KeyValueFile& report) {
    const PointCloud fused = read_ply(inputs.at(0));
    const PointCloud us = filter_by_tag(fused, SourceTag::US);
    if (us.empty()) throw DegenerateInput("fused cloud has no US points");

    SuperellipsoidSurface shell;
    const auto semi = truth.get_vector("shell.semi_axes_mm");
    shell.semi_axes = Vec3(semi.at(0), semi.at(1), semi.at(2));
    shell.exponent = truth.get_double("shell.exponent");
    shell.pose = pose_from_numbers(truth.get_vector("shell.pose"));

    std::size_t inside = 0;
    for (const auto& p : us.points)
        if (shell.implicit(p) < 0.0) ++inside;
    report.set("breast.us_points", static_cast<int>(us.size()));
    report.set("breast.us_points_inside_shell", static_cast<int>(inside));
    report.set("breast.containment_fraction",
               static_cast<double>(inside) / static_cast<double>(us.size()));
}

void evaluate_probe(const std::vector<std::string>& inputs, const KeyValueFile& truth,
                    KeyValueFile& report) {
    std::vector<ProbeCalibration> cals;
    for (const auto& path : inputs) cals.push_back(load_probe_calibration(path).calibration);
    if (cals.size() < 2) throw InvalidArgument("CR evaluation needs >= 2 calibrations");

    // trial points follow the truth probe's image geometry when recorded
    const int w = static_cast<int>(truth.get_double_or("us.width_px", 321));
    const int h = static_cast<int>(truth.get_double_or("us.height_px", 408));
    const auto trials = cr_trial_points(w, h);
    const char* names[5] = {"center", "corner00", "corner10", "corner01", "corner11"};
    double mean1 = 0.0, mean2 = 0.0;
    for (int i = 0; i < 5; ++i) {
        const double c1 = cr1(cals, trials[i]);
        const double c2 = cr2(cals, trials[i]);
        report.set(std::string("cr1.") + names[i] + "_mm", c1);
        report.set(std::string("cr2.") + names[i] + "_mm", c2);
        mean1 += c1 / 5.0;
        mean2 += c2 / 5.0;
    }
    report.set("cr1.mean_mm", mean1);
    report.set("cr2.mean_mm", mean2);
}

}  // namespace

void cmd_evaluate(const std::vector<std::string>& inputs, const std::string& truth_path,
                  const std::string& out_report, bool deterministic) {
    const KeyValueFile truth = KeyValueFile::load(truth_path);
    KeyValueFile report;
    report.set("format", "mmscan-report-v1");

    const std::string format = truth.get_or("format", "");
    if (format == "mmscan-probecalib-v1") {
        report.set("protocol", "probe-calib");
        evaluate_probe(inputs, truth, report);
    } else if (format == "mmscan-truth-v1") {
        const std::string protocol = truth.get("protocol");
        report.set("protocol", protocol);
        if (protocol == "plane-5poses") {
            evaluate_planes(inputs, truth, report);
        } else if (protocol == "sphere") {
            evaluate_sphere(inputs, truth, report);
        } else if (protocol == "concentric-cylinders") {
            evaluate_cylinders(inputs, truth, report);
        } else if (protocol == "breast-analog") {
            evaluate_breast(inputs, truth, report);
        } else {
            throw InvalidArgument("no evaluation defined for protocol " + protocol);
        }
    } else {
        throw IoError(truth_path + ": unrecognized truth file format");
    }
    stamp(report, deterministic);
    report.save(out_report);
}

}  // namespace mmscan
