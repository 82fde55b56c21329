#include <cstdio>
#include <fstream>

#include "mmscan/datasets.hpp"
#include "mmscan/simulator.hpp"

namespace mmscan {

namespace {

std::string frame_name(const char* prefix, int index, const char* ext = ".pgm") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%03d%s", prefix, index, ext);
    return buf;
}

void write_protocol_header(const ProtocolOptions& o, const std::string& dir) {
    KeyValueFile kv;
    kv.set("format", "mmscan-protocol-v1");
    kv.set("protocol", o.name);
    kv.set("seed", static_cast<int>(o.seed));
    kv.set_vector("camera_size", {double(o.cam_width), double(o.cam_height)});
    kv.set_vector("projector_size", {double(o.proj_width), double(o.proj_height)});
    kv.set_vector("us_size", {double(o.us_width), double(o.us_height)});
    kv.set("recipe.phase_steps", o.recipe.phase_steps);
    kv.set("recipe.gray_bits", o.recipe.gray_bits);
    kv.set("recipe.pitch_px", o.recipe.pitch);
    kv.set("recipe.centerline", o.recipe.centerline ? 1 : 0);
    kv.set("noise.pixel_sigma", o.noise.pixel_sigma);
    kv.set("noise.pose_rot_sigma_deg", o.noise.pose_rot_sigma_deg);
    kv.set("noise.pose_trans_sigma_mm", o.noise.pose_trans_sigma_mm);
    kv.set("noise.speckle_sigma", o.noise.speckle_sigma);
    kv.set("noise.segmentation_sigma_px", o.noise.segmentation_sigma_px);
    kv.save(dir + "/protocol.txt");
}

void write_pattern_dir(const std::vector<PatternSet>& sets, const std::string& dir) {
    make_directories(dir);
    std::ofstream manifest(dir + "/manifest.txt");
    int index = 0;
    for (const auto& set : sets) {
        const char* kind = nullptr;
        switch (set.kind) {
            case PatternKind::PhaseShift: kind = "phase"; break;
            case PatternKind::GrayCode: kind = "gray"; break;
            case PatternKind::Centerline: kind = "centerline"; break;
            case PatternKind::White: kind = "white"; break;
            case PatternKind::Black: kind = "black"; break;
        }
        for (std::size_t n = 0; n < set.images.size(); ++n, ++index) {
            const std::string name = frame_name("pat_", index);
            write_pgm(set.images[n], dir + "/" + name);
            manifest << name << " " << kind << " " << n << " pitch=" << set.pitch_px << "\n";
        }
    }
}

void write_capture_stack(const std::vector<ImageU8>& captures, const std::string& dir,
                         const char* prefix) {
    make_directories(dir);
    for (std::size_t i = 0; i < captures.size(); ++i)
        write_pgm(captures[i], dir + "/" + frame_name(prefix, static_cast<int>(i)));
}

// SL scan of one scene pose: render the full stack from cam1 and store it
void write_sl_pose(const Scene& scene, const std::vector<PatternSet>& sets, double pitch,
                   const std::string& dir, int pose_index) {
    const FringeRender render =
        render_fringe_views(scene, scene.cam1, sets, pitch, static_cast<std::uint64_t>(pose_index) * 64);
    char sub[32];
    std::snprintf(sub, sizeof(sub), "/pose_%02d", pose_index);
    write_capture_stack(render.captures, dir + sub, "cap_");
}

void write_bscan_set(const std::vector<BScanRender>& scans, const std::string& dir,
                     const std::string& truth_dir, const std::string& truth_tag) {
    make_directories(dir + "/bscans");
    std::vector<PoseRecord> poses, true_poses;
    std::ofstream points(truth_dir + "/points" + truth_tag + ".txt");
    points << "# frame_id u_true v_true u_noisy v_noisy intersects\n";
    for (std::size_t i = 0; i < scans.size(); ++i) {
        const auto& s = scans[i];
        write_pgm(s.scan.image, dir + "/bscans/" + frame_name("frame_", static_cast<int>(i)));
        poses.push_back({static_cast<int>(i), s.scan.probe_pose});
        true_poses.push_back({static_cast<int>(i), s.true_pose});
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%zu %.10g %.10g %.10g %.10g %d\n", i, s.truth_pixel.x(),
                      s.truth_pixel.y(), s.noisy_pixel.x(), s.noisy_pixel.y(), s.intersects ? 1 : 0);
        points << buf;
    }
    write_pose_file(poses, dir + "/poses.txt");
    write_pose_file(true_poses, truth_dir + "/poses" + truth_tag + ".txt");
}

void write_marker_frames(const Scene& scene, const std::vector<RigidTransform>& target_poses,
                         const std::string& dir) {
    make_directories(dir + "/cam1_frames");
    make_directories(dir + "/cam2_frames");
    for (std::size_t i = 0; i < target_poses.size(); ++i) {
        const MarkerViews views =
            render_marker_views(scene, target_poses[i], 1.0, 0, 0xA000 + i);
        write_pgm(views.view1, dir + "/cam1_frames/" + frame_name("frame_", static_cast<int>(i)));
        write_pgm(views.view2, dir + "/cam2_frames/" + frame_name("frame_", static_cast<int>(i)));
    }
}

void run_probe_calib_protocol(const ProtocolOptions& o, const std::string& dir, Scene scene) {
    make_directories(dir + "/truth");
    write_device_calibration(scene, dir + "/truth/devices.txt");
    for (int c = 0; c < o.probe_calibrations; ++c) {
        char sub[32];
        std::snprintf(sub, sizeof(sub), "/calib_%02d", c);
        const std::string cdir = dir + sub;
        make_directories(cdir + "/truth");

        ProbeDatasetTruth truth;
        std::vector<BScanRender> scans;
        generate_probe_dataset(scene, o.probe_frames, static_cast<std::uint64_t>(c) + 1, &truth,
                               &scans, o.us_width, o.us_height);
        write_bscan_set(scans, cdir, cdir + "/truth", "");
        save_probe_calibration(truth.calibration, truth.cross_point, 0.0, cdir + "/truth/probe.txt");

        if (o.marker_frames) {
            std::vector<RigidTransform> poses;
            for (const auto& p : truth.true_poses) poses.push_back(p);
            write_marker_frames(scene, poses, cdir);
        }
    }
}

void run_sl_protocol(const ProtocolOptions& o, const std::string& dir, Scene scene) {
    const auto sets = make_pattern_stack(o.recipe, o.proj_width, o.proj_height);
    write_pattern_dir(sets, dir + "/patterns");
    make_directories(dir + "/truth");
    write_device_calibration(scene, dir + "/truth/devices.txt");

    KeyValueFile truth;
    truth.set("format", "mmscan-truth-v1");
    truth.set("protocol", o.name);

    if (o.name == "plane-5poses") {
        const auto poses = plane_pose_set();
        for (std::size_t i = 0; i < poses.size(); ++i) {
            Scene pose_scene = scene;
            PlaneSurface plane;
            plane.pose = poses[i];
            plane.half_width = 130.0;
            plane.half_height = 100.0;
            pose_scene.surfaces = {plane};
            write_sl_pose(pose_scene, sets, o.recipe.pitch, dir + "/cam1", static_cast<int>(i));
            truth.set_vector("plane." + std::to_string(i) + ".pose", pose_to_numbers(poses[i]));
        }
        truth.set("plane.count", static_cast<int>(poses.size()));
    } else if (o.name == "sphere") {
        SphereSurface sphere;
        sphere.center = Vec3(0.0, 0.0, 700.0);
        sphere.radius = 19.8;
        Scene pose_scene = scene;
        pose_scene.surfaces = {sphere};
        write_sl_pose(pose_scene, sets, o.recipe.pitch, dir + "/cam1", 0);
        truth.set("sphere.radius_mm", sphere.radius);
        truth.set_vector("sphere.center_mm",
                         {sphere.center.x(), sphere.center.y(), sphere.center.z()});
    } else if (o.name == "concentric-cylinders") {
        CylinderSurface outer;
        outer.axis_point = Vec3(0.0, 0.0, 700.0);
        outer.axis_dir = Vec3::UnitX();
        outer.radius = 30.0;
        outer.half_length = 120.0;
        Scene pose_scene = scene;
        pose_scene.surfaces = {outer};
        write_sl_pose(pose_scene, sets, o.recipe.pitch, dir + "/cam1", 0);

        RingPhantom inner;
        inner.is_sphere = false;
        inner.center_or_axis_point = outer.axis_point;
        inner.axis_dir = outer.axis_dir;
        inner.radius = 7.91;

        SweepTruth sweep_truth;
        const auto scans = generate_ring_sweep(pose_scene, inner, o.sweep_frames, -40.0, 40.0, 1,
                                               &sweep_truth, o.us_width, o.us_height);
        write_bscan_set(scans, dir, dir + "/truth", "");
        save_probe_calibration(sweep_truth.calibration, Vec3::Zero(), 0.0, dir + "/truth/probe.txt");

        truth.set("cylinder.outer_radius_mm", outer.radius);
        truth.set("cylinder.inner_radius_mm", inner.radius);
        truth.set("cylinder.d_true_mm", outer.radius - inner.radius);
        truth.set_vector("cylinder.axis_point_mm",
                         {outer.axis_point.x(), outer.axis_point.y(), outer.axis_point.z()});
        truth.set_vector("cylinder.axis_dir",
                         {outer.axis_dir.x(), outer.axis_dir.y(), outer.axis_dir.z()});
    } else if (o.name == "breast-analog") {
        SuperellipsoidSurface shell;
        shell.pose.translation = Vec3(0.0, 0.0, 755.0);
        shell.semi_axes = Vec3(85.0, 65.0, 55.0);
        shell.exponent = 2.5;
        Scene pose_scene = scene;
        pose_scene.surfaces = {shell};
        write_sl_pose(pose_scene, sets, o.recipe.pitch, dir + "/cam1", 0);

        const double sphere_radii[3] = {13.5, 7.0, 6.0};
        const Vec3 sphere_centers[3] = {shell.pose.apply(Vec3(-35.0, 10.0, -20.0)),
                                        shell.pose.apply(Vec3(20.0, -20.0, -15.0)),
                                        shell.pose.apply(Vec3(35.0, 25.0, -18.0))};
        truth.set_vector("shell.semi_axes_mm",
                         {shell.semi_axes.x(), shell.semi_axes.y(), shell.semi_axes.z()});
        truth.set("shell.exponent", shell.exponent);
        truth.set_vector("shell.pose", pose_to_numbers(shell.pose));
        truth.set("tumor.count", 3);

        std::vector<BScanRender> all;
        for (int t = 0; t < 3; ++t) {
            RingPhantom tumor;
            tumor.is_sphere = true;
            tumor.center_or_axis_point = sphere_centers[t];
            tumor.radius = sphere_radii[t];
            tumor.axis_dir = Vec3::UnitX();
            SweepTruth sweep_truth;
            const auto scans = generate_ring_sweep(pose_scene, tumor, 30, -0.7 * tumor.radius,
                                                   0.7 * tumor.radius, static_cast<std::uint64_t>(t) + 1,
                                                   &sweep_truth, o.us_width, o.us_height);
            all.insert(all.end(), scans.begin(), scans.end());
            truth.set("tumor." + std::to_string(t) + ".radius_mm", tumor.radius);
            truth.set_vector("tumor." + std::to_string(t) + ".center_mm",
                             {tumor.center_or_axis_point.x(), tumor.center_or_axis_point.y(),
                              tumor.center_or_axis_point.z()});
            if (t == 0)
                save_probe_calibration(sweep_truth.calibration, Vec3::Zero(), 0.0,
                                       dir + "/truth/probe.txt");
        }
        write_bscan_set(all, dir, dir + "/truth", "");
    }
    truth.save(dir + "/truth/scene.txt");
}

void run_calib_board_protocol(const ProtocolOptions& o, const std::string& dir, Scene scene) {
    CalibrationBoard board;
    make_directories(dir + "/truth");
    write_device_calibration(scene, dir + "/truth/devices.txt");

    const auto poses = board_pose_sweep(board, o.calib_poses, o.seed);
    const auto sets_v = make_pattern_stack(
        {o.recipe.phase_steps, o.recipe.gray_bits, o.recipe.pitch, false}, o.proj_width,
        o.proj_height, FringeOrientation::Vertical);
    const auto sets_h = make_pattern_stack(
        {o.recipe.phase_steps, o.recipe.gray_bits, o.recipe.pitch, false}, o.proj_width,
        o.proj_height, FringeOrientation::Horizontal);

    KeyValueFile truth;
    truth.set("format", "mmscan-truth-v1");
    truth.set("protocol", o.name);
    truth.set("board.rows", board.rows);
    truth.set("board.cols", board.cols);
    truth.set("board.spacing_mm", board.spacing);
    truth.set("board.circle_radius_mm", board.circle_radius);
    truth.set("poses", o.calib_poses);

    for (int v = 0; v < o.calib_poses; ++v) {
        char sub[32];
        std::snprintf(sub, sizeof(sub), "/pose_%02d", v);
        const BoardViews views = render_board_views(scene, board, poses[v], 0xC000 + v);
        make_directories(dir + "/board" + sub);
        write_pgm(views.view1, dir + "/board" + sub + "/cam1.pgm");
        write_pgm(views.view2, dir + "/board" + sub + "/cam2.pgm");

        auto store = [&truth, v](const char* cam, const ViewPoints& pts) {
            std::vector<double> flat;
            for (const auto& [j, p] : pts) {
                flat.push_back(j);
                flat.push_back(p.x());
                flat.push_back(p.y());
            }
            truth.set_vector("proj." + std::to_string(v) + "." + cam, flat);
        };
        store("cam1", views.truth_cam1);
        store("cam2", views.truth_cam2);

        // fringe stacks on the board, captured by cam1
        Scene board_scene = scene;
        PlaneSurface plane;
        plane.pose = poses[v];
        plane.albedo = 0.9;
        CircleTexture tex;
        tex.radius = board.circle_radius;
        for (const auto& g : board.grid()) tex.centers.emplace_back(g.x(), g.y());
        tex.circle_albedo = 0.1;
        plane.texture = tex;
        board_scene.surfaces = {plane};

        const auto rv = render_fringe_views(board_scene, scene.cam1, sets_v, o.recipe.pitch,
                                            0xD000 + static_cast<std::uint64_t>(v) * 256);
        const auto rh = render_fringe_views(board_scene, scene.cam1, sets_h, o.recipe.pitch,
                                            0xE000 + static_cast<std::uint64_t>(v) * 256);
        write_capture_stack(rv.captures, dir + "/fringes" + sub, "cap_v_");
        write_capture_stack(rh.captures, dir + "/fringes" + sub, "cap_h_");
    }
    truth.save(dir + "/truth/board_truth.txt");
}

}  // namespace

void write_device_calibration(const Scene& scene, const std::string& path,
                              const std::vector<double>& reprojection_rms) {
    std::map<std::string, CameraModel> devices{
        {"cam1", scene.cam1}, {"cam2", scene.cam2}, {"projector", scene.projector}};
    std::map<std::string, double> rms;
    if (reprojection_rms.size() == 3) {
        rms["cam1"] = reprojection_rms[0];
        rms["cam2"] = reprojection_rms[1];
        rms["projector"] = reprojection_rms[2];
    }
    save_device_calibration(devices, rms, path);
}

void run_protocol(const ProtocolOptions& options, const std::string& out_dir) {
    static const char* known[] = {"probe-calib-5x30", "plane-5poses",        "sphere",
                                  "concentric-cylinders", "breast-analog",   "calib-board"};
    bool ok = false;
    for (const char* name : known) ok = ok || options.name == name;
    if (!ok) throw InvalidArgument("unknown protocol: " + options.name);

    make_directories(out_dir);
    write_protocol_header(options, out_dir);

    Scene scene = make_default_scene(options.cam_width, options.cam_height, options.proj_width,
                                     options.proj_height);
    scene.noise = options.noise;
    scene.seed = options.seed;

    if (options.name == "probe-calib-5x30") {
        run_probe_calib_protocol(options, out_dir, scene);
    } else if (options.name == "calib-board") {
        run_calib_board_protocol(options, out_dir, scene);
    } else {
        run_sl_protocol(options, out_dir, scene);
    }
}

}  // namespace mmscan
