// mmscan: simulate | calibrate | reconstruct | track | fuse | evaluate
//
// Exit codes: 0 success, 1 usage/IO failure, 2 degenerate input,
// 3 solver non-convergence.

#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "mmscan/datasets.hpp"
#include "mmscan/pipeline.hpp"

namespace {

mmscan::ProtocolOptions options_from_config(const std::string& config_path) {
    mmscan::ProtocolOptions o;
    if (config_path.empty()) return o;
    const mmscan::KeyValueFile kv = mmscan::KeyValueFile::load(config_path);
    o.cam_width = kv.get_int_or("camera.width", o.cam_width);
    o.cam_height = kv.get_int_or("camera.height", o.cam_height);
    o.proj_width = kv.get_int_or("projector.width", o.proj_width);
    o.proj_height = kv.get_int_or("projector.height", o.proj_height);
    o.us_width = kv.get_int_or("us.width", o.us_width);
    o.us_height = kv.get_int_or("us.height", o.us_height);
    o.recipe.phase_steps = kv.get_int_or("recipe.phase_steps", o.recipe.phase_steps);
    o.recipe.gray_bits = kv.get_int_or("recipe.gray_bits", o.recipe.gray_bits);
    o.recipe.pitch = kv.get_double_or("recipe.pitch_px", o.recipe.pitch);
    o.recipe.centerline = kv.get_int_or("recipe.centerline", o.recipe.centerline ? 1 : 0) != 0;
    o.noise.pixel_sigma = kv.get_double_or("noise.pixel_sigma", o.noise.pixel_sigma);
    o.noise.pose_rot_sigma_deg = kv.get_double_or("noise.pose_rot_sigma_deg", o.noise.pose_rot_sigma_deg);
    o.noise.pose_trans_sigma_mm =
        kv.get_double_or("noise.pose_trans_sigma_mm", o.noise.pose_trans_sigma_mm);
    o.noise.speckle_sigma = kv.get_double_or("noise.speckle_sigma", o.noise.speckle_sigma);
    o.noise.segmentation_sigma_px =
        kv.get_double_or("noise.segmentation_sigma_px", o.noise.segmentation_sigma_px);
    o.calib_poses = kv.get_int_or("calib.poses", o.calib_poses);
    o.probe_calibrations = kv.get_int_or("probe.calibrations", o.probe_calibrations);
    o.probe_frames = kv.get_int_or("probe.frames", o.probe_frames);
    o.sweep_frames = kv.get_int_or("sweep.frames", o.sweep_frames);
    return o;
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal structured-light + freehand-US toolkit"};
    app.require_subcommand(1);

    // --- simulate ---
    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    std::string sim_protocol, sim_out, sim_config;
    std::uint64_t sim_seed = 1;
    bool sim_marker_frames = false;
    double sim_pixel_sigma = -1.0;
    sim->add_option("--protocol", sim_protocol,
                    "probe-calib-5x30 | plane-5poses | sphere | concentric-cylinders | "
                    "breast-analog | calib-board")
        ->required();
    sim->add_option("--out", sim_out, "output dataset directory")->required();
    sim->add_option("--seed", sim_seed, "deterministic seed");
    sim->add_option("--config", sim_config, "key-value config file");
    sim->add_option("--noise-pixel", sim_pixel_sigma, "additive pixel noise sigma (gray levels)");
    sim->add_flag("--marker-frames", sim_marker_frames, "render stereo tracking frames");

    // --- calibrate ---
    auto* cal = app.add_subcommand("calibrate", "calibrate devices from a dataset");
    std::string cal_dataset, cal_mode, cal_out;
    bool cal_det = false;
    cal->add_option("--dataset", cal_dataset, "dataset directory")->required();
    cal->add_option("--mode", cal_mode, "stereo | projector | probe")->required();
    cal->add_option("--out", cal_out, "output calibration file")->required();
    cal->add_flag("--deterministic", cal_det, "suppress timestamps in the report");

    // --- reconstruct ---
    auto* rec = app.add_subcommand("reconstruct", "decode one SL pose into a point cloud");
    std::string rec_dataset, rec_calib, rec_out, rec_method = "graycode";
    int rec_pose = 0;
    bool rec_binary = false;
    rec->add_option("--dataset", rec_dataset)->required();
    rec->add_option("--calib", rec_calib, "device calibration file")->required();
    rec->add_option("--out", rec_out, "output PLY")->required();
    rec->add_option("--pose", rec_pose, "pose index (default 0)");
    rec->add_option("--method", rec_method, "graycode | centerline");
    rec->add_flag("--binary", rec_binary, "binary PLY");

    // --- track ---
    auto* trk = app.add_subcommand("track", "estimate target poses from stereo frames");
    std::string trk_dataset, trk_calib, trk_out;
    trk->add_option("--dataset", trk_dataset, "directory with cam1_frames/ cam2_frames/")->required();
    trk->add_option("--calib", trk_calib, "stereo calibration file")->required();
    trk->add_option("--out", trk_out, "output poses file")->required();

    // --- fuse ---
    auto* fus = app.add_subcommand("fuse", "merge SL cloud(s) with mapped B-scan points");
    std::string fus_sl, fus_dataset, fus_probe, fus_out;
    bool fus_binary = false;
    fus->add_option("--sl", fus_sl, "comma-separated SL cloud PLY paths")->required();
    fus->add_option("--dataset", fus_dataset, "US dataset directory (bscans/ + poses.txt)")->required();
    fus->add_option("--probe-calib", fus_probe, "probe calibration file")->required();
    fus->add_option("--out", fus_out, "output fused PLY")->required();
    fus->add_flag("--binary", fus_binary, "binary PLY");

    // --- evaluate ---
    auto* eva = app.add_subcommand("evaluate", "compute metrics against a truth file");
    std::string eva_inputs, eva_truth, eva_out;
    bool eva_det = false;
    eva->add_option("--input", eva_inputs, "comma-separated result files")->required();
    eva->add_option("--truth", eva_truth, "truth file (scene.txt or probe truth)")->required();
    eva->add_option("--out", eva_out, "output report file")->required();
    eva->add_flag("--deterministic", eva_det, "suppress timestamps in the report");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            mmscan::ProtocolOptions o = options_from_config(sim_config);
            o.name = sim_protocol;
            o.seed = sim_seed;
            o.marker_frames = sim_marker_frames;
            if (sim_pixel_sigma >= 0.0) o.noise.pixel_sigma = sim_pixel_sigma;
            mmscan::cmd_simulate(o, sim_out);
            std::cout << "dataset written to " << sim_out << "\n";
        } else if (cal->parsed()) {
            mmscan::CalibrateMode mode;
            if (cal_mode == "stereo") mode = mmscan::CalibrateMode::Stereo;
            else if (cal_mode == "projector") mode = mmscan::CalibrateMode::Projector;
            else if (cal_mode == "probe") mode = mmscan::CalibrateMode::Probe;
            else throw mmscan::InvalidArgument("unknown calibrate mode: " + cal_mode);
            mmscan::cmd_calibrate(cal_dataset, mode, cal_out, cal_det);
            const mmscan::KeyValueFile kv = mmscan::KeyValueFile::load(cal_out);
            if (kv.has("report.total_rms_px"))
                std::cout << "reprojection RMS: " << kv.get("report.total_rms_px") << " px\n";
            if (kv.has("report.rms_mm"))
                std::cout << "calibration RMS: " << kv.get("report.rms_mm") << " mm\n";
        } else if (rec->parsed()) {
            const mmscan::UnwrapMethod method = rec_method == "centerline"
                                                    ? mmscan::UnwrapMethod::Centerline
                                                    : mmscan::UnwrapMethod::GrayCode;
            const auto report =
                mmscan::cmd_reconstruct(rec_dataset, rec_calib, rec_pose, method, rec_out, rec_binary);
            std::cout << "points: " << report.point_count << "\n";
        } else if (trk->parsed()) {
            mmscan::cmd_track(trk_dataset, trk_calib, trk_out);
            std::cout << "poses written to " << trk_out << "\n";
        } else if (fus->parsed()) {
            const auto report = mmscan::cmd_fuse(split_list(fus_sl), fus_dataset, fus_probe, fus_out,
                                                 fus_binary);
            std::cout << "SL points: " << report.sl_points << ", US points: " << report.us_points
                      << "\n";
        } else if (eva->parsed()) {
            mmscan::cmd_evaluate(split_list(eva_inputs), eva_truth, eva_out, eva_det);
            std::cout << "report written to " << eva_out << "\n";
        }
    } catch (const mmscan::DegenerateInput& e) {
        std::cerr << "degenerate input: " << e.what() << "\n";
        return 2;
    } catch (const mmscan::NonConvergence& e) {
        std::cerr << "non-convergence: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
